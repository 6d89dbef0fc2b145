"""Hénon-Heiles type model Hamiltonians with index-1 saddles.

Two systems are provided behind one interface:

* :class:`Barbanis2DoF` -- ``V = w_x^2 x^2/2 + w_y^2 y^2/2 + delta x y^2``
* :class:`BarbanisContopoulos3DoF` --
  ``V = w_x^2 x^2/2 + w_y^2 y^2/2 + w_z^2 z^2/2 - eps x^2 y - eta x^2 z``

Both use unit masses, so ``H = |p|^2 / 2 + V(q)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

from . import _core


class ModelError(ValueError):
    """Invalid model parameters or a dimension mismatch."""


@dataclass(frozen=True)
class Params2D:
    omega_x: float = 1.0
    omega_y: float = 1.1
    delta: float = -0.11

    def __post_init__(self):
        if not (self.omega_x > 0 and self.omega_y > 0):
            raise ModelError("frequencies must be positive")
        if self.delta == 0:
            raise ModelError("coupling delta must be nonzero")


@dataclass(frozen=True)
class Params3D:
    omega_x_sq: float = 0.9
    omega_y_sq: float = 1.6
    omega_z_sq: float = 0.4
    epsilon: float = 0.08
    eta: float = 0.01

    def __post_init__(self):
        if min(self.omega_x_sq, self.omega_y_sq, self.omega_z_sq) <= 0:
            raise ModelError("squared frequencies must be positive")
        if self.epsilon == 0 and self.eta == 0:
            raise ModelError("epsilon and eta cannot both vanish")


@dataclass(frozen=True)
class PhaseState:
    """A phase-space point ``(q, p)`` at time ``t``."""

    q: np.ndarray
    p: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float).reshape(-1)
        p = np.asarray(self.p, dtype=float).reshape(-1)
        if q.shape != p.shape or q.size not in (2, 3):
            raise ModelError(f"q and p must both have 2 or 3 components, got {q.size} and {p.size}")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "t", float(self.t))

    @classmethod
    def from_vector(cls, x, t: float = 0.0) -> "PhaseState":
        x = np.asarray(x, dtype=float).reshape(-1)
        d = x.size // 2
        return cls(x[:d], x[d:], t)

    @property
    def dof(self) -> int:
        return self.q.size

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.q, self.p])


def as_vector(state) -> np.ndarray:
    """Phase vector of a :class:`PhaseState` or array-like."""
    if isinstance(state, PhaseState):
        return state.vector
    return np.asarray(state, dtype=float).reshape(-1)


@dataclass(frozen=True)
class Equilibrium:
    state: PhaseState
    energy: float
    kind: Literal["saddle", "center"]
    label: str = ""


class SystemModel:
    """Common interface of the two model Hamiltonians.

    Subclasses fill in ``kind`` (compiled-kernel selector), ``dof`` and the flat
    parameter array ``par`` used by the compiled kernels.
    """

    kind: int
    dof: int
    name: str
    par: np.ndarray

    @property
    def n(self) -> int:
        return 2 * self.dof

    def _check_q(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        if q.shape[-1] != self.dof:
            raise ModelError(f"{self.name} expects {self.dof} coordinates, got {q.shape[-1]}")
        return q

    def _check_x(self, state) -> np.ndarray:
        x = as_vector(state)
        if x.size != self.n:
            raise ModelError(f"{self.name} expects a {self.n}-component state, got {x.size}")
        return x

    # -- energetics ---------------------------------------------------------
    def potential(self, q) -> np.ndarray | float:
        """Potential energy; broadcasts over leading axes of ``q``."""
        raise NotImplementedError

    def gradient(self, q) -> np.ndarray:
        q = self._check_q(q)
        out = np.empty(self.dof)
        _core.gradient(self.kind, self.par, q.reshape(-1), out)
        return out

    def hessian(self, q) -> np.ndarray:
        q = self._check_q(q)
        out = np.empty((self.dof, self.dof))
        _core.hessian(self.kind, self.par, q.reshape(-1), out)
        return out

    def energy(self, state) -> float:
        x = self._check_x(state)
        p = x[self.dof:]
        return float(0.5 * p @ p + self.potential(x[: self.dof]))

    def energies(self, states: np.ndarray) -> np.ndarray:
        states = np.asarray(states, dtype=float)
        p = states[..., self.dof:]
        return 0.5 * np.sum(p * p, axis=-1) + self.potential(states[..., : self.dof])

    # -- flow -----------------------------------------------------------------
    def vector_field(self, state) -> np.ndarray:
        x = self._check_x(state)
        return np.concatenate([x[self.dof:], -self.gradient(x[: self.dof])])

    def jacobian(self, state) -> np.ndarray:
        x = self._check_x(state)
        d = self.dof
        J = np.zeros((2 * d, 2 * d))
        J[:d, d:] = np.eye(d)
        J[d:, :d] = -self.hessian(x[:d])
        return J

    # -- structure --------------------------------------------------------------
    def equilibria(self) -> list[Equilibrium]:
        raise NotImplementedError

    def saddles(self) -> list[Equilibrium]:
        return [e for e in self.equilibria() if e.kind == "saddle"]

    def saddle(self, which: str | None = None) -> Equilibrium:
        raise NotImplementedError

    @property
    def critical_energy(self) -> float:
        return self.saddles()[0].energy

    def params_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Barbanis2DoF(SystemModel):
    """Coupled harmonic (Barbanis) 2-DoF Hamiltonian."""

    params: Params2D = field(default_factory=Params2D)
    kind = _core.KIND_2DOF
    dof = 2
    name = "barbanis2dof"

    @property
    def par(self) -> np.ndarray:
        p = self.params
        return np.array([p.omega_x ** 2, p.omega_y ** 2, p.delta])

    def potential(self, q):
        q = self._check_q(q)
        p = self.params
        x, y = q[..., 0], q[..., 1]
        return 0.5 * p.omega_x ** 2 * x ** 2 + 0.5 * p.omega_y ** 2 * y ** 2 + p.delta * x * y ** 2

    def equilibria(self) -> list[Equilibrium]:
        p = self.params
        wx, wy, d = p.omega_x, p.omega_y, p.delta
        xs = -wy ** 2 / (2 * d)
        ys = abs(wx * wy / (math.sqrt(2) * d))
        ec = wx ** 2 * wy ** 4 / (8 * d ** 2)
        zero = np.zeros(2)
        out = [Equilibrium(PhaseState(zero, zero), 0.0, "center", "origin")]
        for label, sgn in (("top", 1.0), ("bottom", -1.0)):
            out.append(Equilibrium(PhaseState([xs, sgn * ys], zero), ec, "saddle", label))
        return out

    def saddle(self, which: str | None = None) -> Equilibrium:
        """``"bottom"`` (y < 0, default) or ``"top"`` index-1 saddle."""
        which = which or "bottom"
        for e in self.saddles():
            if e.label == which:
                return e
        raise ModelError(f"unknown saddle {which!r}; expected 'top' or 'bottom'")

    def params_dict(self) -> dict:
        p = self.params
        return {"model": self.name, "omega_x": p.omega_x, "omega_y": p.omega_y, "delta": p.delta}


@dataclass(frozen=True)
class BarbanisContopoulos3DoF(SystemModel):
    """Coupled harmonic 3-DoF Hamiltonian with two index-1 saddles at ``x = ±x_s``."""

    params: Params3D = field(default_factory=Params3D)
    kind = _core.KIND_3DOF
    dof = 3
    name = "barbanis3dof"

    @property
    def par(self) -> np.ndarray:
        p = self.params
        return np.array([p.omega_x_sq, p.omega_y_sq, p.omega_z_sq, p.epsilon, p.eta])

    def potential(self, q):
        q = self._check_q(q)
        p = self.params
        x, y, z = q[..., 0], q[..., 1], q[..., 2]
        return (0.5 * p.omega_x_sq * x ** 2 + 0.5 * p.omega_y_sq * y ** 2 + 0.5 * p.omega_z_sq * z ** 2
                - p.epsilon * x ** 2 * y - p.eta * x ** 2 * z)

    def equilibria(self) -> list[Equilibrium]:
        p = self.params
        wx2, wy2, wz2, eps, eta = p.omega_x_sq, p.omega_y_sq, p.omega_z_sq, p.epsilon, p.eta
        den = 2 * (eps ** 2 * wz2 + eta ** 2 * wy2)
        xs = math.sqrt(wx2 * wy2 * wz2 / den)
        ys = eps * wx2 * wz2 / den
        zs = eta * wx2 * wy2 / den
        ec = wx2 * wx2 * wy2 * wz2 / (4 * den)
        zero = np.zeros(3)
        out = [Equilibrium(PhaseState(zero, zero), 0.0, "center", "origin")]
        for label, sgn in (("plus", 1.0), ("minus", -1.0)):
            out.append(Equilibrium(PhaseState([sgn * xs, ys, zs], zero), ec, "saddle", label))
        return out

    def saddle(self, which: str | None = None) -> Equilibrium:
        """``"plus"`` (x > 0, default) or ``"minus"`` index-1 saddle."""
        which = which or "plus"
        for e in self.saddles():
            if e.label == which:
                return e
        raise ModelError(f"unknown saddle {which!r}; expected 'plus' or 'minus'")

    def params_dict(self) -> dict:
        p = self.params
        return {"model": self.name, "omega_x_sq": p.omega_x_sq, "omega_y_sq": p.omega_y_sq,
                "omega_z_sq": p.omega_z_sq, "epsilon": p.epsilon, "eta": p.eta}


def model_from_dict(d: dict) -> SystemModel:
    d = dict(d)
    name = d.pop("model")
    if name == Barbanis2DoF.name:
        return Barbanis2DoF(Params2D(**d))
    if name == BarbanisContopoulos3DoF.name:
        return BarbanisContopoulos3DoF(Params3D(**d))
    raise ModelError(f"unknown model {name!r}")


# ---------------------------------------------------------------------------
# linearization at the index-1 saddle
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SaddleEigensystem:
    """Eigen-structure of the Jacobian at an index-1 saddle of the 2-DoF model.

    ``u_plus``/``u_minus`` belong to ``±lam``; ``w_real + i w_imag`` belongs to
    ``+i omega``.  ``k2_saddle`` and ``k2_center`` are the y-components of the
    eigenvectors normalized to unit x-component.
    """

    lam: float
    omega: float
    u_plus: np.ndarray
    u_minus: np.ndarray
    w_real: np.ndarray
    w_imag: np.ndarray
    k2_saddle: float
    k2_center: float
    equilibrium: Equilibrium

    @property
    def w(self) -> np.ndarray:
        return self.w_real + 1j * self.w_imag

    def pairs(self) -> list[tuple[complex, np.ndarray]]:
        """All four (eigenvalue, eigenvector) pairs."""
        w = self.w
        return [(self.lam, self.u_plus), (-self.lam, self.u_minus),
                (1j * self.omega, w), (-1j * self.omega, np.conj(w))]

    @property
    def limiting_period(self) -> float:
        return 2 * math.pi / self.omega


def quartic_roots(omega_x: float, omega_y: float) -> tuple[float, float]:
    """``(lam, omega)`` from ``b^4 + w_x^2 b^2 - 2 w_x^2 w_y^2 = 0``."""
    wx2 = omega_x ** 2
    disc = math.sqrt(wx2 ** 2 + 8 * wx2 * omega_y ** 2)
    alpha1 = 0.5 * (-wx2 + disc)
    alpha2 = 0.5 * (-wx2 - disc)
    return math.sqrt(alpha1), math.sqrt(-alpha2)


def saddle_eigensystem(model: Barbanis2DoF, eq: Equilibrium) -> SaddleEigensystem:
    if eq.kind != "saddle":
        raise ModelError("eigensystem requested at an equilibrium that is not an index-1 saddle")
    if not isinstance(model, Barbanis2DoF):
        raise ModelError("closed-form saddle eigensystem is only available for the 2-DoF model")
    p = model.params
    lam, om = quartic_roots(p.omega_x, p.omega_y)
    J = model.jacobian(eq.state)
    a, b = J[2, 0], J[2, 1]
    # row 3 of J v = g v with v = (1, k2, g, g k2): a + b k2 = g^2
    k2s = (lam ** 2 - a) / b
    k2c = (-om ** 2 - a) / b
    u_plus = np.array([1.0, k2s, lam, lam * k2s])
    u_minus = np.array([1.0, k2s, -lam, -lam * k2s])
    w_real = np.array([1.0, k2c, 0.0, 0.0])
    w_imag = np.array([0.0, 0.0, om, om * k2c])
    return SaddleEigensystem(lam, om, u_plus, u_minus, w_real, w_imag, k2s, k2c, eq)


def linear_solution(eig: SaddleEigensystem, A1: float, A2: float, beta: complex, t) -> np.ndarray:
    """Offset from the saddle of the general solution of the linearized flow.

    ``t`` may be a scalar or an array; the result has shape ``t.shape + (4,)``.
    """
    t = np.asarray(t, dtype=float)
    tt = t[..., None]
    return (A1 * np.exp(eig.lam * tt) * eig.u_plus + A2 * np.exp(-eig.lam * tt) * eig.u_minus
            + 2 * np.real(beta * np.exp(1j * eig.omega * tt) * eig.w))


# ---------------------------------------------------------------------------
# symmetries
# ---------------------------------------------------------------------------

_SYMMETRY_SIGNS = {
    # (dof, kind) -> sign pattern on (q, p); s_t also reverses time
    (2, "s_y"): ([1, -1], [1, -1], 1),
    (2, "s_t"): ([1, 1], [-1, -1], -1),
    (3, "s_x"): ([-1, 1, 1], [-1, 1, 1], 1),
    (3, "s_t3"): ([1, 1, 1], [-1, -1, -1], -1),
    (3, "s_t"): ([1, 1, 1], [-1, -1, -1], -1),
}


def apply_symmetry(kind: str, state) -> PhaseState:
    """Image of ``state`` under a discrete symmetry of the equations of motion.

    ``s_y`` (2-DoF reflection y -> -y), ``s_x`` (3-DoF reflection x -> -x) and
    the time reversals ``s_t`` / ``s_t3`` (p -> -p, t -> -t).
    """
    if not isinstance(state, PhaseState):
        state = PhaseState.from_vector(state)
    key = (state.dof, kind)
    if key not in _SYMMETRY_SIGNS:
        raise ModelError(f"symmetry {kind!r} is not defined for a {state.dof}-DoF state")
    sq, sp, st = _SYMMETRY_SIGNS[key]
    return PhaseState(state.q * np.array(sq), state.p * np.array(sp), st * state.t)


def symmetry_matrix(kind: str, dof: int) -> np.ndarray:
    if (dof, kind) not in _SYMMETRY_SIGNS:
        raise ModelError(f"symmetry {kind!r} is not defined for {dof} DoF")
    sq, sp, _ = _SYMMETRY_SIGNS[(dof, kind)]
    return np.diag(np.array(sq + sp, dtype=float))


# ---------------------------------------------------------------------------
# Hill's region
# ---------------------------------------------------------------------------

def hill_mask(model: SystemModel, e: float, q_window: Sequence[tuple[float, float]],
              resolution: int | tuple[int, int], axes: tuple[int, int] = (0, 1),
              fixed: dict[int, float] | None = None) -> np.ndarray:
    """Boolean grid, true where ``V(q) <= e``.

    The grid is indexed ``[i, j]`` with ``i`` along ``axes[0]``.  For the 3-DoF
    model the configuration coordinate not in ``axes`` is held at ``fixed`` or,
    by default, at the saddle value.
    """
    if isinstance(resolution, int):
        resolution = (resolution, resolution)
    if min(resolution) < 2:
        raise ModelError("resolution must be at least 2 per axis")
    (a0, a1), (b0, b1) = q_window
    if not (a1 > a0 and b1 > b0):
        raise ModelError("empty configuration window")
    u = np.linspace(a0, a1, resolution[0])
    v = np.linspace(b0, b1, resolution[1])
    U, Vv = np.meshgrid(u, v, indexing="ij")
    q = np.empty(U.shape + (model.dof,))
    base = model.saddle().state.q
    for i in range(model.dof):
        q[..., i] = base[i]
    for i, val in (fixed or {}).items():
        q[..., i] = val
    q[..., axes[0]] = U
    q[..., axes[1]] = Vv
    return model.potential(q) <= e
