"""Isoenergetic two-dimensional surfaces and momentum recovery on them."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .models import ModelError, PhaseState, SystemModel

class EmptySliceError(ModelError):
    """No point of the slice window lies on the energy shell."""


COORD_NAMES = {2: ("x", "y", "px", "py"), 3: ("x", "y", "z", "px", "py", "pz")}


@dataclass(frozen=True)
class SliceSpec:
    """A 2-D surface in phase space on a fixed energy shell.

    Phase-space indices follow ``(q..., p...)``.  ``fixed`` pins coordinates,
    ``swept`` are the two grid coordinates, and the momentum at ``recovered``
    is solved from ``H = e`` taking the root with sign ``sign``.
    """

    dof: int
    fixed: dict[int, float]
    swept: tuple[int, int]
    ranges: tuple[tuple[float, float], tuple[float, float]]
    recovered: int
    sign: int = 1
    name: str = ""

    def __post_init__(self):
        n = 2 * self.dof
        used = set(self.fixed) | set(self.swept) | {self.recovered}
        if self.dof not in (2, 3):
            raise ModelError("slices are defined for 2 or 3 DoF")
        if used != set(range(n)) or len(self.fixed) + 3 != n:
            raise ModelError("fixed, swept and recovered coordinates must partition the phase space")
        if self.recovered < self.dof:
            raise ModelError("the recovered coordinate must be a momentum")
        if self.sign not in (1, -1):
            raise ModelError("sign condition must be +1 or -1 (strict)")
        for lo, hi in self.ranges:
            if not hi > lo:
                raise ModelError("empty slice window")
        object.__setattr__(self, "fixed", {int(k): float(v) for k, v in self.fixed.items()})

    # -- constructors -------------------------------------------------------
    @classmethod
    def uxpx_2dof(cls, k: float = 0.0, x_range=(-5.6, 5.6), px_range=(-5.6, 5.6)) -> "SliceSpec":
        """``{y = k, p_y > 0}`` swept over ``(x, p_x)``."""
        return cls(2, {1: k}, (0, 2), (tuple(x_range), tuple(px_range)), 3, 1, f"U_xpx+({k:g})")

    @classmethod
    def bottleneck_3dof(cls, model: SystemModel, plane: str, ranges, saddle: str | None = None) -> "SliceSpec":
        """``U_xpx``, ``U_ypy`` or ``U_zpz`` through the chosen 3-DoF saddle."""
        q = model.saddle(saddle).state.q
        if plane == "x":
            return cls(3, {1: q[1], 2: q[2], 4: 0.0}, (0, 3), ranges, 5, 1, "U_xpx+")
        if plane == "y":
            return cls(3, {0: q[0], 2: q[2], 3: 0.0}, (1, 4), ranges, 5, 1, "U_ypy+")
        if plane == "z":
            return cls(3, {0: q[0], 1: q[1], 3: 0.0}, (2, 5), ranges, 4, 1, "U_zpz+")
        raise ModelError(f"unknown plane {plane!r}")

    # -- geometry -----------------------------------------------------------
    def axes(self, resolution) -> tuple[np.ndarray, np.ndarray]:
        n1, n2 = (resolution, resolution) if isinstance(resolution, int) else resolution
        return (np.linspace(*self.ranges[0], n1), np.linspace(*self.ranges[1], n2))

    def cell_size(self, resolution) -> tuple[float, float]:
        u, v = self.axes(resolution)
        return (u[1] - u[0], v[1] - v[0])

    def labels(self) -> tuple[str, str]:
        names = COORD_NAMES[self.dof]
        return names[self.swept[0]], names[self.swept[1]]

    def section_event(self):
        """Directional section condition for a single-constraint 2-DoF slice."""
        from .integrator import Event

        cfg = [i for i in self.fixed if i < self.dof]
        if self.dof != 2 or len(cfg) != 1 or self.recovered != cfg[0] + self.dof:
            raise ModelError("slice is not a single-coordinate section")
        return Event(cfg[0], self.fixed[cfg[0]], self.sign)

    def project(self, state) -> tuple[float, float]:
        x = state.vector if isinstance(state, PhaseState) else np.asarray(state)
        return float(x[self.swept[0]]), float(x[self.swept[1]])

    def to_dict(self) -> dict:
        return {"dof": self.dof, "fixed": {str(k): v for k, v in self.fixed.items()},
                "swept": list(self.swept), "ranges": [list(r) for r in self.ranges],
                "recovered": self.recovered, "sign": self.sign, "name": self.name}

    @classmethod
    def from_dict(cls, d: dict) -> "SliceSpec":
        return cls(int(d["dof"]), {int(k): float(v) for k, v in d["fixed"].items()},
                   tuple(d["swept"]), tuple(tuple(r) for r in d["ranges"]),
                   int(d["recovered"]), int(d.get("sign", 1)), d.get("name", ""))


def momentum_on_shell(model: SystemModel, slc: SliceSpec, point, e: float) -> float | None:
    """Recovered momentum at ``point`` (swept coordinates) or ``None`` when off-shell.

    Returns ``None`` when the radicand is negative or when the root is zero,
    since the sign condition is strict.
    """
    states, mask = shell_states(model, slc, e, np.asarray(point, dtype=float).reshape(1, 2))
    if not mask[0]:
        return None
    return float(states[0, slc.recovered])


def state_on_shell(model: SystemModel, slc: SliceSpec, point, e: float) -> PhaseState | None:
    states, mask = shell_states(model, slc, e, np.asarray(point, dtype=float).reshape(1, 2))
    return PhaseState.from_vector(states[0]) if mask[0] else None


def shell_states(model: SystemModel, slc: SliceSpec, e: float, points: np.ndarray):
    """Vectorized reconstruction: ``(states (m, n), on_shell mask (m,))``."""
    if model.dof != slc.dof:
        raise ModelError("slice and model dimensions differ")
    points = np.asarray(points, dtype=float)
    m = points.shape[0]
    n = 2 * model.dof
    x = np.zeros((m, n))
    for i, v in slc.fixed.items():
        x[:, i] = v
    x[:, slc.swept[0]] = points[:, 0]
    x[:, slc.swept[1]] = points[:, 1]
    d = model.dof
    other = [i for i in range(d, n) if i != slc.recovered]
    rad = 2.0 * (e - model.potential(x[:, :d])) - np.sum(x[:, other] ** 2, axis=1)
    mask = rad > 0
    x[:, slc.recovered] = np.where(mask, slc.sign * np.sqrt(np.where(mask, rad, 0.0)), np.nan)
    x[~mask] = np.nan
    return x, mask


def grid_states(model: SystemModel, slc: SliceSpec, e: float, resolution):
    """On-shell initial conditions for every node of the slice grid.

    Returns ``(states (n1, n2, n), mask (n1, n2))`` indexed ``[i, j]`` with ``i``
    along the first swept coordinate.
    """
    u, v = slc.axes(resolution)
    U, V = np.meshgrid(u, v, indexing="ij")
    pts = np.stack([U.ravel(), V.ravel()], axis=1)
    states, mask = shell_states(model, slc, e, pts)
    return states.reshape(U.shape + (2 * model.dof,)), mask.reshape(U.shape)


def excess_to_total(model: SystemModel, delta_e: float, saddle: str | None = None) -> float:
    return model.saddle(saddle).energy + delta_e


@dataclass(frozen=True)
class EnergySpec:
    total: float
    critical: float
    excess: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "excess", self.total - self.critical)
        if not math.isfinite(self.total):
            raise ModelError("energy must be finite")

    @classmethod
    def from_model(cls, model: SystemModel, total: float | None = None, excess: float | None = None):
        ec = model.critical_energy
        if (total is None) == (excess is None):
            raise ModelError("give exactly one of total or excess energy")
        return cls(total if total is not None else ec + excess, ec)



def onshell_window(model: SystemModel, slc: SliceSpec, e: float, q_range=None, margin: float = 0.02):
    """Bounding box of the on-shell region of a ``(q_s, p_s)`` slice, padded by ``margin`` (relative).

    With the remaining momenta pinned at zero the region is
    ``p_s^2 < 2 (e - V)``, so its extent is the sublevel interval of ``V`` in
    ``q_s`` and ``|p_s| <= sqrt(2 (e - min V))``.  ``q_range`` clips the
    configuration interval (needed when it is unbounded); without it an
    unbounded region is an error.
    """
    from scipy.optimize import brentq, minimize_scalar

    d = model.dof
    qs, ps = slc.swept
    if qs >= d or ps != qs + d or any(v != 0.0 for i, v in slc.fixed.items() if i >= d):
        raise ModelError("window needs a (q, p_q) slice with the other momenta pinned at zero")
    base = np.zeros(d)
    for i, v in slc.fixed.items():
        if i < d:
            base[i] = v

    def V(s):
        q = base.copy()
        q[qs] = s
        return float(model.potential(q)) - e

    clip = q_range is not None
    a0, b0 = (float(q_range[0]), float(q_range[1])) if clip else (-60.0, 60.0)
    s_grid = np.linspace(a0, b0, 24001)
    vals = np.array([V(s) for s in s_grid])
    inside = np.flatnonzero(vals < 0)
    if inside.size == 0:
        raise EmptySliceError("slice has no on-shell points at this energy")
    a, b = inside[0], inside[-1]
    if not clip and (a == 0 or b == s_grid.size - 1):
        raise ModelError("on-shell region of the slice is unbounded; pass q_range")
    lo = s_grid[0] if a == 0 else brentq(V, s_grid[a - 1], s_grid[a], xtol=1e-14)
    hi = s_grid[-1] if b == s_grid.size - 1 else brentq(V, s_grid[b], s_grid[b + 1], xtol=1e-14)
    k = int(np.argmin(vals))
    vmin = minimize_scalar(V, bounds=(s_grid[max(k - 1, 0)], s_grid[min(k + 1, s_grid.size - 1)]),
                           method="bounded", options={"xatol": 1e-12}).fun
    vmin = min(vmin, vals[k])
    pmax = math.sqrt(-2.0 * vmin)
    pad_s = 0.0 if clip else margin * (hi - lo) / 2
    pad_p = margin * pmax
    return (lo - pad_s, hi + pad_s), (-pmax - pad_p, pmax + pad_p)
