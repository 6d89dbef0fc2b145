"""Unstable periodic orbits around the 2-DoF index-1 saddle and their tube manifolds.

The orbits are brake orbits: they start at rest on the zero-velocity curve,
``(x0, y0, 0, 0)``, and reach the opposite turning point at half period.  A
one-parameter Newton shooting (x0 held fixed, y0 corrected) makes the half
period state have ``p_x = p_y = 0``; time-reversal symmetry then closes the
orbit.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .integrator import (DEFAULT_CONFIG, Event, EventNotFound, IntegratorConfig, Trajectory,
                         crossings, integrate, integrate_to_event_with_stm, integrate_with_stm)
from .models import (Barbanis2DoF, Equilibrium, PhaseState, SystemModel, as_vector,
                     saddle_eigensystem)
from .slices import SliceSpec

log = logging.getLogger(__name__)

_HALF_PERIOD = Event(2, 0.0, 0)  # p_x = 0


class CorrectionError(RuntimeError):
    pass


class SingularCorrection(CorrectionError):
    """The shooting derivative vanished."""


class ContinuationError(RuntimeError):
    pass


@dataclass(frozen=True)
class ContinuationConfig:
    seed_amplitude: float = 1e-4
    d_tol: float = 1e-10
    max_iter: int = 25
    max_halvings: int = 6
    step_init: float | None = None       # first extrapolation step in x0; default seed_amplitude
    step_max: float = 0.05
    step_growth: float = 2.0
    energy_tol: float = 1e-10
    max_members: int = 2000
    max_bisections: int = 80
    samples: int = 1001
    saddle: str = "bottom"

    def __post_init__(self):
        if not self.seed_amplitude > 0:
            raise ValueError("seed amplitude must be positive")
        if not (self.d_tol > 0 and self.energy_tol > 0):
            raise ValueError("tolerances must be positive")


@dataclass(eq=False)
class PeriodicOrbit:
    ic: np.ndarray
    period: float
    energy: float
    iterations: int = 0
    residuals: list[float] = field(default_factory=list)
    spectrum: np.ndarray | None = None
    monodromy: np.ndarray | None = None
    samples_t: np.ndarray | None = None
    samples_x: np.ndarray | None = None
    samples_stm: np.ndarray | None = None
    periodicity_residual: float | None = None

    @property
    def state(self) -> PhaseState:
        return PhaseState.from_vector(self.ic)

    @property
    def finalized(self) -> bool:
        return self.spectrum is not None

    def to_row(self) -> dict:
        row = {"x0": self.ic[0], "y0": self.ic[1], "px0": self.ic[2], "py0": self.ic[3],
               "period": self.period, "energy": self.energy}
        if self.spectrum is not None:
            row.update({f"lambda{i + 1}": complex(v) for i, v in enumerate(self.spectrum)})
        return row


def seed_guess(model: Barbanis2DoF, saddle: Equilibrium, A_x: float) -> PhaseState:
    """Initial guess displaced by ``A_x`` along the center eigenvector.

    The x-offset is ``+A_x`` and the y-offset ``A_x * k2`` with ``k2`` the
    center-mode ratio at the given saddle.
    """
    eig = saddle_eigensystem(model, saddle)
    q = saddle.state.q + A_x * np.array([1.0, eig.k2_center])
    return PhaseState(q, np.zeros(2))


def _half_period(model, x0, integ):
    st, t1, phi = integrate_to_event_with_stm(model, x0, _HALF_PERIOD, integ)
    return st.vector, t1, phi


def differential_correct(model: Barbanis2DoF, guess, config: ContinuationConfig = ContinuationConfig(),
                         integ: IntegratorConfig = DEFAULT_CONFIG, finalize: bool = True) -> PeriodicOrbit:
    """Correct ``guess = (x0, y0, 0, 0)`` into a brake periodic orbit.

    The first-order update keeps ``x0`` fixed and uses the STM entries of the
    ``p_x`` and ``p_y`` rows with respect to ``y0`` together with the
    accelerations at the half-period crossing.
    """
    x = as_vector(guess).copy()
    if x.size != 4 or np.any(x[2:] != 0.0):
        raise CorrectionError("guess must be a rest state (x0, y0, 0, 0)")
    try:
        x1, t1, phi = _half_period(model, x, integ)
    except EventNotFound as exc:
        raise CorrectionError(f"no half-period crossing from guess: {exc}") from exc
    residuals = [abs(x1[3])]
    it = 0
    while abs(x1[3]) >= config.d_tol:
        if it >= config.max_iter:
            raise CorrectionError(f"no convergence after {it} iterations (|p_y| = {abs(x1[3]):.3e})")
        f1 = model.vector_field(x1)
        if f1[2] == 0.0:
            raise SingularCorrection("zero p_x acceleration at the half-period crossing")
        denom = phi[3, 1] - phi[2, 1] * f1[3] / f1[2]
        if abs(denom) < 1e-14:
            raise SingularCorrection(f"vanishing correction denominator ({denom:.3e})")
        dy0 = -x1[3] / denom
        scale = 1.0
        for _ in range(config.max_halvings + 1):
            trial = x.copy()
            trial[1] += scale * dy0
            try:
                tx1, tt1, tphi = _half_period(model, trial, integ)
            except EventNotFound:
                scale *= 0.5
                continue
            if abs(tx1[3]) < abs(x1[3]):
                break
            scale *= 0.5
        else:
            raise CorrectionError("damped correction failed to reduce the residual")
        x, x1, t1, phi = trial, tx1, tt1, tphi
        it += 1
        residuals.append(abs(x1[3]))
    po = PeriodicOrbit(ic=x, period=2.0 * t1, energy=model.energy(x), iterations=it, residuals=residuals)
    if finalize:
        finalize_orbit(model, po, config.samples, integ)
    return po


def finalize_orbit(model: SystemModel, po: PeriodicOrbit, samples: int = 1001,
                   integ: IntegratorConfig = DEFAULT_CONFIG) -> PeriodicOrbit:
    """Sample one period with the STM; fill monodromy, spectrum and residual."""
    ts = np.linspace(0.0, po.period, samples)
    traj, M = integrate_with_stm(model, po.ic, (0.0, po.period), integ, t_eval=ts)
    po.samples_t = traj.t
    po.samples_x = traj.x
    po.samples_stm = traj.stm
    po.monodromy = M
    po.spectrum = sort_spectrum(np.linalg.eigvals(M))
    po.periodicity_residual = float(np.max(np.abs(traj.x[-1] - po.ic)))
    return po


def sort_spectrum(ev: np.ndarray) -> np.ndarray:
    """Order as ``(lambda_max, lambda_min, rest...)`` by modulus."""
    ev = np.asarray(ev, dtype=complex)
    order = np.argsort(-np.abs(ev))
    big, small = order[0], order[-1]
    rest = [i for i in order if i not in (big, small)]
    rest.sort(key=lambda i: (ev[i].real, ev[i].imag))
    return ev[[big, small] + rest]


def monodromy(model: SystemModel, po: PeriodicOrbit, integ: IntegratorConfig = DEFAULT_CONFIG) -> np.ndarray:
    """Eigenvalues of ``Phi(T, 0)`` sorted so the first exceeds one in modulus."""
    if po.monodromy is None:
        finalize_orbit(model, po, integ=integ)
    return po.spectrum


# ---------------------------------------------------------------------------
# continuation
# ---------------------------------------------------------------------------

def _guess_from(ic_a, ic_b, h):
    delta = ic_b - ic_a
    return ic_b + delta * (h / abs(delta[0]))


def _bisect_energy(model, lo: PeriodicOrbit, hi: PeriodicOrbit, e, config, integ) -> PeriodicOrbit:
    """Bracketed root of ``E(x0) = e`` with a correction at every trial ``x0``.

    Regula falsi with the Illinois modification, falling back to plain
    bisection when the interpolated point leaves the bracket interior.
    """
    a, b = lo, hi
    fa, fb = a.energy - e, b.energy - e
    side = 0
    best = a if abs(fa) < abs(fb) else b
    for _ in range(config.max_bisections):
        if abs(best.energy - e) < config.energy_tol:
            return best
        xa, xb = a.ic[0], b.ic[0]
        xm = xb - fb * (xb - xa) / (fb - fa)
        lo_x, hi_x = min(xa, xb), max(xa, xb)
        if not (lo_x < xm < hi_x) or abs(xb - xa) < 1e-15:
            xm = 0.5 * (xa + xb)
        w = (xm - xa) / (xb - xa)
        guess = a.ic + w * (b.ic - a.ic)
        guess[0] = xm
        guess[2:] = 0.0
        m = differential_correct(model, guess, config, integ, finalize=False)
        fm = m.energy - e
        if abs(fm) < abs(best.energy - e):
            best = m
        if fm == 0.0:
            return m
        if (fm > 0) == (fb > 0):
            b, fb = m, fm
            if side == 1:
                fa *= 0.5
            side = 1
        else:
            a, fa = m, fm
            if side == -1:
                fb *= 0.5
            side = -1
    if abs(best.energy - e) < config.energy_tol:
        return best
    raise ContinuationError(f"energy bisection did not reach tolerance (|dE| = {abs(best.energy - e):.3e})")


def orbit_family(model: Barbanis2DoF, energies, config: ContinuationConfig = ContinuationConfig(),
                 integ: IntegratorConfig = DEFAULT_CONFIG, return_members: bool = False):
    """Periodic orbits at each requested total energy, by one continuation sweep.

    Returns the list of target orbits (finalized, ascending energy order) and,
    with ``return_members``, the raw family generated along the way.
    """
    targets = sorted(float(e) for e in np.atleast_1d(energies))
    saddle = model.saddle(config.saddle)
    for e in targets:
        if e <= saddle.energy:
            raise ContinuationError(f"target energy {e} is not above the critical energy {saddle.energy}")
    A = config.seed_amplitude
    members = [differential_correct(model, seed_guess(model, saddle, A), config, integ, finalize=False),
               differential_correct(model, seed_guess(model, saddle, 2 * A), config, integ, finalize=False)]
    h = config.step_init or A
    out: list[PeriodicOrbit] = []
    ti = 0
    while ti < len(targets):
        e = targets[ti]
        prev, last = members[-2], members[-1]
        if prev.energy <= e <= last.energy:
            po = _bisect_energy(model, prev, last, e, config, integ)
            finalize_orbit(model, po, config.samples, integ)
            out.append(po)
            ti += 1
            continue
        if len(members) >= config.max_members:
            raise ContinuationError(f"family did not reach energy {e} within {config.max_members} members")
        guess = _guess_from(prev.ic, last.ic, h)
        guess[2:] = 0.0
        try:
            po = differential_correct(model, guess, config, integ, finalize=False)
        except CorrectionError as exc:
            h *= 0.5
            log.debug("continuation step rejected (%s); h -> %.3g", exc, h)
            if h < 1e-9:
                raise ContinuationError(f"continuation step collapsed near E = {last.energy}") from exc
            continue
        if po.energy <= last.energy:
            raise ContinuationError(f"family fold: energy stopped increasing at E = {last.energy:.12g}")
        members.append(po)
        if po.iterations <= 3:
            h = min(h * config.step_growth, config.step_max)
    if return_members:
        return out, members
    return out


def continue_family(model: Barbanis2DoF, config: ContinuationConfig, target_energy: float,
                    integ: IntegratorConfig = DEFAULT_CONFIG) -> list[PeriodicOrbit]:
    """Family members generated on the way to ``target_energy``; the last is the target orbit."""
    out, members = orbit_family(model, [target_energy], config, integ, return_members=True)
    lower = [m for m in members if m.energy < target_energy]
    return lower + out


# ---------------------------------------------------------------------------
# manifolds
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ManifoldConfig:
    epsilon: float = 1e-6
    stability: str = "both"       # "stable", "unstable" or "both"
    branch: str = "both"          # "+", "-" or "both"
    time: float | None = None     # globalization time, default 4 periods
    n_fibers: int = 50

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.stability not in ("stable", "unstable", "both"):
            raise ValueError(f"bad stability {self.stability!r}")
        if self.branch not in ("+", "-", "both"):
            raise ValueError(f"bad branch {self.branch!r}")
        if self.n_fibers < 1:
            raise ValueError("need at least one fiber")


@dataclass
class Fiber:
    stability: str
    branch: str
    phase: float
    seed: np.ndarray
    trajectory: Trajectory | None = None

    @property
    def direction(self) -> int:
        return 1 if self.stability == "unstable" else -1


@dataclass
class TubeManifold:
    po: PeriodicOrbit
    fibers: list[Fiber]
    config: ManifoldConfig

    def select(self, stability=None, branch=None) -> list[Fiber]:
        return [f for f in self.fibers
                if (stability is None or f.stability == stability) and (branch is None or f.branch == branch)]


def _oriented(v: np.ndarray) -> np.ndarray:
    v = np.real(v).astype(float)
    v /= np.linalg.norm(v)
    return v if v[0] >= 0 else -v


def monodromy_eigenvectors(po: PeriodicOrbit) -> tuple[np.ndarray, np.ndarray]:
    """Unit ``(unstable, stable)`` eigenvectors of the monodromy, x-component >= 0."""
    if po.monodromy is None:
        raise ValueError("orbit is not finalized")
    w, V = np.linalg.eig(po.monodromy)
    mod = np.abs(w)
    iu, is_ = int(np.argmax(mod)), int(np.argmin(mod))
    if not (mod[iu] > 1 + 1e-6 and abs(w[iu].imag) < 1e-8 * mod[iu]):
        raise ValueError("monodromy spectrum is not hyperbolic")
    return _oriented(V[:, iu]), _oriented(V[:, is_])


def globalize_manifold(model: SystemModel, po: PeriodicOrbit, mcfg: ManifoldConfig = ManifoldConfig(),
                       integ: IntegratorConfig = DEFAULT_CONFIG, integrate_fibers: bool = True) -> TubeManifold:
    """Seed and integrate stable/unstable tube fibers around ``po``.

    Fibers sit at ``n_fibers`` equally spaced phases; the monodromy
    eigenvectors are carried there by the STM and renormalized.  Unstable
    fibers run forward, stable fibers backward.
    """
    if po.samples_stm is None:
        finalize_orbit(model, po, integ=integ)
    eu, es = monodromy_eigenvectors(po)
    dur = mcfg.time if mcfg.time is not None else 4.0 * po.period
    stabs = ("stable", "unstable") if mcfg.stability == "both" else (mcfg.stability,)
    branches = ("+", "-") if mcfg.branch == "both" else (mcfg.branch,)
    n_s = po.samples_t.size
    idx = [int(round(k * (n_s - 1) / mcfg.n_fibers)) for k in range(mcfg.n_fibers)]
    fibers = []
    for stab in stabs:
        e0 = eu if stab == "unstable" else es
        for k in idx:
            v = po.samples_stm[k] @ e0
            v /= np.linalg.norm(v)
            for br in branches:
                sgn = 1.0 if br == "+" else -1.0
                seed = po.samples_x[k] + sgn * mcfg.epsilon * v
                fib = Fiber(stab, br, float(po.samples_t[k]), seed)
                if integrate_fibers:
                    fib.trajectory = integrate(model, seed, fib.direction * dur, integ)
                fibers.append(fib)
    return TubeManifold(po, fibers, mcfg)


def po_slice_intersection(obj, slc: SliceSpec, model: SystemModel, max_time: float = 60.0,
                          first_only: bool = True, integ: IntegratorConfig = DEFAULT_CONFIG,
                          return_states: bool = False):
    """Crossings of an orbit or tube with a section-type slice, projected to the slice plane.

    For a :class:`PeriodicOrbit` every crossing over one period is returned.
    For a :class:`TubeManifold` each fiber is followed from its seed in its
    own time direction (forward for unstable, backward for stable) and the
    first crossing (or all, with ``first_only=False``) within ``max_time`` is kept.
    """
    ev = slc.section_event()
    pts, states = [], []
    if isinstance(obj, PeriodicOrbit):
        _, xs, _ = crossings(model, obj.ic, ev, 16, obj.period * (1 - 1e-9), integ)
        for s in xs:
            pts.append(slc.project(s))
            states.append(s)
    elif isinstance(obj, TubeManifold):
        k = 1 if first_only else 64
        for fib in obj.fibers:
            _, xs, _ = crossings(model, fib.seed, ev, k, fib.direction * max_time, integ)
            for s in xs:
                pts.append(slc.project(s))
                states.append(s)
    else:
        raise TypeError("expected a PeriodicOrbit or TubeManifold")
    if not pts:
        raise EventNotFound(f"no crossings with {slc.name or 'slice'}")
    pts = np.array(pts)
    if return_states:
        return pts, np.array(states)
    return pts
