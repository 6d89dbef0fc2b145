"""Lagrangian descriptors on isoenergetic slices.

The descriptor is ``M_p = int sum_i |dx_i/dt|^p dt`` over all phase-space
components, split into forward (``L^f``) and backward (``L^b``) halves.  In
fixed-time mode each half runs for ``tau`` or until the trajectory leaves the
escape ball; in variable-time mode it also stops when the configuration leaves
the saddle region.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _core
from .integrator import _REASONS, DEFAULT_CONFIG, IntegrationError, IntegratorConfig, _run
from .models import SystemModel, as_vector
from .slices import EmptySliceError, SliceSpec, grid_states

FIXED = "fixed_time"
VARIABLE = "variable_time"

FLAG_FORWARD_EXIT = 1
FLAG_BACKWARD_EXIT = 2

# 3-DoF saddle region used for the +x saddle; mirrored in x for the other one
_BOX_3DOF = ((9.0, 2.5, 1.0), (12.0, 7.5, 4.0))


@dataclass(frozen=True)
class LdConfig:
    p_exponent: float = 0.5
    tau: float = 50.0
    mode: str = FIXED
    saddle_region: tuple[tuple[float, ...], tuple[float, ...]] | None = None
    escape_radius: float = 50.0
    saddle: str | None = None

    def __post_init__(self):
        if not (0.0 < self.p_exponent <= 1.0):
            raise ValueError(f"p_exponent must lie in (0, 1], got {self.p_exponent}")
        if not self.tau >= 0.0:
            raise ValueError("tau must be non-negative")
        if self.mode not in (FIXED, VARIABLE):
            raise ValueError(f"mode must be {FIXED!r} or {VARIABLE!r}")
        if not self.escape_radius > 0:
            raise ValueError("escape_radius must be positive")
        if self.saddle_region is not None:
            lo, hi = self.saddle_region
            if len(lo) != len(hi) or not all(h > l for l, h in zip(lo, hi)):
                raise ValueError("saddle region must be a nonempty box")
            object.__setattr__(self, "saddle_region",
                               (tuple(float(v) for v in lo), tuple(float(v) for v in hi)))

    @property
    def variable(self) -> bool:
        return self.mode == VARIABLE

    def region(self, model: SystemModel) -> tuple[np.ndarray, np.ndarray]:
        """Saddle region as ``(lo, hi)`` arrays; explicit or the model default."""
        if self.saddle_region is not None:
            lo, hi = (np.asarray(b, dtype=float) for b in self.saddle_region)
            if lo.size != model.dof:
                raise ValueError("saddle region dimension does not match the model")
            return lo, hi
        return default_region(model, self.saddle)

    def to_dict(self) -> dict:
        d = asdict(self)
        if self.saddle_region is not None:
            d["saddle_region"] = [list(self.saddle_region[0]), list(self.saddle_region[1])]
        return d


def default_region(model: SystemModel, saddle: str | None = None):
    q = model.saddle(saddle).state.q
    if model.dof == 2:
        return q - 2.0, q + 2.0
    lo, hi = (np.array(b) for b in _BOX_3DOF)
    if q[0] < 0:
        lo, hi = lo.copy(), hi.copy()
        lo[0], hi[0] = -_BOX_3DOF[1][0], -_BOX_3DOF[0][0]
    return lo, hi


def ld_point(model: SystemModel, state, cfg: LdConfig, direction: str = "forward",
             integ: IntegratorConfig = DEFAULT_CONFIG) -> tuple[float, float, str]:
    """One-sided descriptor: ``(value, elapsed time, termination reason)``."""
    if direction not in ("forward", "backward"):
        raise ValueError("direction must be 'forward' or 'backward'")
    x0 = model._check_x(state)
    sgn = 1.0 if direction == "forward" else -1.0
    box = cfg.region(model) if cfg.variable else None
    run_cfg = IntegratorConfig(integ.rel_tol, integ.abs_tol, integ.max_step, cfg.escape_radius,
                               integ.max_time, integ.max_steps)
    res = _run(model, x0, 0.0, sgn * cfg.tau, run_cfg, ld_p=cfg.p_exponent, ld_on=True, box=box)
    return abs(float(res[2][model.n])), abs(float(res[1])), _REASONS[res[0]]


@dataclass(eq=False)
class LdGrid:
    """LD samples on a slice, arrays indexed ``[i, j]`` along the two swept axes.

    Off-shell nodes hold NaN in every field and ``False`` in ``on_shell``.
    """

    slice: SliceSpec
    energy: float
    lf: np.ndarray
    lb: np.ndarray
    tau_f: np.ndarray
    tau_b: np.ndarray
    flags: np.ndarray
    config: LdConfig
    model_params: dict = field(default_factory=dict)
    integrator: dict = field(default_factory=dict)
    extra: dict | None = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.lf.shape

    @property
    def on_shell(self) -> np.ndarray:
        return ~np.isnan(self.lf)

    @property
    def total(self) -> np.ndarray:
        return self.lf + self.lb

    @property
    def axes(self):
        return self.slice.axes(self.shape)

    @property
    def cell(self):
        return self.slice.cell_size(self.shape)

    def exited(self, direction: str) -> np.ndarray:
        bit = FLAG_FORWARD_EXIT if direction == "forward" else FLAG_BACKWARD_EXIT
        f = np.where(self.on_shell, self.flags, 0.0).astype(np.int64)
        return (f & bit) != 0

    def point(self, i: int, j: int) -> tuple[float, float]:
        u, v = self.axes
        return float(u[i]), float(v[j])

    def index_of(self, point) -> tuple[float, float]:
        """Fractional grid index of a slice-plane point."""
        (u0, _), (v0, _) = self.slice.ranges
        du, dv = self.cell
        return (point[0] - u0) / du, (point[1] - v0) / dv

    def statistics(self) -> dict:
        m = self.on_shell
        tot = self.total[m]
        stats = {"nodes": int(m.size), "on_shell": int(m.sum())}
        if tot.size:
            q = np.quantile(tot, [0.0, 0.05, 0.25, 0.5, 0.75, 0.95, 1.0])
            stats.update({"total_quantiles": [float(v) for v in q],
                          "forward_exit_fraction": float(self.exited("forward")[m].mean()),
                          "backward_exit_fraction": float(self.exited("backward")[m].mean())})
        return stats

    def metadata(self) -> dict:
        return {"slice": self.slice.to_dict(), "energy": self.energy, "ld": self.config.to_dict(),
                "model": self.model_params, "integrator": self.integrator, "shape": list(self.shape)}


def _chunks(n: int, workers: int) -> list[tuple[int, int]]:
    size = max(1, math.ceil(n / (4 * workers)))
    return [(a, min(n, a + size)) for a in range(0, n, size)]


def evaluate_states(model: SystemModel, states: np.ndarray, cfg: LdConfig,
                    integ: IntegratorConfig = DEFAULT_CONFIG, workers: int | None = None,
                    active: np.ndarray | None = None):
    """Forward/backward LD for many initial conditions.

    Returns ``(lf, lb, tau_f, tau_b, status_f, status_b)``; inactive entries
    are NaN.  Work is split into contiguous chunks; each output slot is
    written by exactly one chunk, so results do not depend on ``workers``.
    """
    states = np.ascontiguousarray(np.asarray(states, dtype=float).reshape(-1, model.n))
    m = states.shape[0]
    act = np.ones(m, dtype=np.bool_) if active is None else np.ascontiguousarray(active, dtype=np.bool_).ravel()
    lf, lb, tf, tb = (np.full(m, np.nan) for _ in range(4))
    sf = np.zeros(m, dtype=np.int64)
    sb = np.zeros(m, dtype=np.int64)
    lo, hi = cfg.region(model) if cfg.variable else (np.zeros(model.dof), np.zeros(model.dof))
    args = (model.kind, model.par, model.dof)
    tail = (float(cfg.tau), bool(cfg.variable), np.ascontiguousarray(lo, dtype=float),
            np.ascontiguousarray(hi, dtype=float), float(cfg.escape_radius), float(integ.rel_tol),
            float(integ.abs_tol), float(integ.max_step), float(cfg.p_exponent), int(integ.max_steps))

    def work(span):
        a, b = span
        _core.ld_nodes(*args, states[a:b], act[a:b], *tail, lf[a:b], lb[a:b], tf[a:b], tb[a:b], sf[a:b], sb[a:b])

    workers = workers or os.cpu_count() or 1
    spans = _chunks(m, workers)
    if workers == 1:
        for s in spans:
            work(s)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(work, spans))
    for st_arr, label in ((sf, "forward"), (sb, "backward")):
        bad = np.flatnonzero(act & (st_arr < 0))
        if bad.size:
            k = int(bad[0])
            raise IntegrationError(f"{label} LD integration failed at node {k} (state {states[k].tolist()})")
    return lf, lb, tf, tb, sf, sb


def compute_grid(model: SystemModel, slc: SliceSpec, e: float, cfg: LdConfig = LdConfig(),
                 resolution=300, integ: IntegratorConfig = DEFAULT_CONFIG, workers: int | None = None) -> LdGrid:
    """LD samples at every on-shell node of the slice grid."""
    states, mask = grid_states(model, slc, e, resolution)
    if not mask.any():
        raise EmptySliceError(f"no on-shell nodes on {slc.name or 'slice'} at energy {e}")
    shape = mask.shape
    try:
        lf, lb, tf, tb, sf, sb = evaluate_states(model, states.reshape(-1, model.n), cfg, integ,
                                                 workers, mask.ravel())
    except IntegrationError as exc:
        k = int(str(exc).split("node ")[1].split()[0])
        raise IntegrationError(f"{exc} at grid index {np.unravel_index(k, shape)}") from exc
    flags = np.where(sf != _core.ST_TIME, FLAG_FORWARD_EXIT, 0) + np.where(sb != _core.ST_TIME, FLAG_BACKWARD_EXIT, 0)
    flags = np.where(mask.ravel(), flags.astype(float), np.nan)
    r = lambda a: a.reshape(shape)
    return LdGrid(slc, float(e), r(lf), r(lb), r(tf), r(tb), r(flags), cfg, model.params_dict(),
                  asdict(integ))


# ---------------------------------------------------------------------------
# feature extraction
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GridFeature:
    i: int
    j: int
    u: float
    v: float
    score: float


def _neighbours(a: np.ndarray):
    """Four shifted copies of ``a`` padded with NaN: up, down, left, right."""
    pad = np.pad(a, 1, constant_values=np.nan)
    return pad[:-2, 1:-1], pad[2:, 1:-1], pad[1:-1, :-2], pad[1:-1, 2:]


def strict_extrema(a: np.ndarray, kind: str = "max", axes: str = "both") -> np.ndarray:
    """Mask of strict 4-neighbour extrema over finite values.

    ``axes="both"`` requires the strict inequality along both grid axes,
    ``"either"`` along at least one.  Neighbours that are NaN or off the grid
    do not count as a comparison; a node needs at least one valid neighbour on
    each axis it is tested along.  Plateaus never qualify.
    """
    a = np.asarray(a, dtype=float)
    up, dn, lt, rt = _neighbours(a)
    cmp = np.greater if kind == "max" else np.less
    with np.errstate(invalid="ignore"):
        def along(n1, n2):
            ok1, ok2 = ~np.isnan(n1), ~np.isnan(n2)
            good = (~ok1 | cmp(a, n1)) & (~ok2 | cmp(a, n2))
            return good & (ok1 | ok2)
        ax0, ax1 = along(up, dn), along(lt, rt)
    res = (ax0 & ax1) if axes == "both" else (ax0 | ax1)
    return res & np.isfinite(a)


def _features(grid: LdGrid, mask: np.ndarray, score: np.ndarray, descending=True) -> list[GridFeature]:
    u, v = grid.axes
    idx = np.argwhere(mask)
    feats = [GridFeature(int(i), int(j), float(u[i]), float(v[j]), float(score[i, j])) for i, j in idx]
    feats.sort(key=lambda f: (-f.score if descending else f.score, f.i, f.j))
    return feats


def _global_max(grid: LdGrid, mask: np.ndarray, total: np.ndarray) -> list[GridFeature]:
    vals = total[mask]
    top = vals.max()
    if np.all(vals == top):
        return []  # plateau
    return _features(grid, mask & (total == top), total)


def detect_nhim(grid: LdGrid, rule: str = "ld") -> list[GridFeature]:
    """NHIM candidates on a slice, best first.

    Variable-time grids, ``rule="ld"``: strict local maxima of the total
    among nodes that stay in the saddle region for the full ``tau`` both
    ways; if no such node exists, the global maximum of the total.
    ``rule="stay_time"`` instead ranks nodes by ``min(tau+, tau-)``, ties
    broken by the total.  Fixed-time grids: strict local minima of the total.
    """
    if rule not in ("ld", "stay_time"):
        raise ValueError("rule must be 'ld' or 'stay_time'")
    on = grid.on_shell
    if not on.any():
        raise EmptySliceError("grid has no on-shell nodes")
    total = grid.total
    if grid.config.mode == VARIABLE:
        if rule == "stay_time":
            stay = np.where(on, np.minimum(grid.tau_f, grid.tau_b), -np.inf)
            best = stay == stay.max()
            top = np.max(total[best])
            return _features(grid, best & (total == top), stay)
        tau = grid.config.tau
        stay = on & (grid.tau_f == tau) & (grid.tau_b == tau)
        if stay.any():
            peaks = strict_extrema(np.where(stay, total, np.nan), "max")
            if peaks.any():
                return _features(grid, peaks, total)
            return _global_max(grid, stay, total)
        return _global_max(grid, on, total)
    return _features(grid, strict_extrema(total, "min"), total, descending=False)


def detect_manifold_curves(grid: LdGrid, direction: str = "stable", axes: str = "both",
                           include_escape_edges: bool = True) -> np.ndarray:
    """Boolean node mask of stable (``L^f``) or unstable (``L^b``) manifold candidates.

    Strict local minima of the one-sided descriptor, plus on-shell nodes whose
    exit flag in the same time direction differs from a 4-neighbour's.
    """
    if direction not in ("stable", "unstable"):
        raise ValueError("direction must be 'stable' or 'unstable'")
    field_ = grid.lf if direction == "stable" else grid.lb
    nodes = strict_extrema(field_, "min", axes)
    if include_escape_edges:
        ex = grid.exited("forward" if direction == "stable" else "backward").astype(float)
        ex[~grid.on_shell] = np.nan
        with np.errstate(invalid="ignore"):
            edge = np.zeros(ex.shape, dtype=bool)
            for nb in _neighbours(ex):
                edge |= ~np.isnan(nb) & (nb != ex)
        nodes |= edge & grid.on_shell
    return nodes


def nodes_to_points(grid: LdGrid, mask: np.ndarray) -> np.ndarray:
    u, v = grid.axes
    idx = np.argwhere(mask)
    return np.column_stack([u[idx[:, 0]], v[idx[:, 1]]]) if idx.size else np.empty((0, 2))
