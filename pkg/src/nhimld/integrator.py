"""Trajectory propagation, variational equations and event location.

All routines delegate to the compiled DOP853 kernel in :mod:`nhimld._core`.
Integration may run backwards in time (negative span).  Trajectories leaving
the configuration ball of radius ``escape_radius`` stop with reason
``"escape"``; the model potentials are unbounded below and such orbits would
otherwise blow up in finite time.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import _core
from .models import PhaseState, SystemModel, as_vector

_REASONS = {
    _core.ST_TIME: "time_limit",
    _core.ST_ESCAPE: "escape",
    _core.ST_BOX: "region_exit",
    _core.ST_EVENT: "event",
}


class IntegrationError(RuntimeError):
    """Step-size underflow or step budget exhausted."""


class EventNotFound(RuntimeError):
    """No event crossing before the time limit (or the trajectory escaped)."""


@dataclass(frozen=True)
class IntegratorConfig:
    rel_tol: float = 1e-12
    abs_tol: float = 1e-12
    max_step: float = 0.5
    escape_radius: float = 50.0
    max_time: float = 1.0e4
    max_steps: int = 20_000_000

    def __post_init__(self):
        for name in ("rel_tol", "abs_tol"):
            v = getattr(self, name)
            if not (0 < v <= 1e-2):
                raise ValueError(f"{name} must lie in (0, 1e-2], got {v}")
        if not self.escape_radius > 0:
            raise ValueError("escape_radius must be positive")
        if not (self.max_step > 0 and self.max_time > 0):
            raise ValueError("max_step and max_time must be positive")


DEFAULT_CONFIG = IntegratorConfig()


class Event(NamedTuple):
    """Crossing of ``x[coordinate] = value``.

    ``direction`` constrains the sign of ``d x[coordinate] / dt`` in physical
    time at the crossing (0 accepts both), independent of integration direction.
    """

    coordinate: int
    value: float = 0.0
    direction: int = 0


@dataclass
class Trajectory:
    t: np.ndarray
    x: np.ndarray
    reason: str
    stm: np.ndarray | None = None

    @property
    def final(self) -> PhaseState:
        return PhaseState.from_vector(self.x[-1], self.t[-1])

    def __len__(self):
        return self.t.size


_NO_BOX = np.zeros(3)


def _run(model: SystemModel, x0: np.ndarray, t0: float, t1: float, config: IntegratorConfig, *,
         with_stm=False, ld_p=0.5, ld_on=False, box=None, event: Event | None = None,
         terminal_count=0, max_events=0, t_eval=None, store_steps=False, escape=True):
    n = model.n
    parts = [x0]
    if with_stm:
        parts.append(np.eye(n).ravel())
    if ld_on:
        parts.append(np.zeros(1))
    y0 = np.concatenate(parts).astype(float)
    n_err = n + (n * n if with_stm else 0)
    if box is None:
        lo = hi = _NO_BOX[: model.dof]
        use_box = False
    else:
        lo, hi = (np.asarray(b, dtype=float) for b in box)
        use_box = True
    ev_idx, ev_val, ev_dir = (-1, 0.0, 0) if event is None else (int(event.coordinate), float(event.value), int(event.direction))
    te = np.empty(0) if t_eval is None else np.asarray(t_eval, dtype=float)
    res = _core.propagate(model.kind, model.par, model.dof, y0, float(t0), float(t1),
                          config.rel_tol, config.abs_tol, config.max_step, n_err,
                          with_stm, float(ld_p), ld_on,
                          float(config.escape_radius) if escape else -1.0, lo, hi, use_box,
                          ev_idx, ev_val, ev_dir, int(terminal_count), int(max_events),
                          te, store_steps, int(config.max_steps))
    status = res[0]
    if status == _core.ST_UNDERFLOW:
        raise IntegrationError(f"step size underflow at t = {res[1]:.17g}")
    if status == _core.ST_MAXSTEPS:
        raise IntegrationError(f"step budget exhausted at t = {res[1]:.17g}")
    return res


def _split(model: SystemModel, y: np.ndarray, with_stm: bool):
    n = model.n
    x = y[..., :n]
    stm = y[..., n:n + n * n].reshape(y.shape[:-1] + (n, n)) if with_stm else None
    return x, stm


def _span(state, t_span):
    t0 = state.t if isinstance(state, PhaseState) else 0.0
    if np.ndim(t_span) == 0:
        return t0, t0 + float(t_span)
    a, b = t_span
    return float(a), float(b)


def integrate(model: SystemModel, state, t_span, config: IntegratorConfig = DEFAULT_CONFIG,
              t_eval=None) -> Trajectory:
    """Propagate ``state`` over ``t_span``.

    ``t_span`` is either a duration (added to ``state.t``) or a ``(t0, t1)`` pair.
    Samples are the accepted steps unless ``t_eval`` requests dense output.
    """
    x0 = model._check_x(state)
    t0, t1 = _span(state, t_span)
    res = _run(model, x0, t0, t1, config, t_eval=t_eval, store_steps=t_eval is None)
    status, t_end, y_end = res[0], res[1], res[2]
    out_t, out_y, n_out = res[6], res[7], res[8]
    return Trajectory(out_t[:n_out].copy(), out_y[:n_out, : model.n].copy(), _REASONS[status])


def integrate_with_stm(model: SystemModel, state, t_span, config: IntegratorConfig = DEFAULT_CONFIG,
                       t_eval=None) -> tuple[Trajectory, np.ndarray]:
    """Propagate state and state-transition matrix ``Phi(t, t0)`` jointly.

    The trajectory carries the STM at every sample in ``Trajectory.stm``; the
    second return value is the STM at the final sample.
    """
    x0 = model._check_x(state)
    t0, t1 = _span(state, t_span)
    res = _run(model, x0, t0, t1, config, with_stm=True, t_eval=t_eval, store_steps=t_eval is None)
    out_t, out_y, n_out = res[6], res[7], res[8]
    x, stm = _split(model, out_y[:n_out], True)
    traj = Trajectory(out_t[:n_out].copy(), x.copy(), _REASONS[res[0]], stm.copy())
    return traj, traj.stm[-1]


def final_state(model: SystemModel, state, t_span, config: IntegratorConfig = DEFAULT_CONFIG,
                with_stm=False):
    """Endpoint only: ``(PhaseState, reason)`` or ``(PhaseState, reason, stm)``."""
    x0 = model._check_x(state)
    t0, t1 = _span(state, t_span)
    res = _run(model, x0, t0, t1, config, with_stm=with_stm)
    x, stm = _split(model, res[2], with_stm)
    st = PhaseState.from_vector(x, res[1])
    if with_stm:
        return st, _REASONS[res[0]], stm
    return st, _REASONS[res[0]]


def integrate_to_event(model: SystemModel, state, event: Event, config: IntegratorConfig = DEFAULT_CONFIG,
                       backward=False) -> tuple[PhaseState, float]:
    """First strict crossing of ``event`` after the start time.

    Raises :class:`EventNotFound` if none occurs within ``config.max_time`` or
    the trajectory escapes first.
    """
    st, t, _ = _to_event(model, state, event, config, False, backward)
    return st, t


def integrate_to_event_with_stm(model: SystemModel, state, event: Event,
                                config: IntegratorConfig = DEFAULT_CONFIG, backward=False):
    """As :func:`integrate_to_event`, also returning ``Phi(t_event, t0)``."""
    return _to_event(model, state, event, config, True, backward)


def _to_event(model, state, event, config, with_stm, backward):
    x0 = model._check_x(state)
    t0 = state.t if isinstance(state, PhaseState) else 0.0
    t1 = t0 - config.max_time if backward else t0 + config.max_time
    res = _run(model, x0, t0, t1, config, with_stm=with_stm, event=event, terminal_count=1, max_events=1)
    if res[0] != _core.ST_EVENT:
        raise EventNotFound(f"no crossing of coordinate {event.coordinate} = {event.value} "
                            f"(stopped: {_REASONS[res[0]]} at t = {res[1]:.6g})")
    x, stm = _split(model, res[2], with_stm)
    return PhaseState.from_vector(x, res[1]), res[1], stm


def crossings(model: SystemModel, state, event: Event, max_crossings: int, t_max: float,
              config: IntegratorConfig = DEFAULT_CONFIG):
    """All directional crossings up to ``max_crossings`` within duration ``t_max``.

    ``t_max`` may be negative for backward search.  Returns ``(times, states,
    reason)`` with ``states`` of shape ``(k, n)``.
    """
    x0 = model._check_x(state)
    t0 = state.t if isinstance(state, PhaseState) else 0.0
    res = _run(model, x0, t0, t0 + t_max, config, event=event,
               terminal_count=max_crossings, max_events=max_crossings)
    k = min(res[5], max_crossings)
    return res[3][:k].copy(), res[4][:k, : model.n].copy(), _REASONS[res[0]]


def exit_time(model: SystemModel, state, duration: float, config: IntegratorConfig = DEFAULT_CONFIG,
              box=None) -> tuple[float, str]:
    """Time to leave the escape ball (and ``box`` if given), capped at ``|duration|``.

    Returns the elapsed (non-negative) time and the termination reason.
    """
    x0 = model._check_x(state)
    res = _run(model, x0, 0.0, float(duration), config, box=box)
    return abs(res[1]), _REASONS[res[0]]


def symplectic_residual(stm: np.ndarray) -> float:
    """``max |Phi^T J Phi - J|`` for the canonical symplectic matrix ``J``."""
    n = stm.shape[0]
    d = n // 2
    J = np.zeros((n, n))
    J[:d, d:] = np.eye(d)
    J[d:, :d] = -np.eye(d)
    return float(np.max(np.abs(stm.T @ J @ stm - J)))
