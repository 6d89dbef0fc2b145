"""Poincaré surface-of-section data on ``{y = k, p_y > 0}`` for the 2-DoF model."""
from __future__ import annotations

import csv
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .integrator import DEFAULT_CONFIG, IntegratorConfig, crossings
from .models import SystemModel
from .slices import SliceSpec, grid_states


@dataclass(eq=False)
class SectionRun:
    """Seeds and their section returns.

    ``times[s]`` and ``states[s]`` hold the crossings of seed ``s`` in order
    (``states`` rows are full phase-space vectors); ``reasons[s]`` says why
    the run stopped.
    """

    slice: SliceSpec
    energy: float
    seeds: np.ndarray
    times: list[np.ndarray]
    states: list[np.ndarray]
    reasons: list[str]
    max_crossings: int
    max_time: float

    def points(self, seed: int | None = None) -> np.ndarray:
        """Crossings projected to the swept pair, for one seed or all."""
        a, b = self.slice.swept
        if seed is not None:
            return self.states[seed][:, [a, b]]
        if not self.states:
            return np.empty((0, 2))
        return np.concatenate([s[:, [a, b]] for s in self.states])

    def counts(self) -> np.ndarray:
        return np.array([t.size for t in self.times])

    def rows(self):
        a, b = self.slice.swept
        for sid, (ts, xs) in enumerate(zip(self.times, self.states)):
            for n, (t, x) in enumerate(zip(ts, xs), start=1):
                yield sid, n, float(t), float(x[a]), float(x[b])

    def to_csv(self, path) -> None:
        names = self.slice.labels()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["seed_id", "n", "t", names[0], "p_x" if names[1] == "px" else names[1]])
            for r in self.rows():
                w.writerow([r[0], r[1], repr(r[2]), repr(r[3]), repr(r[4])])


def seed_lattice(model: SystemModel, slc: SliceSpec, e: float, resolution=40) -> np.ndarray:
    """On-shell nodes of a uniform lattice over the slice window, shape ``(m, n)``."""
    states, mask = grid_states(model, slc, e, resolution)
    return states[mask]


def run_section(model: SystemModel, e: float, seeds, max_crossings: int = 100,
                config: IntegratorConfig = DEFAULT_CONFIG, slc: SliceSpec | None = None,
                max_time: float = 1.0e4, backward: bool = False, workers: int | None = None) -> SectionRun:
    """Follow each seed and record its directional section crossings.

    Runs stop at ``max_crossings`` returns, after ``max_time`` or on escape;
    escaped seeds keep whatever crossings they made.
    """
    slc = slc or SliceSpec.uxpx_2dof(0.0)
    ev = slc.section_event()
    seeds = np.atleast_2d(np.asarray(seeds, dtype=float))
    span = -max_time if backward else max_time

    def one(x0):
        return crossings(model, x0, ev, max_crossings, span, config)

    workers = workers or os.cpu_count() or 1
    if workers == 1 or len(seeds) < 2:
        results = [one(x) for x in seeds]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, seeds))
    times = [r[0] for r in results]
    states = [r[1] for r in results]
    reasons = [r[2] for r in results]
    return SectionRun(slc, float(e), seeds, times, states, reasons, int(max_crossings), float(max_time))
