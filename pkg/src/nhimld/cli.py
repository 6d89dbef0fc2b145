"""Command-line front end.

Exit status: 0 success, 2 configuration error, 3 numerical failure (including
a slice with no on-shell nodes).
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, load_config, load_recipe, recipe_names
from .gridio import dump_json, grid_image, write_grid, write_ppm
from .integrator import EventNotFound, IntegrationError
from .ld import EmptySliceError, compute_grid, detect_manifold_curves, detect_nhim
from .models import ModelError
from .periodic import (ContinuationError, CorrectionError, globalize_manifold, orbit_family,
                       po_slice_intersection)
from .poincare import run_section, seed_lattice
from .slices import SliceSpec, onshell_window

log = logging.getLogger("nhimld")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3
NUMERICAL_ERRORS = (IntegrationError, EventNotFound, CorrectionError, ContinuationError, EmptySliceError,
                    FloatingPointError)


class Run:
    """Output directory bookkeeping for one command."""

    def __init__(self, cfg: RunConfig, out_dir: str):
        self.cfg = cfg
        self.out = out_dir
        self.files: list[str] = []
        self.results: dict = {}
        os.makedirs(out_dir, exist_ok=True)

    def path(self, name: str) -> str:
        self.files.append(name)
        return os.path.join(self.out, name)


def _features(feats, n=5):
    return [{"i": f.i, "j": f.j, "u": f.u, "v": f.v, "score": f.score} for f in feats[:n]]


def cmd_ld_map(run: Run) -> None:
    cfg = run.cfg
    model = cfg.build_model()
    saddle = cfg.model.saddle
    e = cfg.energy.resolve(model, saddle)
    ld = cfg.ld.build(saddle)
    integ = cfg.integrator.build()
    out = {}
    for sc in cfg.slices:
        slc = sc.build(model, e, saddle, ld)
        grid = compute_grid(model, slc, e, ld, sc.resolution, integ, cfg.workers)
        name = sc.label()
        write_grid(run.path(f"{name}.ldg"), grid)
        run.files.append(f"{name}.ldg.json")
        entry = {"slice": slc.to_dict(), "statistics": grid.statistics()}
        if ld.variable:
            entry["nhim"] = _features(detect_nhim(grid, cfg.ld.detect_rule))
        else:
            entry["stable_nodes"] = int(detect_manifold_curves(grid, "stable").sum())
            entry["unstable_nodes"] = int(detect_manifold_curves(grid, "unstable").sum())
        if cfg.image:
            write_ppm(run.path(f"{name}.ppm"), grid_image(grid))
        out[name] = entry
    run.results = {"energy": e, "slices": out}


def cmd_po_family(run: Run) -> None:
    cfg = run.cfg
    model = cfg.build_model()
    saddle = cfg.model.saddle
    energies = [es.resolve(model, saddle) for es in cfg.energies]
    fam = orbit_family(model, energies, cfg.continuation.build(saddle), cfg.integrator.build())
    ec = model.saddle(saddle).energy
    with open(run.path("orbits.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "delta_e", "energy", "x0", "y0", "px0", "py0", "period",
                    "lambda1", "lambda2", "lambda3_re", "lambda3_im", "lambda4_re", "lambda4_im",
                    "periodicity_residual", "iterations"])
        for k, po in enumerate(fam):
            s = po.spectrum
            w.writerow([k, repr(po.energy - ec), repr(po.energy), *map(repr, po.ic.tolist()), repr(po.period),
                        repr(s[0].real), repr(s[1].real), repr(s[2].real), repr(s[2].imag), repr(s[3].real),
                        repr(s[3].imag), repr(po.periodicity_residual), po.iterations])
    for k, po in enumerate(fam):
        with open(run.path(f"orbit_{k:02d}.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "x", "y", "px", "py"])
            for t, x in zip(po.samples_t, po.samples_x):
                w.writerow([repr(float(t)), *map(repr, x.tolist())])
    run.results = {"orbits": [{"energy": po.energy, "period": po.period,
                               "lambda1": float(po.spectrum[0].real)} for po in fam]}


def cmd_manifolds(run: Run) -> None:
    cfg = run.cfg
    model = cfg.build_model()
    saddle = cfg.model.saddle
    e = cfg.energy.resolve(model, saddle)
    integ = cfg.integrator.build()
    po = orbit_family(model, [e], cfg.continuation.build(saddle), integ)[0]
    tube = globalize_manifold(model, po, cfg.manifold.build(), integ)
    with open(run.path("fibers.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["fiber_id", "stability", "branch", "phase", "t", "x", "y", "px", "py"])
        for fid, fib in enumerate(tube.fibers):
            for t, x in zip(fib.trajectory.t, fib.trajectory.x):
                w.writerow([fid, fib.stability, fib.branch, repr(fib.phase), repr(float(t)), *map(repr, x.tolist())])
    run.results = {"energy": e, "period": po.period, "fibers": len(tube.fibers),
                   "stability": sorted({f.stability for f in tube.fibers}),
                   "branches": sorted({f.branch for f in tube.fibers})}


def cmd_psection(run: Run) -> None:
    cfg = run.cfg
    model = cfg.build_model()
    e = cfg.energy.resolve(model, cfg.model.saddle)
    sc = cfg.slices[0] if cfg.slices else None
    k = sc.k if sc else 0.0
    base = SliceSpec.uxpx_2dof(k)
    ranges = onshell_window(model, base, e) if sc is None or sc.ranges == "auto" else sc.ranges
    slc = SliceSpec.uxpx_2dof(k, *ranges)
    seeds = seed_lattice(model, slc, e, cfg.section.resolution)
    if len(seeds) == 0:
        raise EmptySliceError("seed lattice has no on-shell nodes")
    sec = run_section(model, e, seeds, cfg.section.max_crossings, cfg.integrator.build(), slc,
                      cfg.section.max_time, workers=cfg.workers)
    sec.to_csv(run.path("crossings.csv"))
    counts = sec.counts()
    run.results = {"energy": e, "seeds": int(len(seeds)), "crossings": int(counts.sum()),
                   "escaped_seeds": int(sum(r == "escape" for r in sec.reasons))}


def cmd_validate_nhim(run: Run) -> None:
    cfg = run.cfg
    model = cfg.build_model()
    saddle = cfg.model.saddle
    e = cfg.energy.resolve(model, saddle)
    ld = cfg.ld.build(saddle)
    integ = cfg.integrator.build()
    po = orbit_family(model, [e], cfg.continuation.build(saddle), integ)[0]
    report = []
    for sc in cfg.slices:
        slc = sc.build(model, e, saddle, ld)
        grid = compute_grid(model, slc, e, ld, sc.resolution, integ, cfg.workers)
        oracle = po_slice_intersection(po, slc, model, integ=integ)
        entry = {"slice": sc.label(), "k": sc.k, "oracle": oracle.tolist()}
        for rule in ("ld", "stay_time"):
            feats = detect_nhim(grid, rule)
            best = feats[0]
            dist = min(float(np.hypot(*np.subtract(grid.index_of(p), (best.i, best.j)))) for p in oracle)
            entry[rule] = {"node": [best.i, best.j], "point": [best.u, best.v], "distance_cells": dist}
        write_grid(run.path(f"{sc.label()}.ldg"), grid)
        run.files.append(f"{sc.label()}.ldg.json")
        if cfg.image:
            write_ppm(run.path(f"{sc.label()}.ppm"), grid_image(grid))
        report.append(entry)
    dump_json({"energy": e, "period": po.period, "rule": cfg.ld.detect_rule, "slices": report},
              run.path("validate.json"))
    run.results = {"energy": e, "distances": {r["slice"]: r[cfg.ld.detect_rule]["distance_cells"] for r in report}}


COMMANDS = {"ld_map": cmd_ld_map, "po_family": cmd_po_family, "manifolds": cmd_manifolds,
            "psection": cmd_psection, "validate_nhim": cmd_validate_nhim}


def write_manifest(run: Run, wall: float) -> None:
    manifest = {"tool": "nhimld", "version": __version__, "command": run.cfg.command,
                "config": run.cfg.model_dump(mode="json"), "wall_time_s": wall,
                "outputs": run.files, "results": run.results}
    dump_json(manifest, os.path.join(run.out, "manifest.json"))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nhimld", description="Lagrangian descriptor and periodic orbit runs.")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", metavar="PATH", help="JSON run configuration")
    src.add_argument("--recipe", metavar="NAME", help="bundled configuration: " + ", ".join(recipe_names()))
    p.add_argument("--workers", type=int, metavar="N", help="worker threads for grid and section runs")
    p.add_argument("--out", metavar="DIR", help="output directory (overrides the config)")
    p.add_argument("--seed-only", action="store_true", help="validate the configuration and exit")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = load_recipe(args.recipe) if args.recipe else load_config(args.config)
        updates = {}
        if args.workers is not None:
            if args.workers < 1:
                raise ConfigError("--workers must be positive")
            updates["workers"] = args.workers
        if args.out is not None:
            updates["output_dir"] = args.out
        if updates:
            cfg = cfg.model_copy(update=updates)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.seed_only:
        print(json.dumps(cfg.model_dump(mode="json"), indent=2, sort_keys=True))
        return EXIT_OK
    run = Run(cfg, cfg.output_dir)
    t0 = time.perf_counter()
    try:
        COMMANDS[cfg.command](run)
    except NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ModelError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    write_manifest(run, time.perf_counter() - t0)
    log.info("wrote %s", os.path.join(run.out, "manifest.json"))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
