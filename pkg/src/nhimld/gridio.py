"""LDG1 grid files, JSON sidecars and PPM colormap images.

Binary layout (little endian): ``b"LDG1"``, two ``u32`` dimensions
``(n1, n2)``, then ``n1 * n2`` row-major records of five ``float64``:
``L^f, L^b, tau+, tau-, flags``.  Off-shell nodes carry a quiet NaN with a
fixed payload in every field.  Grid metadata lives in ``<file>.json``.
"""
from __future__ import annotations

import json
import os
import re
import struct
from importlib import resources

import numpy as np

from .ld import LdConfig, LdGrid
from .slices import SliceSpec

MAGIC = b"LDG1"
OFF_SHELL_BITS = 0x7FF8000000004C44
OFF_SHELL = np.array([OFF_SHELL_BITS], dtype="<u8").view("<f8")[0]
_RECORD = np.dtype([("lf", "<f8"), ("lb", "<f8"), ("tau_f", "<f8"), ("tau_b", "<f8"), ("flags", "<f8")])

ESCAPE_RGB = (230, 40, 40)
OFF_SHELL_RGB = (255, 255, 255)


class GridFormatError(ValueError):
    pass


def sidecar_path(path) -> str:
    return os.fspath(path) + ".json"


def dump_json(obj, path) -> None:
    """Deterministic JSON text, written atomically."""
    text = json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"
    tmp = os.fspath(path) + ".tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def encode_grid(grid: LdGrid) -> bytes:
    n1, n2 = grid.shape
    rec = np.empty((n1, n2), dtype=_RECORD)
    off = ~grid.on_shell
    for name in _RECORD.names:
        col = np.asarray(getattr(grid, name), dtype="<f8")
        rec[name] = np.where(off, OFF_SHELL, col)
    return MAGIC + struct.pack("<II", n1, n2) + rec.tobytes()


def decode_grid(data: bytes) -> dict[str, np.ndarray]:
    if len(data) < 12 or data[:4] != MAGIC:
        raise GridFormatError("not an LDG1 grid file")
    n1, n2 = struct.unpack("<II", data[4:12])
    body = data[12:]
    if len(body) != n1 * n2 * _RECORD.itemsize:
        raise GridFormatError(f"size mismatch: header says {n1}x{n2}, body has {len(body)} bytes")
    rec = np.frombuffer(body, dtype=_RECORD).reshape(n1, n2)
    return {name: rec[name].copy() for name in _RECORD.names}


def write_grid(path, grid: LdGrid, extra: dict | None = None) -> None:
    """Binary grid plus sidecar metadata; both written via a temporary file."""
    data = encode_grid(grid)
    tmp = os.fspath(path) + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)
    meta = grid.metadata()
    extra = extra if extra is not None else grid.extra
    if extra:
        meta["extra"] = extra
    dump_json(meta, sidecar_path(path))


def read_grid(path) -> LdGrid:
    with open(path, "rb") as fh:
        arrays = decode_grid(fh.read())
    with open(sidecar_path(path)) as fh:
        meta = json.load(fh)
    if list(arrays["lf"].shape) != meta["shape"]:
        raise GridFormatError("sidecar shape does not match the grid")
    ld = dict(meta["ld"])
    if ld.get("saddle_region") is not None:
        ld["saddle_region"] = tuple(tuple(b) for b in ld["saddle_region"])
    grid = LdGrid(SliceSpec.from_dict(meta["slice"]), float(meta["energy"]), arrays["lf"], arrays["lb"],
                  arrays["tau_f"], arrays["tau_b"], arrays["flags"], LdConfig(**ld), meta["model"],
                  meta["integrator"], meta.get("extra"))
    return grid


def load_colormap() -> np.ndarray:
    """The 256-entry RGB table shipped with the package, shape ``(256, 3)`` uint8."""
    text = resources.files("nhimld").joinpath("data/viridis256.txt").read_text()
    rows = [line.strip() for line in text.splitlines() if line.strip()]
    return np.array([[int(r[k:k + 2], 16) for k in (0, 2, 4)] for r in rows], dtype=np.uint8)


def render(values: np.ndarray, mask_off: np.ndarray | None = None, mask_special: np.ndarray | None = None,
           vmin: float | None = None, vmax: float | None = None) -> np.ndarray:
    """Map a 2-D field to RGB; first grid axis runs left to right, second bottom to top."""
    v = np.asarray(values, dtype=float)
    off = ~np.isfinite(v) if mask_off is None else (mask_off | ~np.isfinite(v))
    finite = v[~off]
    lo = vmin if vmin is not None else (finite.min() if finite.size else 0.0)
    hi = vmax if vmax is not None else (finite.max() if finite.size else 1.0)
    scale = (hi - lo) or 1.0
    idx = np.clip(((np.where(off, lo, v) - lo) / scale * 255).round(), 0, 255).astype(int)
    rgb = load_colormap()[idx]
    rgb[off] = OFF_SHELL_RGB
    if mask_special is not None:
        rgb[mask_special & ~off] = ESCAPE_RGB
    return np.ascontiguousarray(np.transpose(rgb, (1, 0, 2))[::-1])


def write_ppm(path, rgb: np.ndarray) -> None:
    rgb = np.ascontiguousarray(rgb, dtype=np.uint8)
    h, w, _ = rgb.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(rgb.tobytes())


def read_ppm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    m = re.match(rb"P6\s+(\d+)\s+(\d+)\s+(\d+)\s", data)
    if not m:
        raise GridFormatError("not a binary PPM")
    w, h, maxval = (int(g) for g in m.groups())
    if maxval != 255:
        raise GridFormatError("only 8-bit PPM is supported")
    return np.frombuffer(data[m.end(): m.end() + w * h * 3], dtype=np.uint8).reshape(h, w, 3)


def grid_image(grid: LdGrid, field: str = "total") -> np.ndarray:
    values = grid.total if field == "total" else getattr(grid, field)
    special = None
    if field in ("lf", "total"):
        special = grid.exited("forward")
    if field in ("lb", "total"):
        special = grid.exited("backward") if special is None else special | grid.exited("backward")
    if grid.config.variable:
        special = None
    return render(values, ~grid.on_shell, special)
