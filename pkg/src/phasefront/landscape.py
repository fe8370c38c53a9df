"""(sigma_w, sigma_b) grid sweeps over finite-size networks.

One master seed fixes the base draws and the input pair for the whole
grid; the sigma scales enter only as multipliers, so every cell is a
deterministic function of its coordinates and the landscape can be
zoomed into indefinitely.

Grid file format ("PFL1"): 4-byte magic, little-endian uint32 length of
a UTF-8 JSON metadata blob, the blob, then the value matrix as row-major
little-endian float32 (sigma_b rows x sigma_w columns). Axes are stored
in the JSON as {min, max, count} per axis.
"""

from __future__ import annotations

import json
import struct
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .nets import DrawProvider, TopologyConfig, propagate_cells

__all__ = ["Region", "LandscapeGrid", "sweep", "zoom", "tradeoff_scan",
           "save", "load", "render", "GridFormatError"]

MAGIC = b"PFL1"

# Cells per chunk are capped so the working set stays cache-friendly;
# chunking is a pure function of the sweep shape (never of the thread
# count), which keeps output bytes identical for any --threads.
_CHUNK_BYTES = 128 << 20


class GridFormatError(ValueError):
    """Corrupt or truncated grid file; carries the failing byte offset."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


@dataclass(frozen=True)
class Region:
    """Axis-aligned box in the (sigma_w, sigma_b) plane with a per-axis
    sample count."""

    sw_min: float
    sw_max: float
    sb_min: float
    sb_max: float
    resolution: int

    def __post_init__(self):
        if not (self.sw_min < self.sw_max and self.sb_min < self.sb_max):
            raise ValueError("region must satisfy min < max on both axes")
        if self.resolution < 8:
            raise ValueError("resolution must be >= 8")

    def contains(self, other: "Region") -> bool:
        return (self.sw_min <= other.sw_min and other.sw_max <= self.sw_max
                and self.sb_min <= other.sb_min
                and other.sb_max <= self.sb_max)

    def sw_axis(self) -> np.ndarray:
        return np.linspace(self.sw_min, self.sw_max, self.resolution)

    def sb_axis(self) -> np.ndarray:
        return np.linspace(self.sb_min, self.sb_max, self.resolution)

    def to_dict(self) -> dict:
        return {"sw_min": self.sw_min, "sw_max": self.sw_max,
                "sb_min": self.sb_min, "sb_max": self.sb_max,
                "resolution": self.resolution}

    @classmethod
    def from_dict(cls, d: dict) -> "Region":
        return cls(float(d["sw_min"]), float(d["sw_max"]),
                   float(d["sb_min"]), float(d["sb_max"]),
                   int(d["resolution"]))


@dataclass
class LandscapeGrid:
    """Divergence values over a (sigma_w, sigma_b) grid plus provenance."""

    sigma_w_axis: np.ndarray
    sigma_b_axis: np.ndarray
    values: np.ndarray                       # float32, (|sb|, |sw|)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float32)
        if self.values.shape != (len(self.sigma_b_axis),
                                 len(self.sigma_w_axis)):
            raise ValueError("values shape does not match axes")

    @property
    def region(self) -> Region:
        return Region.from_dict(self.metadata["region"])


def _chunk_rows(n_rows: int, n_cols: int, width: int, itemsize: int) -> int:
    per_row = n_cols * width * itemsize * 8   # ~8 live arrays of (cells, N)
    return int(min(n_rows, max(1, _CHUNK_BYTES // max(per_row, 1))))


def sweep(cfg: TopologyConfig, region: Region, depth: int = 1000,
          avg_last: int = 20, master_seed: int = 0,
          input_mode: str = "independent", epsilon: float | None = None,
          threads: int = 1, mem_budget: int = 2 << 30,
          dtype: str = "float64") -> LandscapeGrid:
    """Divergence landscape over `region`: every cell shares the same
    master seed, hence the same base draws and input pair."""
    if avg_last > depth:
        raise ValueError("avg_last must be <= depth")
    np_dtype = {"float64": np.float64, "float32": np.float32}[dtype]
    sw_axis = region.sw_axis()
    sb_axis = region.sb_axis()
    n_rows = len(sb_axis)
    n_cols = len(sw_axis)
    provider = DrawProvider(cfg, master_seed, depth, mem_budget=mem_budget)
    chunk_rows = _chunk_rows(n_rows, n_cols, cfg.width,
                             np.dtype(np_dtype).itemsize)
    starts = list(range(0, n_rows, chunk_rows))

    def run_chunk(r0: int) -> np.ndarray:
        r1 = min(r0 + chunk_rows, n_rows)
        sw = np.tile(sw_axis, r1 - r0)
        sb = np.repeat(sb_axis[r0:r1], n_cols)
        out = propagate_cells(cfg, sw, sb, depth, master_seed,
                              input_mode=input_mode, epsilon=epsilon,
                              avg_last=avg_last, dtype=np_dtype,
                              provider=provider)
        return out["mean_last"].reshape(r1 - r0, n_cols)

    if threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            blocks = list(pool.map(run_chunk, starts))
    else:
        blocks = [run_chunk(r0) for r0 in starts]
    values = np.concatenate(blocks, axis=0).astype(np.float32)

    metadata = {
        "topology": cfg.to_dict(),
        "region": region.to_dict(),
        "depth": depth,
        "avg_last": avg_last,
        "master_seed": master_seed,
        "input_mode": input_mode,
        "epsilon": epsilon,
        "dtype": dtype,
        "chunk_rows": chunk_rows,
        "draws_cached": provider.cached,
        "axes": {
            "sigma_w": {"min": region.sw_min, "max": region.sw_max,
                        "count": n_cols},
            "sigma_b": {"min": region.sb_min, "max": region.sb_max,
                        "count": n_rows},
        },
        "lineage": [],
    }
    return LandscapeGrid(sw_axis, sb_axis, values, metadata)


def zoom(parent: LandscapeGrid, sub_region: Region,
         threads: int = 1, mem_budget: int = 2 << 30) -> LandscapeGrid:
    """Fresh full-resolution sweep over a sub-region of `parent`,
    reusing its seed/topology/depth and recording the zoom lineage."""
    parent_region = parent.region
    if not parent_region.contains(sub_region):
        raise ValueError("sub-region is not contained in the parent region")
    meta = parent.metadata
    cfg = TopologyConfig.from_dict(meta["topology"])
    child = sweep(cfg, sub_region, depth=int(meta["depth"]),
                  avg_last=int(meta["avg_last"]),
                  master_seed=int(meta["master_seed"]),
                  input_mode=meta.get("input_mode", "independent"),
                  epsilon=meta.get("epsilon"),
                  threads=threads, mem_budget=mem_budget,
                  dtype=meta.get("dtype", "float64"))
    child.metadata["lineage"] = (list(meta.get("lineage", []))
                                 + [meta["region"]])
    return child


def tradeoff_scan(cfg: TopologyConfig, sigma_b: float, sigma_w_values,
                  depths, master_seed: int = 0,
                  epsilon: float = 1e-5) -> list[dict]:
    """Divergence at the requested depths for independent vs perturbed
    input pairs, sharing the layer draws between the two runs.

    Returns one record per (sigma_w, depth):
    {sigma_w, depth, L_independent, L_perturbed}.
    """
    sw = np.asarray(list(sigma_w_values), dtype=np.float64)
    depths = [int(d) for d in depths]
    depth = max(depths)
    sb = np.full_like(sw, float(sigma_b))
    provider = DrawProvider(cfg, master_seed, depth)
    indep = propagate_cells(cfg, sw, sb, depth, master_seed,
                            input_mode="independent",
                            record_depths=depths, provider=provider)
    pert = propagate_cells(cfg, sw, sb, depth, master_seed,
                           input_mode="perturbed", epsilon=epsilon,
                           record_depths=depths, provider=provider)
    rows = []
    for i, w in enumerate(sw):
        for d in depths:
            rows.append({"sigma_w": float(w), "depth": d,
                         "L_independent": float(indep["recorded"][d][i]),
                         "L_perturbed": float(pert["recorded"][d][i])})
    return rows


def save(grid: LandscapeGrid, path) -> None:
    """Write the PFL1 binary grid file (bit-exact round trip)."""
    blob = json.dumps(grid.metadata, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(np.ascontiguousarray(
            grid.values, dtype="<f4").tobytes())


def load(path) -> LandscapeGrid:
    """Read a PFL1 grid file; unknown metadata keys are preserved."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MAGIC:
        raise GridFormatError("bad magic, not a PFL1 grid file", 0)
    if len(data) < 8:
        raise GridFormatError("truncated header", len(data))
    (blob_len,) = struct.unpack("<I", data[4:8])
    if len(data) < 8 + blob_len:
        raise GridFormatError("truncated metadata blob", len(data))
    try:
        metadata = json.loads(data[8:8 + blob_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise GridFormatError(f"invalid metadata JSON: {exc}", 8) from exc
    try:
        ax_w = metadata["axes"]["sigma_w"]
        ax_b = metadata["axes"]["sigma_b"]
        n_cols = int(ax_w["count"])
        n_rows = int(ax_b["count"])
    except (KeyError, TypeError, ValueError) as exc:
        raise GridFormatError(f"missing axis metadata: {exc}", 8) from exc
    offset = 8 + blob_len
    expect = n_rows * n_cols * 4
    if len(data) - offset != expect:
        raise GridFormatError(
            f"value payload has {len(data) - offset} bytes, "
            f"expected {expect}", offset)
    values = np.frombuffer(data[offset:], dtype="<f4").reshape(
        n_rows, n_cols).copy()
    sw_axis = np.linspace(ax_w["min"], ax_w["max"], n_cols)
    sb_axis = np.linspace(ax_b["min"], ax_b["max"], n_rows)
    return LandscapeGrid(sw_axis, sb_axis, values, metadata)


def render(grid: LandscapeGrid, path, scale: str = "linear") -> None:
    """Write an 8-bit grayscale PGM (P5), min -> black, max -> white."""
    v = grid.values.astype(np.float64)
    if scale == "log1p":
        v = np.log1p(v)
    elif scale != "linear":
        raise ValueError(f"unknown scale {scale!r}")
    vmin = float(v.min())
    vmax = float(v.max())
    if vmax == vmin:
        warnings.warn("constant grid; rendering uniform mid-gray")
        pixels = np.full(v.shape, 128, dtype=np.uint8)
    else:
        pixels = np.rint((v - vmin) / (vmax - vmin) * 255.0).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{v.shape[1]} {v.shape[0]}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())
