"""Command-line pipeline: sweep, zoom, tradeoff, meanfield, boundary,
fracdim, render.

Every run writes its outputs plus a `<out>.manifest.json` recording the
subcommand, the effective parameter map (flags over config file over
defaults), the tool version, wall-clock duration, and SHA-256 digests of
the output files; re-running a manifest's parameters reproduces the
output bytes exactly.

Exit codes: 0 success, 1 usage error, 2 runtime error. Progress goes to
stderr; machine output only to files.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
import time

import numpy as np

from . import __version__
from .landscape import (GridFormatError, Region, load, render, save, sweep,
                        tradeoff_scan, zoom)
from .meanfield import (fixed_point_covariance, fixed_point_variance,
                        normal_grid, trace_boundary)
from .fractal import default_j_range, dimension_sweep
from .nets import TopologyConfig

__all__ = ["main"]

ENV_THREADS = "PHASEFRONT_THREADS"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):                 # argparse default exits with 2
        raise UsageError(message)


def _topology(params: dict) -> TopologyConfig:
    name = params["topology"]
    width = int(params["width"])
    kernel = params.get("kernel")
    if name != "conv" and kernel is not None:
        raise UsageError(f"--kernel conflicts with --topology {name}")
    if name == "mlp":
        return TopologyConfig.mlp(width)
    if name == "conv":
        return TopologyConfig.conv(width,
                                   int(kernel) if kernel is not None
                                   else width)
    if name == "fdf":
        return TopologyConfig.fdf(width)
    if name == "fdfd":
        return TopologyConfig.fdfd(width)
    raise UsageError(f"unknown topology {name!r}")


def _parse_bytes(text: str) -> int:
    text = str(text).strip()
    mult = 1
    suffixes = {"K": 1 << 10, "M": 1 << 20, "G": 1 << 30}
    if text and text[-1].upper() in suffixes:
        mult = suffixes[text[-1].upper()]
        text = text[:-1]
    return int(float(text) * mult)


def _read_config(path: str) -> dict:
    """Flat `key = value` text file; '#' starts a comment."""
    out = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise UsageError(
                        f"{path}:{lineno}: expected 'key = value'")
                key, value = line.split("=", 1)
                out[key.strip().replace("-", "_")] = value.strip()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from exc
    return out


def _effective(args: argparse.Namespace, defaults: dict) -> dict:
    """Merge: explicit flags > config file > defaults."""
    params = dict(defaults)
    if getattr(args, "config", None):
        cfg = _read_config(args.config)
        unknown = set(cfg) - set(defaults)
        if unknown:
            raise UsageError(
                f"unknown config keys: {', '.join(sorted(unknown))}")
        params.update(cfg)
    for key in defaults:
        val = getattr(args, key, None)
        if val is not None:
            params[key] = val
    return params


def _default_threads(params: dict) -> int:
    if params.get("threads") is not None:
        return int(params["threads"])
    env = os.environ.get(ENV_THREADS)
    if env:
        return int(env)
    return os.cpu_count() or 1


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _write_manifest(subcommand: str, params: dict, outputs: list[str],
                    started: float) -> None:
    manifest = {
        "subcommand": subcommand,
        "parameters": {k: v for k, v in params.items()},
        "version": __version__,
        "duration_seconds": round(time.time() - started, 3),
        "outputs": {out: _sha256(out) for out in outputs},
    }
    path = outputs[0] + ".manifest.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _progress(msg: str) -> None:
    print(msg, file=sys.stderr, flush=True)


# ---------------------------------------------------------------- sweeps

_SWEEP_DEFAULTS = {
    "topology": "mlp", "width": 100, "kernel": None, "depth": 1000,
    "avg_last": 20, "sw_min": 0.0, "sw_max": 3.0, "sb_min": 0.0,
    "sb_max": 3.0, "res": 64, "seed": 0, "perturb": "off",
    "out": None, "threads": None, "mem_budget": str(2 << 30),
    "dtype": "f64",
}


def _region_from(params: dict) -> Region:
    return Region(float(params["sw_min"]), float(params["sw_max"]),
                  float(params["sb_min"]), float(params["sb_max"]),
                  int(params["res"]))


def _sweep_kwargs(params: dict) -> dict:
    perturb = str(params["perturb"])
    if perturb == "off":
        input_mode, epsilon = "independent", None
    else:
        input_mode, epsilon = "perturbed", float(perturb)
    dtype = {"f64": "float64", "f32": "float32",
             "float64": "float64", "float32": "float32"}.get(
                 str(params["dtype"]))
    if dtype is None:
        raise UsageError(f"unknown dtype {params['dtype']!r}")
    return {
        "depth": int(params["depth"]),
        "avg_last": int(params["avg_last"]),
        "master_seed": int(params["seed"]),
        "input_mode": input_mode,
        "epsilon": epsilon,
        "threads": _default_threads(params),
        "mem_budget": _parse_bytes(params["mem_budget"]),
        "dtype": dtype,
    }


def _cmd_sweep(args) -> None:
    started = time.time()
    params = _effective(args, _SWEEP_DEFAULTS)
    if params["out"] is None:
        raise UsageError("--out is required")
    cfg = _topology(params)
    if cfg.kind == "conv":
        params["kernel"] = cfg.kernel_size    # echo the effective default
    region = _region_from(params)
    kwargs = _sweep_kwargs(params)
    params["threads"] = kwargs["threads"]
    _progress(f"sweep: {region.resolution}x{region.resolution} grid, "
              f"{cfg.kind} N={cfg.width}, depth {kwargs['depth']}")
    grid = sweep(cfg, region, **kwargs)
    save(grid, params["out"])
    _write_manifest("sweep", params, [params["out"]], started)


_ZOOM_DEFAULTS = {
    "parent": None, "sw_min": None, "sw_max": None, "sb_min": None,
    "sb_max": None, "res": None, "out": None, "threads": None,
    "mem_budget": str(2 << 30),
}


def _cmd_zoom(args) -> None:
    started = time.time()
    params = _effective(args, _ZOOM_DEFAULTS)
    for key in ("parent", "out", "sw_min", "sw_max", "sb_min", "sb_max",
                "res"):
        if params[key] is None:
            raise UsageError(f"--{key.replace('_', '-')} is required")
    parent = load(params["parent"])
    region = _region_from(params)
    threads = _default_threads(params)
    params["threads"] = threads
    _progress(f"zoom: into [{region.sw_min}, {region.sw_max}] x "
              f"[{region.sb_min}, {region.sb_max}]")
    child = zoom(parent, region, threads=threads,
                 mem_budget=_parse_bytes(params["mem_budget"]))
    save(child, params["out"])
    _write_manifest("zoom", params, [params["out"]], started)


_TRADEOFF_DEFAULTS = {
    "topology": "mlp", "width": 1000, "kernel": None, "sb": 1.0,
    "sw_list": "0.5,1.6,3.0", "depths": "10,100,1000", "epsilon": 1e-5,
    "seed": 0, "out": None, "threads": None,
}


def _cmd_tradeoff(args) -> None:
    started = time.time()
    params = _effective(args, _TRADEOFF_DEFAULTS)
    if params["out"] is None:
        raise UsageError("--out is required")
    cfg = _topology(params)
    sw_values = [float(x) for x in str(params["sw_list"]).split(",")]
    depths = [int(x) for x in str(params["depths"]).split(",")]
    _progress(f"tradeoff: sigma_b={params['sb']}, "
              f"{len(sw_values)} sigma_w values, depths {depths}")
    rows = tradeoff_scan(cfg, float(params["sb"]), sw_values, depths,
                         master_seed=int(params["seed"]),
                         epsilon=float(params["epsilon"]))
    with open(params["out"], "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=[
            "sigma_w", "depth", "L_independent", "L_perturbed"])
        writer.writeheader()
        writer.writerows(rows)
    _write_manifest("tradeoff", params, [params["out"]], started)


_MEANFIELD_DEFAULTS = {
    "sw_min": 0.0, "sw_max": 3.0, "sb_min": 0.0, "sb_max": 3.0,
    "res": 64, "activation": "erf", "order": 512, "out": None,
}


def _cmd_meanfield(args) -> None:
    started = time.time()
    params = _effective(args, _MEANFIELD_DEFAULTS)
    if params["out"] is None:
        raise UsageError("--out is required")
    rule = normal_grid(int(params["order"]))
    res = int(params["res"])
    sw_axis = np.linspace(float(params["sw_min"]), float(params["sw_max"]),
                          res)
    sb_axis = np.linspace(float(params["sb_min"]), float(params["sb_max"]),
                          res)
    act = str(params["activation"])
    with open(params["out"], "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sigma_w", "sigma_b", "nu_star", "c_star",
                         "L_star"])
        for i, sb in enumerate(sb_axis):
            for sw in sw_axis:
                nu = fixed_point_variance(sw, sb, act, rule)
                c = fixed_point_covariance(nu, sw, sb, act, rule)
                writer.writerow([f"{sw:.10g}", f"{sb:.10g}", f"{nu:.12g}",
                                 f"{c:.12g}", f"{max(2*(nu-c), 0.0):.12g}"])
            _progress(f"meanfield: row {i + 1}/{res}")
    _write_manifest("meanfield", params, [params["out"]], started)


_BOUNDARY_DEFAULTS = {
    "tau": 0.01, "sb_min": 0.0, "sb_max": 3.0, "sb_res": 31,
    "sw_min": 0.0, "sw_max": 4.0, "tol": 1e-4, "activation": "erf",
    "order": 512, "out": None,
}


def _cmd_boundary(args) -> None:
    started = time.time()
    params = _effective(args, _BOUNDARY_DEFAULTS)
    if params["out"] is None:
        raise UsageError("--out is required")
    sb_values = np.linspace(float(params["sb_min"]), float(params["sb_max"]),
                            int(params["sb_res"]))
    rule = normal_grid(int(params["order"]))
    points = trace_boundary(float(params["tau"]), sb_values,
                            sw_min=float(params["sw_min"]),
                            sw_max=float(params["sw_max"]),
                            tol=float(params["tol"]),
                            activation=str(params["activation"]), rule=rule)
    with open(params["out"], "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sigma_w", "sigma_b"])
        for sw, sb in points:
            writer.writerow(["" if sw is None else f"{sw:.10g}",
                             f"{sb:.10g}"])
    _write_manifest("boundary", params, [params["out"]], started)


_FRACDIM_DEFAULTS = {
    "grid": None, "thresholds": "64", "jmin": None, "jmax": None,
    "out": None, "plot": None,
}


def _cmd_fracdim(args) -> None:
    started = time.time()
    params = _effective(args, _FRACDIM_DEFAULTS)
    if params["grid"] is None or params["out"] is None:
        raise UsageError("--grid and --out are required")
    grid = load(params["grid"])
    spec = str(params["thresholds"])
    if "," in spec:
        thresholds = np.array([float(x) for x in spec.split(",")])
    else:
        from .fractal import default_thresholds
        thresholds = default_thresholds(grid.values, int(spec))
    size = max(grid.values.shape)
    j1, j_max = default_j_range(size)
    if params["jmin"] is not None:
        j1 = int(params["jmin"])
    if params["jmax"] is not None:
        j_max = int(params["jmax"])
    _progress(f"fracdim: {len(thresholds)} thresholds, j in "
              f"[{j1}, {j_max}]")
    report = dimension_sweep(grid, thresholds, (j1, j_max))
    outputs = [params["out"]]
    with open(params["out"], "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2)
        fh.write("\n")
    if params["plot"]:
        with open(params["plot"], "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["tau", "j", "log2_count"])
            for rec in report.records:
                for j, n in rec.box_counts:
                    writer.writerow([f"{rec.tau:.10g}", j,
                                     f"{np.log2(n):.10g}"])
        outputs.append(params["plot"])
    _write_manifest("fracdim", params, outputs, started)


_RENDER_DEFAULTS = {"grid": None, "out": None, "scale": "linear"}


def _cmd_render(args) -> None:
    started = time.time()
    params = _effective(args, _RENDER_DEFAULTS)
    if params["grid"] is None or params["out"] is None:
        raise UsageError("--grid and --out are required")
    grid = load(params["grid"])
    render(grid, params["out"], scale=str(params["scale"]))
    _write_manifest("render", params, [params["out"]], started)


# ----------------------------------------------------------------- main

def _add_flags(sub: argparse.ArgumentParser, defaults: dict) -> None:
    sub.add_argument("--config")
    for key in defaults:
        sub.add_argument("--" + key.replace("_", "-"), dest=key,
                         default=None)


_COMMANDS = {
    "sweep": (_cmd_sweep, _SWEEP_DEFAULTS,
              "compute a divergence landscape over a sigma grid"),
    "zoom": (_cmd_zoom, _ZOOM_DEFAULTS,
             "re-sweep a sub-region of an existing landscape"),
    "tradeoff": (_cmd_tradeoff, _TRADEOFF_DEFAULTS,
                 "independent vs perturbed divergence across depths"),
    "meanfield": (_cmd_meanfield, _MEANFIELD_DEFAULTS,
                  "infinite-width fixed points over a sigma grid (CSV)"),
    "boundary": (_cmd_boundary, _BOUNDARY_DEFAULTS,
                 "trace the analytic order-to-chaos boundary (CSV)"),
    "fracdim": (_cmd_fracdim, _FRACDIM_DEFAULTS,
                "box-counting dimension of a landscape boundary (JSON)"),
    "render": (_cmd_render, _RENDER_DEFAULTS,
               "render a landscape to an 8-bit grayscale PGM"),
}


def _build_parser() -> _Parser:
    parser = _Parser(prog="phasefront",
                     description="Deep information propagation landscapes "
                                 "and their fractal boundary.")
    parser.add_argument("--version", action="version", version=__version__)
    subs = parser.add_subparsers(dest="subcommand")
    for name, (_, defaults, help_text) in _COMMANDS.items():
        sub = subs.add_parser(name, help=help_text)
        _add_flags(sub, defaults)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "subcommand", None):
            raise UsageError("a subcommand is required "
                             f"(one of: {', '.join(_COMMANDS)})")
        _COMMANDS[args.subcommand][0](args)
        return 0
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    except (ValueError, OSError, GridFormatError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
