"""Command line driver: batch recovery runs, tables, mesh utilities.

``recover run`` executes a YAML-configured sweep and writes a
deterministic ``results.csv`` (plus ``manifest.json`` with environment
and timing metadata) into the output directory.  ``recover table``
pretty-prints such a CSV.  ``recover mesh gen|import|export`` create,
normalize and convert mesh files.

Exit codes: 0 on success, 2 for configuration and usage errors (the
message names the offending key), 1 for runtime failures (the message
names the pipeline stage).
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from contextlib import contextmanager

import numpy as np
import yaml

from . import __version__
from .assembly import assemble_bundle
from .exact import CASES, get_case
from .femspace import build_layout
from .measurements import gaussian_set, load_csv, save_csv
from .mesh import (MeshError, export_mesh, generate_square_with_hole,
                   generate_unit_square, import_mesh)
from .quadrature import Q2_NODES, q1_shape
from .recovery import RepresenterFactory, recover, solve_background


class ConfigError(Exception):
    pass


class StageFailure(RuntimeError):
    def __init__(self, stage: str, err: BaseException):
        super().__init__(f"{stage}: {err}")
        self.stage = stage


@contextmanager
def _stage(name: str):
    try:
        yield
    except (ConfigError, StageFailure):
        raise
    except Exception as err:
        raise StageFailure(name, err) from err


def _require(cfg: dict, key: str, typ, default=None, required=False):
    if key not in cfg or cfg[key] is None:
        if required:
            raise ConfigError(f"missing required key {key!r}")
        return default
    val = cfg[key]
    if typ is float and isinstance(val, int):
        val = float(val)
    if not isinstance(val, typ):
        raise ConfigError(f"key {key!r} must be {typ.__name__},"
                          f" got {type(val).__name__}")
    return val


def _as_list(val):
    return val if isinstance(val, list) else [val]


MODES = ("plain", "jacobi", "jacobi_threshold")


def load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            cfg = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except yaml.YAMLError as err:
        raise ConfigError(f"config is not valid YAML: {err}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a mapping")
    validate_config(cfg)
    return cfg


def validate_config(cfg: dict) -> None:
    case = _require(cfg, "case", str, required=True)
    if case not in CASES:
        raise ConfigError(f"key 'case' must be one of {sorted(CASES)},"
                          f" got {case!r}")
    mesh = _require(cfg, "mesh", dict, required=True)
    kind = _require(mesh, "kind", str, required=True)
    if kind in ("square", "hole"):
        n = _require(mesh, "n", int, required=True)
        if n < 1:
            raise ConfigError("key 'mesh.n' must be >= 1")
        if kind == "hole":
            _require(mesh, "radius", float, default=0.1)
    elif kind == "file":
        path = _require(mesh, "path", str, required=True)
        if not os.path.exists(path):
            raise ConfigError(f"key 'mesh.path': no such file {path!r}")
    else:
        raise ConfigError("key 'mesh.kind' must be square, hole or file")

    meas = _require(cfg, "measurements", list, required=True)
    if not meas:
        raise ConfigError("key 'measurements' must list at least one row")
    for i, row in enumerate(meas):
        if not isinstance(row, dict):
            raise ConfigError(f"key 'measurements[{i}]' must be a mapping")
        for name in ("m_u", "m_p"):
            m = _require(row, name, int, default=0)
            if m < 0 or math.isqrt(m) ** 2 != m:
                raise ConfigError(f"key 'measurements[{i}].{name}' must be a"
                                  f" perfect square, got {m}")

    for s in _as_list(cfg.get("s", 1.0)):
        if not isinstance(s, (int, float)) or not 0.0 < float(s) < 2.0:
            raise ConfigError(f"key 's' values must lie in (0, 2), got {s}")
    for mode in _as_list(cfg.get("mode", "jacobi_threshold")):
        if mode not in MODES:
            raise ConfigError(f"key 'mode' must be one of {MODES}, got {mode!r}")
    for key, typ in (("k", float), ("eps", float), ("r", float),
                     ("tol_multiplier", float), ("tol_lift", float),
                     ("bg_tol", float)):
        _require(cfg, key, typ)
    _require(cfg, "partial", bool, default=False)
    _require(cfg, "fields", bool, default=False)
    _require(cfg, "save_measurements", bool, default=False)
    um = cfg.get("unknown_markers")
    if um is not None and not isinstance(um, list):
        raise ConfigError("key 'unknown_markers' must be a list or null")
    csv_in = cfg.get("measurements_csv")
    if csv_in is not None and not os.path.exists(csv_in):
        raise ConfigError(f"key 'measurements_csv': no such file {csv_in!r}")


def build_mesh_from_config(mcfg: dict):
    """Returns (mesh, refinement level or -1, disk to exclude or None)."""
    kind = mcfg["kind"]
    if kind == "square":
        return generate_unit_square(mcfg["n"]), mcfg["n"], None
    if kind == "hole":
        center = tuple(mcfg.get("center", (0.5, 0.5)))
        radius = float(mcfg.get("radius", 0.1))
        mesh = generate_square_with_hole(mcfg["n"], center=center,
                                         radius=radius)
        return mesh, mcfg["n"], (center[0], center[1], radius)
    mesh = import_mesh(mcfg["path"])
    excl = mcfg.get("exclude_disk")
    return mesh, -1, tuple(excl) if excl else None


RESULT_COLUMNS = ["m_u", "m_p", "s", "n", "mode", "eps", "cond_G", "cond_GP",
                  "rank", "err_u", "err_p", "err"]
QOI_COLUMNS = ["c_D", "c_L"]


def _fmt(val) -> str:
    if val is None:
        return ""
    if isinstance(val, str):
        return val
    if isinstance(val, (int, np.integer)):
        return str(int(val))
    return f"{float(val):.6g}"


def emit_table(rows: list[dict], path: str) -> None:
    cols = list(RESULT_COLUMNS)
    if any(c in row for row in rows for c in QOI_COLUMNS):
        cols += QOI_COLUMNS
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for row in rows:
            w.writerow([_fmt(row.get(c)) for c in cols])


def format_table(path: str) -> str:
    with open(path, newline="") as fh:
        table = list(csv.reader(fh))
    if not table:
        return "(empty)"
    widths = [max(len(r[i]) if i < len(r) else 0 for r in table)
              for i in range(len(table[0]))]
    lines = []
    for j, r in enumerate(table):
        lines.append("  ".join(c.rjust(w) for c, w in zip(r, widths)))
        if j == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines)


def _dump_field(bundle, fld, path: str) -> None:
    """Write x,y,u1,u2,p at the scalar velocity nodes, pressure lifted
    to the quadratic nodes by bilinear evaluation."""
    layout = bundle.layout
    T = layout.T
    shp = q1_shape(Q2_NODES)  # (4, 9)
    pnode = np.zeros(T)
    # per-cell bilinear values at the 9 nodes; shared nodes agree
    vals = fld.p[layout.mesh.cells] @ shp  # (C, 9)
    pnode[layout.cell_dofs.ravel()] = vals.ravel()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "u1", "u2", "p"])
        for i in range(T):
            w.writerow([f"{layout.node_xy[i, 0]:.10g}",
                        f"{layout.node_xy[i, 1]:.10g}",
                        f"{fld.u[i]:.10g}", f"{fld.u[T + i]:.10g}",
                        f"{pnode[i]:.10g}"])


def run_experiment(cfg: dict, outdir: str, log=lambda *_: None) -> dict:
    t_start = time.perf_counter()
    os.makedirs(outdir, exist_ok=True)
    exact = get_case(cfg["case"])
    with _stage("mesh"):
        mesh, n_level, exclude = build_mesh_from_config(cfg["mesh"])
    partial = bool(cfg.get("partial", False))
    with _stage("layout"):
        layout = build_layout(mesh, cfg.get("unknown_markers"))
    with _stage("assembly"):
        bundle = assemble_bundle(layout)
    log(f"mesh: {mesh.num_cells} cells, velocity dofs {2 * layout.T},"
        f" pressure dofs {layout.Ntilde}, boundary dofs {2 * layout.N_b}")

    k = float(cfg.get("k", 0.4))
    eps = float(cfg.get("eps", 1e-10))
    r = float(cfg.get("r", 0.1))
    factory = RepresenterFactory(
        bundle, k=k,
        tol_multiplier=float(cfg.get("tol_multiplier", 1e-9)),
        tol_lift=float(cfg.get("tol_lift", 1e-12)))
    with _stage("background"):
        background = solve_background(bundle, exact, partial=partial,
                                      tol=float(cfg.get("bg_tol", 1e-10)))

    csv_in = cfg.get("measurements_csv")
    s_values = [float(s) for s in _as_list(cfg.get("s", 1.0))]
    modes = _as_list(cfg.get("mode", "jacobi_threshold"))
    qoi_marker = cfg.get("qoi_marker")

    msets = []
    with _stage("measurements"):
        if csv_in is not None:
            msets.append(load_csv(csv_in))
        else:
            from .measurements import apply_to_analytic

            for i, row in enumerate(cfg["measurements"]):
                mset = gaussian_set(row.get("m_u", 0), row.get("m_p", 0),
                                    r=r, exclude_disk=exclude)
                mset.values = apply_to_analytic(bundle, mset, exact)
                if cfg.get("save_measurements"):
                    save_csv(os.path.join(outdir, f"measurements_{i}.csv"),
                             mset)
                msets.append(mset)

    rows = []
    timings = []
    total = len(msets) * len(s_values) * len(modes)
    idx = 0
    for mset in msets:
        for s in s_values:
            for mode in modes:
                idx += 1
                t0 = time.perf_counter()
                with _stage("recovery"):
                    res = recover(bundle, mset, exact, s=s, k=k, mode=mode,
                                  eps=eps, partial=partial, factory=factory,
                                  background=background,
                                  qoi_marker=qoi_marker)
                dt = time.perf_counter() - t0
                row = {
                    "m_u": mset.m_u, "m_p": mset.m_p, "s": s, "n": n_level,
                    "mode": mode, "eps": eps,
                    "cond_G": res.report.cond_G,
                    "cond_GP": res.report.cond_GP,
                    "rank": res.report.rank,
                    "err_u": res.errors["err_u"],
                    "err_p": res.errors["err_p"],
                    "err": res.errors["err"],
                }
                if res.qoi is not None:
                    row.update({k2: float(v) for k2, v in res.qoi.items()})
                rows.append(row)
                timings.append(round(dt, 3))
                log(f"[{idx}/{total}] m_u={row['m_u']} m_p={row['m_p']}"
                    f" s={s} mode={mode} err={row['err']:.4g} ({dt:.1f}s)")
                if cfg.get("fields"):
                    fdir = os.path.join(outdir, "fields")
                    os.makedirs(fdir, exist_ok=True)
                    with _stage("output"):
                        _dump_field(bundle, res.field,
                                    os.path.join(fdir, f"row_{idx:03d}.csv"))

    with _stage("output"):
        emit_table(rows, os.path.join(outdir, "results.csv"))
        manifest = {
            "config": cfg,
            "versions": _versions(),
            "mesh": {"cells": mesh.num_cells,
                     "vertices": mesh.num_vertices,
                     "velocity_dofs": 2 * layout.T,
                     "pressure_dofs": layout.Ntilde},
            "row_seconds": timings,
            "total_seconds": round(time.perf_counter() - t_start, 3),
        }
        with open(os.path.join(outdir, "manifest.json"), "w") as fh:
            json.dump(manifest, fh, indent=2, default=str)
            fh.write("\n")
    return {"rows": rows, "outdir": outdir}


def _versions() -> dict:
    import scipy

    from ._kernels import HAS_NUMBA, PURE_NUMPY

    out = {
        "python": sys.version.split()[0],
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "package": __version__,
        "kernels": "numba" if (HAS_NUMBA and not PURE_NUMPY) else "numpy",
    }
    if HAS_NUMBA:
        import numba

        out["numba"] = numba.__version__
    return out


def _cmd_run(args) -> int:
    if args.threads is not None:
        os.environ["RECOVER_THREADS"] = str(args.threads)
    cfg = load_config(args.config)
    log = (lambda *_: None) if args.quiet else (lambda *m: print(*m))
    out = run_experiment(cfg, args.out, log=log)
    log(f"wrote {os.path.join(out['outdir'], 'results.csv')}")
    return 0


def _cmd_table(args) -> int:
    if not os.path.exists(args.results):
        raise ConfigError(f"no such results file: {args.results}")
    print(format_table(args.results))
    return 0


def _cmd_mesh_gen(args) -> int:
    with _stage("mesh"):
        if args.kind == "square":
            mesh = generate_unit_square(args.n)
        else:
            mesh = generate_square_with_hole(
                args.n, center=(args.center[0], args.center[1]),
                radius=args.radius)
        export_mesh(mesh, args.out)
    print(f"wrote {args.out}: {mesh.num_vertices} vertices,"
          f" {mesh.num_cells} cells,"
          f" {len(mesh.boundary_edges)} boundary edges")
    return 0


def _cmd_mesh_import(args) -> int:
    with _stage("mesh"):
        mesh = import_mesh(args.input)
        export_mesh(mesh, args.out)
    print(f"validated {args.input}: {mesh.num_vertices} vertices,"
          f" {mesh.num_cells} cells; normalized copy at {args.out}")
    return 0


def _cmd_mesh_export(args) -> int:
    with _stage("mesh"):
        mesh = import_mesh(args.input)
        os.makedirs(args.outdir, exist_ok=True)
        vp = os.path.join(args.outdir, "vertices.csv")
        cp = os.path.join(args.outdir, "cells.csv")
        bp = os.path.join(args.outdir, "boundary.csv")
        with open(vp, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["id", "x", "y"])
            for i, (x, y) in enumerate(mesh.vertices):
                w.writerow([i, repr(float(x)), repr(float(y))])
        with open(cp, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["id", "v0", "v1", "v2", "v3"])
            for i, cell in enumerate(mesh.cells):
                w.writerow([i] + [int(v) for v in cell])
        with open(bp, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["v0", "v1", "marker", "name"])
            for v0, v1, m in mesh.boundary_edges:
                w.writerow([int(v0), int(v1), int(m),
                            mesh.markers[int(m)]])
    print(f"wrote {vp}, {cp}, {bp}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="recover",
        description="Recover Stokes velocity-pressure fields from sparse"
                    " measurements with unknown boundary data.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a YAML-configured recovery sweep")
    p_run.add_argument("--config", required=True, help="YAML config file")
    p_run.add_argument("--out", default="out", help="output directory")
    p_run.add_argument("--threads", type=int, default=None,
                       help="worker threads for representer solves")
    p_run.add_argument("--quiet", action="store_true")
    p_run.set_defaults(func=_cmd_run)

    p_table = sub.add_parser("table", help="pretty-print a results.csv")
    p_table.add_argument("results")
    p_table.set_defaults(func=_cmd_table)

    p_mesh = sub.add_parser("mesh", help="mesh utilities")
    msub = p_mesh.add_subparsers(dest="mesh_command", required=True)
    m_gen = msub.add_parser("gen", help="generate a built-in mesh family")
    m_gen.add_argument("--kind", choices=("square", "hole"), required=True)
    m_gen.add_argument("--n", type=int, required=True,
                       help="refinement level (>= 1)")
    m_gen.add_argument("--center", type=float, nargs=2, default=(0.5, 0.5),
                       metavar=("CX", "CY"))
    m_gen.add_argument("--radius", type=float, default=0.1)
    m_gen.add_argument("--out", required=True)
    m_gen.set_defaults(func=_cmd_mesh_gen)
    m_imp = msub.add_parser("import",
                            help="validate a mesh file, write normalized copy")
    m_imp.add_argument("input")
    m_imp.add_argument("--out", required=True)
    m_imp.set_defaults(func=_cmd_mesh_import)
    m_exp = msub.add_parser("export", help="convert a mesh file to CSV tables")
    m_exp.add_argument("input")
    m_exp.add_argument("--outdir", required=True)
    m_exp.set_defaults(func=_cmd_mesh_export)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except StageFailure as err:
        print(f"error [{err.stage}]: {err}", file=sys.stderr)
        return 1
    except MeshError as err:
        print(f"error [mesh]: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
