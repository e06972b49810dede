"""Command-line front end.

Exit codes: 0 ok, 2 usage or input error, 3 geometry error, 4 solve failure.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import io as _io
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import coarse_to_fine as c2f
from .decimation import DecimationError, decimate
from .features import FeatureError, FeatureSet, fallback_descriptors, load_features
from .io import (CorrespondenceFile, CorrespondenceFormatError, load_correspondences,
                 load_ground_truth, save_correspondences)
from .mesh import Mesh, MeshFormatError, extend, load_mesh, save_mesh, validate
from .metrics import evaluate
from .product import build_constraint_system, build_product_space, check_feasible, indicator_from_records
from .repair import UnrepairableMeshError, close_holes, make_manifold

EXIT_OK, EXIT_USAGE, EXIT_GEOMETRY, EXIT_SOLVE = 0, 2, 3, 4

logger = logging.getLogger("partmatch")

DEFAULTS = {
    "input": {"full": "", "partial": "", "features_full": "", "features_partial": "",
              "ground_truth": ""},
    "schedule": {"targets": "200, 400, 600, 800, 1000", "fallback_target": "100",
                 "radius": "1", "max_radius": "3"},
    "solver": {"budget": "7200", "backend": "builtin", "deterministic": "true"},
    "features": {"dim": "16", "time_samples": "16", "close_boundary": "yes"},
    "output": {"directory": "run"},
}


class UsageError(Exception):
    pass


def default_config() -> configparser.ConfigParser:
    cfg = configparser.ConfigParser()
    cfg.read_dict(DEFAULTS)
    return cfg


def load_config(path=None, overrides=None) -> configparser.ConfigParser:
    cfg = default_config()
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise UsageError(f"config file not found: {path}")
        try:
            cfg.read(p)
        except configparser.Error as exc:
            raise UsageError(f"bad config file: {exc}") from exc
        # relative input paths are relative to the config file
        for key, val in cfg["input"].items():
            if val and not Path(val).is_absolute():
                cfg["input"][key] = str((p.parent / val).resolve())
    if os.environ.get("PARTMATCH_BUDGET"):
        cfg["solver"]["budget"] = os.environ["PARTMATCH_BUDGET"]
    for (sec, key), val in (overrides or {}).items():
        if val is not None:
            cfg[sec][key] = str(val)
    return cfg


def config_text(cfg: configparser.ConfigParser) -> str:
    buf = _io.StringIO()
    cfg.write(buf)
    return buf.getvalue()


def schedule_from(cfg) -> c2f.LevelSchedule:
    s = cfg["schedule"]
    try:
        targets = [int(t) for t in s["targets"].replace(",", " ").split()]
        budget = float(cfg["solver"]["budget"])
        sched = c2f.LevelSchedule(targets, int(s["fallback_target"]), int(s["radius"]),
                                  int(s["max_radius"]), total_budget=budget)
    except ValueError as exc:
        raise UsageError(f"bad schedule: {exc}") from exc
    if budget < 0:
        raise UsageError("budget must be nonnegative")
    return sched


def _read_mesh(path) -> Mesh:
    if not path:
        raise UsageError("mesh path missing")
    if not Path(path).is_file():
        raise UsageError(f"file not found: {path}")
    return load_mesh(path)


def _features(path, mesh: Mesh, cfg) -> FeatureSet:
    if path:
        if not Path(path).is_file():
            raise UsageError(f"file not found: {path}")
        return load_features(path, mesh.n_vertices)
    f = cfg["features"]
    close = f.get("close_boundary", "yes").strip().lower() in ("1", "yes", "true", "on")
    return fallback_descriptors(mesh, int(f["dim"]), int(f["time_samples"]),
                                close_boundary=close)


# --- subcommands ---------------------------------------------------------

def cmd_repair(args) -> int:
    mesh = _read_mesh(args.input)
    out, log = make_manifold(mesh)
    if args.close_holes is not None:
        limit = None if args.close_holes == "all" else int(args.close_holes)
        out, hole_log = close_holes(out, limit)
        log.closed_holes = hole_log.closed_holes
    save_mesh(out, args.output)
    if args.log:
        Path(args.log).write_text(log.report())
    else:
        sys.stdout.write(log.report())
    return EXIT_OK


def cmd_decimate(args) -> int:
    mesh = _read_mesh(args.input)
    coarse, trace = decimate(mesh, args.faces)
    save_mesh(coarse, args.output)
    if args.trace:
        trace.save(args.trace)
    return EXIT_OK


def _inputs(cfg):
    i = cfg["input"]
    X = _read_mesh(i["full"])
    Y = _read_mesh(i["partial"])
    for name, m in (("full", X), ("partial", Y)):
        rep = validate(m)
        if rep:
            raise MeshFormatError(f"{name} mesh is invalid: {sorted(rep.kinds())}")
    fX = _features(i["features_full"], X, cfg)
    fY = _features(i["features_partial"], Y, cfg)
    return X, Y, fX, fY


def _finish_run(run_dir: Path, res: c2f.PipelineResult) -> int:
    (run_dir / "status").write_text(res.status + "\n")
    if res.records:
        cf = CorrespondenceFile(res.records, res.meshX.checksum(), res.meshY.checksum(),
                                res.levels[-1].level, res.status, res.levels[-1].objective)
        save_correspondences(run_dir / "final.corr", cf)
        save_mesh(res.meshX, run_dir / "final_full.off")
        save_mesh(res.meshY, run_dir / "final_partial.off")
    print(f"status {res.status}")
    return EXIT_SOLVE if res.failed else EXIT_OK


def run_match(cfg, out_dir) -> int:
    sched = schedule_from(cfg)
    X, Y, fX, fY = _inputs(cfg)
    run_dir = Path(out_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "config.ini").write_text(config_text(cfg))
    res = c2f.run_pipeline(X, Y, fX, fY, sched, run_dir=run_dir,
                           backend=cfg["solver"]["backend"])
    return _finish_run(run_dir, res)


def cmd_match(args) -> int:
    cfg = load_config(args.config, {("solver", "budget"): args.budget,
                                    ("output", "directory"): args.out})
    return run_match(cfg, cfg["output"]["directory"])


def cmd_refine(args) -> int:
    run_dir = Path(args.run_dir)
    if not (run_dir / "config.ini").is_file():
        raise UsageError(f"{run_dir} is not a run directory")
    cfg = load_config(run_dir / "config.ini", {("solver", "budget"): args.budget})
    sched = schedule_from(cfg)
    if args.targets:
        sched = c2f.LevelSchedule([int(t) for t in args.targets.split(",")],
                                  sched.fallback_target, sched.radius, sched.max_radius,
                                  total_budget=sched.total_budget)
    start, prior = c2f.resume_state(run_dir)
    if start == 0:
        raise UsageError("run directory has no completed level to refine")
    if start >= len(sched.targets):
        print("all levels already completed")
        return EXIT_OK
    X, Y, fX, fY = _inputs(cfg)
    res = c2f.run_pipeline(X, Y, fX, fY, sched, run_dir=run_dir,
                           backend=cfg["solver"]["backend"], start_level=start, prior=prior)
    return _finish_run(run_dir, res)


def cmd_eval(args) -> int:
    for p in (args.correspondences, args.ground_truth, args.full, args.partial):
        if not Path(p).is_file():
            raise UsageError(f"file not found: {p}")
    X, Y = load_mesh(args.full), load_mesh(args.partial)
    cf = load_correspondences(args.correspondences)
    cf.check_meshes(X, Y)
    gt = load_ground_truth(args.ground_truth)
    exclude = np.flatnonzero(gt < 0)
    prod = build_product_space(extend(X), extend(Y))
    bits = indicator_from_records(prod, cf.records)
    rep_ok = check_feasible(build_constraint_system(prod), bits)
    if not rep_ok.ok:
        print(f"warning: correspondences are not feasible ({rep_ok})", file=sys.stderr)
    records = [prod.column(int(j)) for j in np.flatnonzero(bits)]
    if len(gt) != Y.n_vertices:
        raise UsageError(f"ground truth has {len(gt)} entries, partial mesh has {Y.n_vertices} vertices")
    report = evaluate(records, X, Y, gt, exclude)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report.write(out / "report.txt")
    report.write_curve(out / "curve.csv")
    print(f"mean_error {report.mean_error!r}")
    print(f"median_error {report.median_error!r}")
    return EXIT_OK


def _pipeline_pair(job):
    i, row, base_cfg_text, out_root = job
    cfg = configparser.ConfigParser()
    cfg.read_string(base_cfg_text)
    for key in ("full", "partial", "features_full", "features_partial", "ground_truth"):
        cfg["input"][key] = row.get(key, "") or ""
    run_dir = Path(out_root) / f"pair_{i:03d}"
    name = row.get("name") or f"pair_{i:03d}"
    try:
        code = run_match(cfg, run_dir)
    except Exception as exc:  # a broken pair is counted, not fatal
        return name, "failed", float("nan"), f"{type(exc).__name__}: {exc}"
    if code != EXIT_OK:
        return name, "failed", float("nan"), "no matching within budget"
    status = (run_dir / "status").read_text().strip()
    err = float("nan")
    if row.get("ground_truth"):
        try:
            X = load_mesh(run_dir / "final_full.off")
            Y = load_mesh(run_dir / "final_partial.off")
            cf = load_correspondences(run_dir / "final.corr")
            gt_full = load_ground_truth(row["ground_truth"])
            gt = _ground_truth_at_level(gt_full, Y, cfg, X)
            prod = build_product_space(extend(X), extend(Y))
            bits = indicator_from_records(prod, cf.records)
            recs = [prod.column(int(j)) for j in np.flatnonzero(bits)]
            err = evaluate(recs, X, Y, gt, np.flatnonzero(gt < 0)).mean_error
        except Exception as exc:
            return name, status, float("nan"), f"eval error: {exc}"
    return name, status, err, ""


def _ground_truth_at_level(gt_full, Y_level: Mesh, cfg, X_level: Mesh):
    """Ground truth for level meshes whose vertices are subsets of the inputs."""
    Xin = load_mesh(cfg["input"]["full"])
    Yin = load_mesh(cfg["input"]["partial"])
    xpos = {tuple(p): i for i, p in enumerate(X_level.vertices.tolist())}
    ypos = {tuple(p): i for i, p in enumerate(Yin.vertices.tolist())}
    out = np.full(Y_level.n_vertices, -1, dtype=np.int64)
    for j, p in enumerate(Y_level.vertices.tolist()):
        yi = ypos.get(tuple(p))
        if yi is None or gt_full[yi] < 0:
            continue
        xi = xpos.get(tuple(Xin.vertices[gt_full[yi]].tolist()))
        if xi is not None:
            out[j] = xi
    return out


def cmd_pipeline(args) -> int:
    path = Path(args.manifest)
    if not path.is_file():
        raise UsageError(f"manifest not found: {path}")
    with open(path, newline="") as fh:
        rows = [r for r in csv.DictReader(fh) if any((v or "").strip() for v in r.values())]
    if not rows:
        raise UsageError("empty manifest")
    base = load_config(args.config, {("solver", "budget"): args.budget})
    for r in rows:
        for k, v in list(r.items()):
            if k in ("full", "partial", "features_full", "features_partial", "ground_truth") \
                    and v and not Path(v).is_absolute():
                r[k] = str((path.parent / v).resolve())
    workers = args.workers or int(os.environ.get("PARTMATCH_WORKERS", "1"))
    jobs = [(i, r, config_text(base), args.out) for i, r in enumerate(rows)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            results = list(ex.map(_pipeline_pair, jobs))
    else:
        results = [_pipeline_pair(j) for j in jobs]
    lines = [f"{'pair':<24} {'status':<24} {'error x100':>10}"]
    for name, status, err, note in results:
        e = "-" if not np.isfinite(err) else f"{100 * err:.2f}"
        lines.append(f"{name:<24} {status:<24} {e:>10}" + (f"  # {note}" if note else ""))
    errs = [e for _, s, e, _ in results if np.isfinite(e)]
    failures = sum(s == "failed" for _, s, _, _ in results)
    mean = f"{100 * float(np.mean(errs)):.2f}" if errs else "-"
    lines.append(f"{'mean':<24} {f'failed {failures}/{len(results)}':<24} {mean:>10}")
    table = "\n".join(lines) + "\n"
    Path(args.out).mkdir(parents=True, exist_ok=True)
    (Path(args.out) / "table.txt").write_text(table)
    sys.stdout.write(table)
    return EXIT_OK


# --- entry point -----------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="partmatch",
                                description="Geometrically consistent partial-to-full shape matching.")
    p.add_argument("--print-config", action="store_true", help="print default configuration and exit")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command")

    r = sub.add_parser("repair", help="make a mesh manifold, oriented and optionally closed")
    r.add_argument("input")
    r.add_argument("output")
    r.add_argument("--close-holes", metavar="N|all",
                   help="close boundary loops with at most N edges (or all)")
    r.add_argument("--log", help="write the repair log here instead of stdout")
    r.set_defaults(func=cmd_repair)

    d = sub.add_parser("decimate", help="decimate to a face target")
    d.add_argument("input")
    d.add_argument("output")
    d.add_argument("--faces", type=int, required=True)
    d.add_argument("--trace", help="write the collapse trace (.npz)")
    d.set_defaults(func=cmd_decimate)

    m = sub.add_parser("match", help="run the coarse-to-fine matcher for one pair")
    m.add_argument("--config", required=True)
    m.add_argument("--out", help="run directory (overrides [output] directory)")
    m.add_argument("--budget", type=float, help="total solver budget in seconds")
    m.set_defaults(func=cmd_match)

    f = sub.add_parser("refine", help="resume a run directory at its next level")
    f.add_argument("run_dir")
    f.add_argument("--targets", help="replace the schedule, e.g. 200,400,600")
    f.add_argument("--budget", type=float)
    f.set_defaults(func=cmd_refine)

    e = sub.add_parser("eval", help="evaluate a correspondence file against ground truth")
    e.add_argument("--correspondences", required=True)
    e.add_argument("--ground-truth", required=True)
    e.add_argument("--full", required=True)
    e.add_argument("--partial", required=True)
    e.add_argument("--out", default="eval")
    e.set_defaults(func=cmd_eval)

    b = sub.add_parser("pipeline", help="batch-match the pairs of a CSV manifest")
    b.add_argument("manifest")
    b.add_argument("--config")
    b.add_argument("--out", default="batch")
    b.add_argument("--workers", type=int)
    b.add_argument("--budget", type=float)
    b.set_defaults(func=cmd_pipeline)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.print_config:
        sys.stdout.write(config_text(default_config()))
        return EXIT_OK
    if not args.command:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except (UsageError, FileNotFoundError, MeshFormatError, FeatureError,
            CorrespondenceFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (UnrepairableMeshError, DecimationError) as exc:
        print(f"geometry error: {exc}", file=sys.stderr)
        return EXIT_GEOMETRY


if __name__ == "__main__":
    sys.exit(main())
