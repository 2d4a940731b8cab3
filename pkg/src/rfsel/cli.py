"""Command line runner: ``rfsel run | gen | report``."""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import yaml

from .config import WORKERS_ENV, ConfigError, RunConfig, load_config
from .dataset import DatasetError, write_csv
from .evaluation import (ErrorReport, ExperimentResult, SelectionMatrix, compare_methods,
                         replicate_error, replicate_resamples, resample_fingerprint,
                         run_replicate, scs_analysis)
from .synthgen import SyntheticSpec, generate_synthetic

log = logging.getLogger("rfsel")

EXIT_OK, EXIT_INTERNAL, EXIT_CONFIG, EXIT_DATASET = 0, 1, 2, 3

SCS_COLUMNS = ("method", "c", "f", "ratio")
ERROR_COLUMNS = ("method", "mean_error", "p_value", "best", "equivalent_to_best")
TIMING_COLUMNS = ("method", "mean_seconds", "replicates")
PAYLOAD_FILES = ("scs.json", "errors.json", "selections.json", "scs.csv", "errors.csv")

# worker-process state, set once per process by _init_worker
_STATE: dict = {}


def format_percent(c: float, f: float) -> str:
    """c/f as an integer percentage, halves rounded up."""
    if f <= 0:
        return "0%"
    return f"{math.floor(100.0 * c / f + 0.5):d}%"


def _init_worker(dataset, methods, resamples, validation, seed, duplicates):
    _STATE.update(d=dataset, methods=methods, resamples=resamples, validation=validation,
                  seed=seed, duplicates=duplicates)


def _task(job):
    i, r = job
    s = _STATE
    method, rs = s["methods"][i], s["resamples"][r]
    try:
        mask, secs, iters = run_replicate(s["d"], method, rs, s["seed"], r, s["duplicates"])
        err = replicate_error(s["d"], rs, mask, s["validation"], s["seed"], r)
    except Exception as e:
        raise RuntimeError(f"{method.name}: replicate {r} failed: {e!r}") from e
    return mask, secs, iters, err


def execute(cfg: RunConfig, dataset, workers: Optional[int] = None) -> list:
    """Run every (method, replicate) task and assemble results in config order."""
    workers = cfg.workers if workers is None else workers
    resamples = replicate_resamples(dataset.n_objects, cfg.replicates, cfg.seed)
    jobs = [(i, r) for i in range(len(cfg.methods)) for r in range(cfg.replicates)]
    init = (dataset, cfg.methods, resamples, cfg.validation, cfg.seed, cfg.duplicates)
    t0 = time.perf_counter()
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker,
                                 initargs=init) as pool:
            out = list(pool.map(_task, jobs))
    else:
        _init_worker(*init)
        out = [_task(j) for j in jobs]
    log.info("%d tasks finished in %.1fs with %d worker(s)", len(jobs),
             time.perf_counter() - t0, workers)
    fp = resample_fingerprint(resamples)
    results = []
    B = cfg.replicates
    for i, method in enumerate(cfg.methods):
        rows = out[i * B:(i + 1) * B]
        secs = np.array([o[1] for o in rows])
        matrix = SelectionMatrix(method.name, np.array([o[0] for o in rows]), resamples, secs,
                                 float(secs.sum()), np.array([o[2] for o in rows]))
        errors = ErrorReport(method.name, np.array([o[3] for o in rows]), fp)
        results.append(ExperimentResult(method.name, matrix, scs_analysis(matrix, cfg.scs_alpha),
                                        errors))
    return results


def _num(x: float):
    return None if x is None or not math.isfinite(x) else float(x)


def _comparisons(results: Sequence[ExperimentResult], alpha: float) -> dict:
    reports = [r.errors for r in results if r.errors is not None]
    if len(reports) < 2:
        return {}
    return {row.method: row for row in compare_methods(reports, alpha)}


def emit_report(results: Sequence[ExperimentResult], fmt: str, outdir, alpha: float = 0.01) -> list:
    """Write the SCS, error and timing tables as ``csv`` (human) or ``json`` (machine).

    Returns the written paths. An empty result set yields headers-only files.
    """
    if fmt not in ("csv", "json"):
        raise ValueError(f"format must be 'csv' or 'json', got {fmt!r}")
    outdir = Path(outdir)
    try:
        outdir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise OSError(f"cannot create output directory {outdir}: {e}") from e
    cmp = _comparisons(results, alpha)
    scs, errs, timing = [], [], []
    for res in results:
        s = res.scs
        scs.append({"method": res.method, "c": s.c, "f": s.f, "ratio": s.ratio,
                    "p_hat": s.p_hat, "scs_set": [int(i) for i in s.scs_set]})
        row = cmp.get(res.method)
        e = {"method": res.method,
             "mean_error": _num(res.errors.mean_error) if res.errors is not None else None,
             "p_value": _num(row.p_value) if row else None,
             "best": row.best if row else None,
             "equivalent_to_best": row.equivalent_to_best if row else None}
        if fmt == "json":
            e["errors"] = [_num(x) for x in res.errors.errors] if res.errors is not None else []
        errs.append(e)
        timing.append({"method": res.method, "mean_seconds": res.mean_seconds,
                       "replicates": res.matrix.n_replicates})
    paths = []
    if fmt == "json":
        for name, rows in (("scs", scs), ("errors", errs), ("timing", timing)):
            p = outdir / f"{name}.json"
            p.write_text(json.dumps(rows, indent=1, allow_nan=False) + "\n")
            paths.append(p)
        return paths
    human = {
        "scs": (SCS_COLUMNS, [[r["method"], f"{r['c']:.1f}", f"{r['f']:.1f}",
                               format_percent(r["c"], r["f"])] for r in scs]),
        "errors": (ERROR_COLUMNS, [[r["method"], _fmt(r["mean_error"], "{:.4f}"),
                                    _fmt(r["p_value"], "{:.3g}"), _fmt(r["best"]),
                                    _fmt(r["equivalent_to_best"])] for r in errs]),
        "timing": (TIMING_COLUMNS, [[r["method"], f"{r['mean_seconds']:.3f}",
                                     r["replicates"]] for r in timing]),
    }
    for name, (cols, rows) in human.items():
        p = outdir / f"{name}.csv"
        with p.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            w.writerows(rows)
        paths.append(p)
    return paths


def _fmt(x, spec: str = "{}") -> str:
    if x is None:
        return "NA"
    return spec.format(x)


def _write_selections(results, outdir: Path) -> Path:
    payload = [{"method": r.method,
                "selected": [np.flatnonzero(row).tolist() for row in r.matrix.selected],
                "iterations": [int(i) for i in r.matrix.iterations]} for r in results]
    p = outdir / "selections.json"
    p.write_text(json.dumps(payload, indent=1) + "\n")
    return p


def _versions() -> dict:
    import numba
    from importlib.metadata import PackageNotFoundError, version
    try:
        pkg = version("artifact")
    except PackageNotFoundError:
        pkg = "unknown"
    return {"python": platform.python_version(), "numpy": np.__version__,
            "numba": numba.__version__, "rfsel": pkg}


def write_run(cfg: RunConfig, results, outdir) -> Path:
    """Emit all tables, the selections and a manifest; returns the manifest path."""
    outdir = Path(outdir)
    emit_report(results, "json", outdir, cfg.compare_alpha)
    emit_report(results, "csv", outdir, cfg.compare_alpha)
    _write_selections(results, outdir)
    hashes = {name: hashlib.sha256((outdir / name).read_bytes()).hexdigest()
              for name in PAYLOAD_FILES}
    raw = dict(cfg.raw)
    raw["seed"] = cfg.seed
    raw["data"] = cfg.data.to_dict()  # csv paths resolved so the manifest replays anywhere
    manifest = {"config": raw, "seed": cfg.seed, "versions": _versions(),
                "data_source": cfg.data.to_dict(),
                "methods": [m.name for m in cfg.methods],
                "payload_sha256": hashes,
                "created": time.strftime("%Y-%m-%dT%H:%M:%S")}
    p = outdir / "manifest.json"
    p.write_text(json.dumps(manifest, indent=1, default=str) + "\n")
    return p


def cmd_run(args) -> int:
    cfg, dataset, _ = load_config(args.config)
    workers = args.workers if args.workers is not None else cfg.workers
    outdir = Path(args.output or cfg.output)
    if workers < 1:
        raise ConfigError("workers must be >= 1")
    results = execute(cfg, dataset, workers)
    m = write_run(cfg, results, outdir)
    print(f"wrote {len(results)} method rows to {outdir} ({m.name})")
    return EXIT_OK


def cmd_gen(args) -> int:
    try:
        raw = yaml.safe_load(Path(args.spec).read_text()) or {}
        spec = SyntheticSpec(**raw)
    except (OSError, yaml.YAMLError, TypeError, ValueError) as e:
        raise ConfigError(f"bad synthetic spec {args.spec}: {e}") from None
    d, truth = generate_synthetic(spec)
    out = Path(args.out)
    write_csv(d, out)
    side = out.with_suffix(".truth.json")
    side.write_text(json.dumps(truth.to_dict(), indent=1) + "\n")
    print(f"wrote {d.n_objects}x{d.n_features} dataset to {out}, ground truth to {side}")
    return EXIT_OK


def cmd_report(args) -> int:
    run = Path(args.run_dir)
    for name in ("scs.csv", "errors.csv", "timing.csv"):
        p = run / name
        if not p.exists():
            raise DatasetError(f"{p} missing; is this a run directory?")
        print(f"# {name[:-4]}")
        print(p.read_text().rstrip())
        print()
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rfsel", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("config")
    r.add_argument("-o", "--output", help="output directory (overrides the config)")
    r.add_argument("-w", "--workers", type=int, default=None,
                   help=f"worker processes (default: config, then ${WORKERS_ENV}, then 1)")
    r.set_defaults(func=cmd_run)
    g = sub.add_parser("gen", help="write a synthetic dataset and its ground truth")
    g.add_argument("spec")
    g.add_argument("out")
    g.set_defaults(func=cmd_gen)
    p = sub.add_parser("report", help="print the tables of a finished run")
    p.add_argument("run_dir")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except DatasetError as e:
        print(f"dataset error: {e}", file=sys.stderr)
        return EXIT_DATASET
    except Exception as e:  # noqa: BLE001
        log.debug("internal failure", exc_info=True)
        print(f"internal error: {e!r}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
