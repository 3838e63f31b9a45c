"""Command-line interface: ``fsasl select | eval | sweep``.

Every run is described by a :class:`RunManifest`. Flags build one, or
``--manifest run.json`` supplies it whole (and then wins over the flags).
Outputs are written through a temp file and an atomic rename, so a failed
run never leaves a half-written ranking behind.

Exit codes: 0 success, 1 partial sweep failure, 2 I/O, 3 configuration,
4 data, 5 solver.
"""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import logging
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import List, Optional

import numpy as np

from .data import DataMatrix, Preprocessing, load_dataset, preprocess
from .errors import ConfigError, FsaslError
from .evaluation import evaluate_ranking
from .solver import (
    VARIANTS,
    W_PATHS,
    FeatureRanking,
    FsaslConfig,
    auto_gamma_max,
    rank_features,
    run,
    with_params,
)
from .sparse_coder import LassoSettings

log = logging.getLogger("fsasl")

EXIT_OK = 0
EXIT_PARTIAL = 1
EXIT_CODES = {"io": 2, "config": 3, "data": 4, "solver": 5}

DEFAULT_M_GRID = list(range(5, 55, 5))


@dataclass
class RunManifest:
    data: str = ""
    format: str = "csv"
    orientation: str = "samples-as-rows"
    header: bool = False
    label: Optional[str] = None
    preprocessing: str = "zscore"
    alpha: float = 1e-3
    beta: float = 1.0
    gamma: Optional[float] = None
    gamma_fraction: Optional[float] = 0.5
    k: int = 10
    c: Optional[int] = None
    variant: str = "full"
    adaptive: bool = True
    w_path: str = "two-step"
    max_outer_iters: int = 30
    obj_tol: float = 1e-5
    m_grid: List[int] = field(default_factory=lambda: list(DEFAULT_M_GRID))
    n_repeats: int = 20
    seeds: Optional[List[int]] = None
    ranking: Optional[str] = None
    alpha_grid: List[float] = field(default_factory=list)
    beta_grid: List[float] = field(default_factory=list)
    gamma_fraction_grid: List[float] = field(default_factory=list)
    workers: int = 1
    output: str = "out"

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RunManifest":
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"manifest is not valid JSON: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError("manifest must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise ConfigError(f"unknown manifest fields: {', '.join(unknown)}")
        return cls(**raw)

    @property
    def resolved_seeds(self) -> List[int]:
        return list(range(self.n_repeats)) if self.seeds is None else [int(s) for s in self.seeds]


class IOFailure(FsaslError, OSError):
    kind = "io"


# ---------------------------------------------------------------- writing


def atomic_write(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def matrix_csv(a) -> str:
    buf = io.StringIO()
    np.savetxt(buf, np.asarray(a), delimiter=",", fmt="%.17g")
    return buf.getvalue()


def triplets_csv(a) -> str:
    a = np.asarray(a)
    rows, cols = np.nonzero(a)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["row", "col", "value"])
    for i, j in zip(rows, cols):
        writer.writerow([int(i), int(j), repr(float(a[i, j]))])
    return buf.getvalue()


# ---------------------------------------------------------------- running


def _label_arg(label):
    if label is None:
        return None
    return int(label) if str(label).lstrip("-").isdigit() else label


def load_inputs(m: RunManifest):
    if not m.data:
        raise ConfigError("no dataset given (--data)")
    try:
        x, labels = load_dataset(m.data, m.format, m.orientation, m.header, _label_arg(m.label))
    except (FileNotFoundError, PermissionError, IsADirectoryError) as exc:
        raise IOFailure(str(exc)) from None
    try:
        kind = Preprocessing(m.preprocessing)
    except ValueError:
        raise ConfigError(f"unknown preprocessing {m.preprocessing!r}") from None
    return preprocess(x, kind), labels


def build_config(m: RunManifest, x: DataMatrix, labels) -> FsaslConfig:
    c = m.c
    if c is None:
        if labels is None:
            raise ConfigError("--c is required when the dataset has no labels")
        c = int(np.unique(labels).size)
    if (m.gamma is None) == (m.gamma_fraction is None):
        raise ConfigError("give exactly one of gamma and gamma_fraction")
    cfg = FsaslConfig(
        alpha=m.alpha,
        beta=m.beta,
        gamma=1.0 if m.gamma is None else m.gamma,
        k=m.k,
        c=c,
        max_outer_iters=m.max_outer_iters,
        obj_tol=m.obj_tol,
        variant=m.variant,
        adaptive=m.adaptive,
        w_path=m.w_path,
        lasso=LassoSettings(),
    )
    cfg.validate_for(x.n_features, x.n_samples)
    if m.gamma is None:
        if not m.gamma_fraction > 0:
            raise ConfigError("gamma_fraction must be positive")
        cfg = with_params(cfg, gamma=m.gamma_fraction * auto_gamma_max(x, cfg))
    return cfg


def _config_dict(cfg: FsaslConfig) -> dict:
    out = {k: v for k, v in cfg.__dict__.items() if k != "lasso"}
    out["lasso"] = asdict(cfg.lasso)
    return out


def do_select(m: RunManifest, out: Path, x=None, labels=None) -> FeatureRanking:
    if x is None:
        x, labels = load_inputs(m)
    cfg = build_config(m, x, labels)
    state = run(x, cfg)
    ranking = rank_features(state)

    if state.s is not None:
        atomic_write(out / "S.csv", matrix_csv(state.s.s))
        atomic_write(out / "S_triplets.csv", triplets_csv(state.s.s))
    if state.p is not None:
        atomic_write(out / "P.csv", matrix_csv(state.p.p))
        atomic_write(out / "P_triplets.csv", triplets_csv(state.p.p))
    atomic_write(out / "W.csv", matrix_csv(state.w.w))
    # wall-clock timings live apart so every other artifact is reproducible
    atomic_write(out / "timings.json", _json({"seconds_per_iteration": state.timings}))
    atomic_write(
        out / "report.json",
        _json(
            {
                "config": _config_dict(cfg),
                "objective_trace": state.objective_trace,
                "iterations": state.iterations,
                "converged": state.converged,
                "monotone_violations": state.monotone_violations,
                "mu": state.mu,
            }
        ),
    )
    atomic_write(
        out / "ranking.json",
        _json(
            {
                "order": [int(i) for i in ranking.order],
                "scores": [float(s) for s in ranking.scores],
                "feature_names": list(x.feature_names),
            }
        ),
    )
    return ranking


def read_ranking(path: Path, d: int) -> FeatureRanking:
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise IOFailure(str(exc)) from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not a ranking file ({exc})") from None
    order = np.asarray(raw.get("order", []), dtype=np.int64)
    if sorted(order.tolist()) != list(range(d)):
        raise ConfigError(f"{path}: order is not a permutation of {d} features")
    return FeatureRanking(order, np.asarray(raw.get("scores", np.zeros(d)), dtype=np.float64))


def do_eval(m: RunManifest, out: Path, ranking=None, x=None, labels=None):
    if x is None:
        x, labels = load_inputs(m)
    if labels is None:
        raise ConfigError("evaluation needs ground-truth labels (--label)")
    if max(m.m_grid, default=0) > x.n_features:
        raise ConfigError(f"feature-count grid exceeds d={x.n_features}")
    if ranking is None:
        src = Path(m.ranking) if m.ranking else out / "ranking.json"
        ranking = read_ranking(src, x.n_features)
    report = evaluate_ranking(x, labels, ranking, m.m_grid, seeds=m.resolved_seeds)
    atomic_write(out / "eval.json", report.to_json())
    atomic_write(out / "eval.csv", report.to_csv())
    return report


def _cell_name(a, b, g):
    return f"alpha={a:g}_beta={b:g}_gfrac={g:g}"


def _run_cell(payload):
    manifest_json, cell_dir = payload
    m = RunManifest.from_json(manifest_json)
    out = Path(cell_dir)
    done = out / "done.json"
    if done.exists():
        return json.loads(done.read_text())
    row = {"alpha": m.alpha, "beta": m.beta, "gamma_fraction": m.gamma_fraction}
    try:
        (out / "error.json").unlink(missing_ok=True)
        atomic_write(out / "manifest.json", m.to_json())
        x, labels = load_inputs(m)
        ranking = do_select(m, out, x, labels)
        report = do_eval(m, out, ranking, x, labels)
        acc, nm = report.aggregated
        row.update(status="ok", mean_acc=acc, mean_nmi=nm)
        atomic_write(done, _json(row))
    except FsaslError as exc:
        row.update(status=f"error:{exc.kind}", mean_acc=None, mean_nmi=None)
        atomic_write(out / "error.json", _error_json(exc))
    return row


def do_sweep(m: RunManifest, out: Path) -> int:
    grids = [m.alpha_grid or [m.alpha], m.beta_grid or [m.beta]]
    grids.append(m.gamma_fraction_grid or [m.gamma_fraction])
    if m.gamma is not None and m.gamma_fraction_grid:
        raise ConfigError("a sweep over gamma fractions cannot also fix gamma")
    if m.gamma is not None:
        raise ConfigError("sweeps scale gamma by gamma_fraction; leave gamma unset")
    # fail fast on anything not cell specific
    x, labels = load_inputs(m)
    if labels is None:
        raise ConfigError("sweep needs ground-truth labels (--label)")
    payloads = []
    for a, b, g in itertools.product(*grids):
        cell = RunManifest(**{**asdict(m), "alpha": a, "beta": b, "gamma_fraction": g,
                              "alpha_grid": [], "beta_grid": [], "gamma_fraction_grid": [],
                              "output": str(out / _cell_name(a, b, g))})
        payloads.append((cell.to_json(), cell.output))
    workers = max(1, int(m.workers))
    env_cap = os.environ.get("FSASL_WORKERS")
    if env_cap:
        try:
            workers = min(workers, max(1, int(env_cap)))
        except ValueError:
            raise ConfigError(f"FSASL_WORKERS must be an integer, got {env_cap!r}") from None
    if workers == 1:
        rows = [_run_cell(p) for p in payloads]
    else:
        with ProcessPoolExecutor(workers) as ex:
            rows = list(ex.map(_run_cell, payloads))
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["alpha", "beta", "gamma_fraction", "status", "mean_acc", "mean_nmi"])
    for r in rows:
        writer.writerow([r["alpha"], r["beta"], r["gamma_fraction"], r["status"],
                         "" if r["mean_acc"] is None else repr(r["mean_acc"]),
                         "" if r["mean_nmi"] is None else repr(r["mean_nmi"])])
    atomic_write(out / "summary.csv", buf.getvalue())
    failed = sum(r["status"] != "ok" for r in rows)
    if failed:
        log.warning("%d of %d sweep cells failed", failed, len(rows))
    return EXIT_PARTIAL if failed else EXIT_OK


# ---------------------------------------------------------------- argparse


def _floats(text):
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text):
    return [int(v) for v in text.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fsasl", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--manifest", help="JSON run manifest; overrides all other flags")
    common.add_argument("--data")
    common.add_argument("--format", choices=("csv", "libsvm"))
    common.add_argument("--orientation", choices=("samples-as-rows", "features-as-rows"))
    common.add_argument("--header", action="store_true", default=None)
    common.add_argument("--label", help="label column (index or header name) or row index")
    common.add_argument("--preprocessing", choices=[k.value for k in Preprocessing])
    common.add_argument("--alpha", type=float)
    common.add_argument("--beta", type=float)
    common.add_argument("--gamma", type=float, help="absolute l2,1 weight")
    common.add_argument("--gamma-fraction", type=float, help="l2,1 weight as a fraction of gamma_max")
    common.add_argument("--k", type=int)
    common.add_argument("--c", type=int)
    common.add_argument("--variant", choices=VARIANTS)
    common.add_argument("--fixed", dest="adaptive", action="store_false", default=None,
                        help="learn the structures once and keep them")
    common.add_argument("--w-path", choices=W_PATHS)
    common.add_argument("--max-iters", dest="max_outer_iters", type=int)
    common.add_argument("--obj-tol", type=float)
    common.add_argument("--m-grid", type=_ints)
    common.add_argument("--repeats", dest="n_repeats", type=int)
    common.add_argument("--seeds", type=_ints)
    common.add_argument("--out", dest="output")

    sub.add_parser("select", parents=[common], help="rank features")
    ev = sub.add_parser("eval", parents=[common], help="cluster on top-ranked features")
    ev.add_argument("--ranking", help="ranking.json (default: OUT/ranking.json)")
    sw = sub.add_parser("sweep", parents=[common], help="grid search over alpha, beta, gamma fraction")
    sw.add_argument("--alpha-grid", type=_floats)
    sw.add_argument("--beta-grid", type=_floats)
    sw.add_argument("--gamma-fraction-grid", type=_floats)
    sw.add_argument("--workers", type=int)
    return p


def manifest_from_args(args) -> RunManifest:
    if args.manifest:
        try:
            return RunManifest.from_json(Path(args.manifest).read_text())
        except FileNotFoundError as exc:
            raise IOFailure(str(exc)) from None
    m = RunManifest()
    for f in fields(RunManifest):
        value = getattr(args, f.name, None)
        if value is not None:
            setattr(m, f.name, value)
    if args.gamma is not None and args.gamma_fraction is None:
        m.gamma_fraction = None
    return m


def _error_json(exc: BaseException) -> str:
    kind = getattr(exc, "kind", "error")
    return _json({"error": {"kind": kind, "type": type(exc).__name__, "message": str(exc)}})


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out = None
    try:
        m = manifest_from_args(args)
        out = Path(m.output)
        out.mkdir(parents=True, exist_ok=True)
        (out / "error.json").unlink(missing_ok=True)
        atomic_write(out / "manifest.json", m.to_json())
        if args.command == "select":
            do_select(m, out)
            return EXIT_OK
        if args.command == "eval":
            do_eval(m, out)
            return EXIT_OK
        return do_sweep(m, out)
    except (FsaslError, OSError) as exc:
        if not isinstance(exc, FsaslError):
            exc = IOFailure(str(exc))
        text = _error_json(exc)
        sys.stderr.write(text)
        if out is not None:
            try:
                atomic_write(out / "error.json", text)
            except OSError:
                pass
        return EXIT_CODES.get(exc.kind, 5)


if __name__ == "__main__":
    sys.exit(main())
