"""Command-line front end: ``surf <subcommand> [flags]``.

Every run writes ``manifest.json`` into ``--out`` next to its other outputs.
Exit codes: 0 success, 1 usage, 2 data error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import datetime as dt
import hashlib
import json
import logging
import sys
import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import dataset as ds
from .acs import AcsConfig, acs_path
from .compare import path_distance
from .deflation import CPModel, CvConfig, predict, rmse, sequential_fit, sparsity_of_coefficients
from .export import ModelFormatError, acs_rows, fmt, load_model, save_model, save_path, surf_rows, write_table
from .simulate import SimSpec, gen_raw
from .solver import SurfConfig, trace_path

log = logging.getLogger("surf")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
BENCH_COLUMNS = ["solver", "i", "m", "repeat", "wall_s", "iterations", "per_iter_s"]


class NumericalFailure(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


@dataclass
class RunManifest:
    subcommand: str
    config: dict
    seed: int
    started: str = ""
    finished: str = ""
    wall_s: float = 0.0
    phases: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    exit_code: int = EXIT_OK

    @contextmanager
    def phase(self, name):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.phases[name] = self.phases.get(name, 0.0) + time.perf_counter() - t0

    def add(self, *paths):
        for p in paths:
            self.outputs[Path(p).name] = str(p)

    def write(self, out_dir: Path) -> Path:
        doc = asdict(self)
        doc["outputs"] = {name: {"path": p, "sha256": sha256(p)} for name, p in sorted(self.outputs.items())}
        path = out_dir / "manifest.json"
        path.write_text(json.dumps(doc, indent=2, default=_json_default) + "\n", encoding="utf-8")
        return path


def _json_default(v):
    if isinstance(v, (np.integer, np.floating)):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, Path):
        return str(v)
    raise TypeError(f"not JSON serialisable: {type(v).__name__}")


def _now():
    return dt.datetime.now(dt.timezone.utc).isoformat(timespec="milliseconds")


def _float_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _surf_config(args):
    return SurfConfig(epsilon=args.epsilon, xi=args.xi, alpha=args.alpha, max_steps=args.max_steps)


def _acs_config(args):
    grid = np.array(args.lambda_grid) if args.lambda_grid else None
    return AcsConfig(alpha=args.alpha, lambda_grid=grid, n_lambdas=args.n_lambdas, lambda_ratio=args.lambda_ratio)


def _cv_config(args):
    return CvConfig(folds=args.folds, rank_cap=args.rank_cap, one_se_rule=args.one_se, seed=args.seed, threads=args.threads)


def _write_json(path, doc):
    Path(path).write_text(json.dumps(doc, indent=2, default=_json_default) + "\n", encoding="utf-8")
    return path


def cmd_simulate(args, run: RunManifest):
    spec = SimSpec(m=args.m, i=args.i, r=args.r, s=args.s, noise_sd=args.noise_sd,
                   correlation_base=args.correlation_base, seed=args.seed, order=args.order)
    run.config["spec"] = spec.to_dict()
    with run.phase("generate"):
        x, y, truth = gen_raw(spec, args.holdout)
        train = ds.standardize(x[..., : spec.m], y[: spec.m])
    with run.phase("write"):
        written = [ds.save(train, args.out / "dataset.json")]
        written.append(_write_json(args.out / "truth.json", truth.to_dict()))
        if args.holdout:
            test = ds.TensorDataset(x[..., spec.m:], y[spec.m:], None)
            written.append(ds.save(test, args.out / "holdout.json"))
    for p in written:
        run.add(*_with_payloads(p))


def _with_payloads(path):
    """A manifest path plus the payload files it names (for digests)."""
    path = Path(path)
    out = [path]
    try:
        doc = json.loads(path.read_text())
    except ValueError:
        return out
    if doc.get("format") == ds.FORMAT:
        out += [path.parent / doc["x_file"], path.parent / doc["y_file"]]
        s = doc.get("standardization")
        if s:
            out += [path.parent / s[k] for k in ("means_file", "scales_file", "mask_file")]
    return out


def cmd_path(args, run: RunManifest):
    data = ds.load(args.data)
    order = len(data.sample_shape)
    surf_cfg, acs_cfg = _surf_config(args), _acs_config(args)
    run.config.update(surf=asdict(surf_cfg), acs={k: v for k, v in asdict(acs_cfg).items() if k != "lambda_grid"})
    failures = []
    surf = None
    if args.solver in ("surf", "both"):
        with run.phase("surf"):
            surf = trace_path(data, surf_cfg)
        run.add(*save_path(surf_rows(surf), args.out / "path_surf", order))
        if surf.truncated:
            log.warning("SURF path hit the step cap (%d steps)", surf.points[-1].t)
    if args.solver in ("acs", "both"):
        with run.phase("acs"):
            acs = acs_path(data, acs_cfg)
        run.add(*save_path(acs_rows(acs, data, acs_cfg.alpha), args.out / "path_acs", order))
        if not acs.converged:
            failures.append("ACS path did not converge at every grid penalty")
    if args.solver == "both":
        with run.phase("compare"):
            d, rows, matched = path_distance(surf, data, acs_cfg)
        table = args.out / "comparison.csv"
        write_table(rows, ["lambda", "distance", "surf_l1", "acs_l1", "acs_fro"], table)
        run.add(table)
        run.config["max_distance"] = d
        if not matched.converged:
            failures.append("matched ACS fits did not all converge")
    if failures:
        raise NumericalFailure("; ".join(failures))


def _fit(args, run, data):
    surf_cfg, acs_cfg, cv = _surf_config(args), _acs_config(args), _cv_config(args)
    run.config.update(solver=args.solver, cv=asdict(cv), surf=asdict(surf_cfg),
                      acs={k: v for k, v in asdict(acs_cfg).items() if k != "lambda_grid"})
    with run.phase("fit"):
        try:
            return sequential_fit(data, args.solver, cv, surf_cfg, acs_cfg)
        except RuntimeError as exc:
            raise NumericalFailure(str(exc)) from exc


def cmd_fit(args, run: RunManifest):
    data = ds.load(args.data)
    model = _fit(args, run, data)
    run.add(*save_model(model, args.out / "model.json"))


def cmd_cv(args, run: RunManifest):
    data = ds.load(args.data)
    model = _fit(args, run, data)
    metrics = _metrics(model, data)
    metrics["cv_table"] = model.cv_table
    run.add(*save_model(model, args.out / "model.json"))
    run.add(_write_json(args.out / "metrics.json", metrics))


def _metrics(model: CPModel, data):
    """Training-set fit summary, with the CV RMSE of the last accepted term."""
    fitted = predict(model, data.std.invert(data.x)) if data.std is not None else predict(model, data.x)
    y_raw = data.y + model.y_mean
    accepted = [row for row in model.cv_table if row["accepted"]]
    return {
        "rank": model.rank,
        "rmse": rmse(y_raw, fitted),
        "cv_rmse": accepted[-1]["cv_rmse"][accepted[-1]["chosen"]] if accepted else None,
        "sparsity_of_coefficients": sparsity_of_coefficients(model),
    }


def cmd_predict(args, run: RunManifest):
    model = load_model(args.model)
    x, y = ds.load_raw(args.data)
    with run.phase("predict"):
        try:
            pred = predict(model, x)
        except ValueError as exc:
            raise ds.DatasetError("shape_mismatch", str(exc)) from exc
    out = args.out / "predictions.csv"
    out.write_text("prediction\n" + "".join(fmt(v) + "\n" for v in pred), encoding="utf-8")
    run.add(out)
    if not args.no_metrics:
        metrics = {"rmse": rmse(y, pred), "sparsity_of_coefficients": sparsity_of_coefficients(model), "m": int(len(y))}
        run.add(_write_json(args.out / "metrics.json", metrics))


def cmd_bench(args, run: RunManifest):
    # timing runs stay on one worker so the numbers are comparable
    rows = []
    surf_cfg, acs_cfg = _surf_config(args), _acs_config(args)
    for i in args.i:
        for m in args.m:
            spec = SimSpec(m=m, i=i, r=args.r, s=args.s, noise_sd=args.noise_sd, seed=args.seed)
            x, y, _ = gen_raw(spec)
            data = ds.standardize(x, y)
            for rep in range(args.repeats):
                for solver in args.solvers:
                    t0 = time.perf_counter()
                    if solver == "surf":
                        path = trace_path(data, surf_cfg)
                        iters = max(len(path.points) - 1, 1)
                    else:
                        path = acs_path(data, acs_cfg)
                        iters = max(sum(r.sweeps for r in path.results), 1)
                    wall = time.perf_counter() - t0
                    rows.append({"solver": solver, "i": i, "m": m, "repeat": rep, "wall_s": wall,
                                 "iterations": iters, "per_iter_s": wall / iters})
                    log.info("%s i=%d m=%d rep=%d %.3fs", solver, i, m, rep, wall)
    out = args.out / "bench.csv"
    write_table(rows, BENCH_COLUMNS, out)
    run.add(out)


COMMANDS = {"simulate": cmd_simulate, "path": cmd_path, "fit": cmd_fit, "cv": cmd_cv,
            "predict": cmd_predict, "bench": cmd_bench}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", type=Path, default=Path("."))
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--quiet", action="store_true")

    solver_flags = argparse.ArgumentParser(add_help=False)
    solver_flags.add_argument("--epsilon", type=float, default=0.1)
    solver_flags.add_argument("--xi", type=float, default=None, help="default epsilon**2 / 2")
    solver_flags.add_argument("--alpha", type=float, default=1.0)
    solver_flags.add_argument("--max-steps", type=int, default=None)
    solver_flags.add_argument("--n-lambdas", type=int, default=100)
    solver_flags.add_argument("--lambda-ratio", type=float, default=1e-3)
    solver_flags.add_argument("--lambda-grid", type=_float_list, default=None, help="comma-separated, decreasing")

    cv_flags = argparse.ArgumentParser(add_help=False)
    cv_flags.add_argument("--data", required=True)
    cv_flags.add_argument("--solver", choices=("surf", "acs"), default="surf")
    cv_flags.add_argument("--folds", type=int, default=5)
    cv_flags.add_argument("--rank-cap", type=int, default=50)
    cv_flags.add_argument("--one-se", action="store_true")

    p = Parser(prog="surf", description="Sparse unit-rank tensor regression paths and CP models.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=Parser)

    s = sub.add_parser("simulate", parents=[common], help="generate a synthetic dataset")
    s.add_argument("--m", type=int, default=500)
    s.add_argument("--i", type=int, default=16)
    s.add_argument("--r", type=int, default=50)
    s.add_argument("--s", type=float, default=80.0)
    s.add_argument("--noise-sd", type=float, default=1.0)
    s.add_argument("--correlation-base", type=float, default=0.6)
    s.add_argument("--order", type=int, choices=(2, 3), default=2)
    s.add_argument("--holdout", type=int, default=0, help="extra raw test samples written to holdout.json")

    s = sub.add_parser("path", parents=[common, solver_flags], help="trace solution paths")
    s.add_argument("--data", required=True)
    s.add_argument("--solver", choices=("surf", "acs", "both"), default="surf")

    sub.add_parser("fit", parents=[common, solver_flags, cv_flags], help="fit a CP model with CV")
    sub.add_parser("cv", parents=[common, solver_flags, cv_flags], help="fit and report CV metrics")

    s = sub.add_parser("predict", parents=[common], help="predict with a saved model")
    s.add_argument("--model", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--no-metrics", action="store_true")

    s = sub.add_parser("bench", parents=[common, solver_flags], help="time solvers on synthetic data")
    s.add_argument("--solvers", type=lambda t: [v for v in t.split(",") if v], default=["surf", "acs"])
    s.add_argument("--i", type=_int_list, default=[16])
    s.add_argument("--m", type=_int_list, default=[500])
    s.add_argument("--r", type=int, default=50)
    s.add_argument("--s", type=float, default=80.0)
    s.add_argument("--noise-sd", type=float, default=1.0)
    s.add_argument("--repeats", type=int, default=3)
    return p


def _validate(args, parser):
    if args.threads < 1:
        parser.error("--threads must be >= 1")
    if args.command == "bench":
        bad = [v for v in args.solvers if v not in ("surf", "acs")]
        if bad:
            parser.error(f"unknown solver(s) {bad}")
        if args.repeats < 1:
            parser.error("--repeats must be >= 1")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _validate(args, parser)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    args.out.mkdir(parents=True, exist_ok=True)
    config = {k: v for k, v in vars(args).items() if k not in ("command",)}
    run = RunManifest(args.command, config, args.seed, started=_now())
    t0 = time.perf_counter()
    code = EXIT_OK
    try:
        COMMANDS[args.command](args, run)
    except ds.DatasetError as exc:
        log.error("data error: %s", exc)
        code = EXIT_DATA
    except (ModelFormatError, OSError) as exc:
        log.error("data error: %s", exc)
        code = EXIT_DATA
    except ValueError as exc:
        log.error("invalid configuration: %s", exc)
        code = EXIT_USAGE
    except NumericalFailure as exc:
        log.error("numerical failure: %s", exc)
        code = EXIT_NUMERIC
    run.finished = _now()
    run.wall_s = time.perf_counter() - t0
    run.exit_code = code
    run.write(args.out)
    return code


if __name__ == "__main__":
    sys.exit(main())
