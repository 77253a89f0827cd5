"""Command line interface: ``aatr simulate|fit|predict|benchmark|rerun``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .benchmark import METHODS, fit_baseline, run_benchmark
from .dataio import DataError, DatasetSpec, fmt, load_dataset, read_wide_csv, write_wide_csv
from .fitter import FitConfig, default_lambdas, fit_aatr
from .grid import FunctionalDataset, Grid, standardize
from .optimizer import DeConfig
from .ridge import RidgeFit, predict, train_mse
from .simgen import DEPENDENCE, SHAPES, SimScenario, simulate
from .template import Template, template_eval

log = logging.getLogger("aatr")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
MODEL_VERSION = 1


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# Model files and manifests
# ---------------------------------------------------------------------------


def model_to_dict(fit: RidgeFit, gamma: Template | None = None) -> dict:
    return {
        "version": MODEL_VERSION,
        "method": fit.method,
        "grid": {"p": fit.grid.p, "a": fit.grid.a, "b": fit.grid.b},
        "beta0": fit.beta0,
        "beta": fit.beta.tolist(),
        "gamma": gamma.to_dict() if gamma is not None else None,
        "lambda": fit.lam,
        "q": gamma.q if gamma is not None else None,
        "col_means": np.asarray(fit.col_means).tolist(),
        "col_scales": np.asarray(fit.col_scales).tolist(),
    }


def model_from_dict(d: dict) -> tuple[RidgeFit, Template | None]:
    if d.get("version") != MODEL_VERSION:
        raise DataError(f"unsupported model version {d.get('version')!r}")
    grid = Grid(d["grid"]["p"], d["grid"]["a"], d["grid"]["b"])
    gamma = Template.from_dict(d["gamma"]) if d.get("gamma") else None
    gvals = template_eval(gamma, grid) if gamma is not None else np.zeros(grid.p)
    fit = RidgeFit(
        beta0=float(d["beta0"]),
        beta=np.array(d["beta"], dtype=np.float64),
        lam=float(d["lambda"]),
        gamma=gvals,
        grid=grid,
        col_means=np.array(d["col_means"], dtype=np.float64),
        col_scales=np.array(d["col_scales"], dtype=np.float64),
        method=d.get("method", "aatr"),
    )
    return fit, gamma


def save_model(path: Path, fit: RidgeFit, gamma: Template | None = None) -> None:
    path.write_text(json.dumps(model_to_dict(fit, gamma), indent=1) + "\n", encoding="utf-8")


def load_model(path) -> tuple[RidgeFit, Template | None]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such file: {path}")
    try:
        return model_from_dict(json.loads(path.read_text(encoding="utf-8")))
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise DataError(f"{path}: malformed model file ({exc})") from None


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _now():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def write_manifest(out: Path, args, started: str, inputs=(), seeds=None, extra=None) -> None:
    config = {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items()}
    config.pop("func", None)
    manifest = {
        "command": args.command,
        "argv": args.argv,
        "config": config,
        "seeds": seeds or {"seed": getattr(args, "seed", None)},
        "started": started,
        "finished": _now(),
        "version": __version__,
        "inputs": {str(p): file_digest(p) for p in inputs},
    }
    if extra:
        manifest.update(extra)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1) + "\n", encoding="utf-8")


def _outdir(args) -> Path:
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot create output directory {out}: {exc}") from None
    if not os.access(out, os.W_OK):
        raise DataError(f"output directory {out} is not writable")
    return out


def _write_csv(path: Path, header, rows) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


# ---------------------------------------------------------------------------
# Config assembly
# ---------------------------------------------------------------------------


def _seed(args) -> int:
    env = os.environ.get("AATR_SEED")
    if env is not None and env.strip():
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"AATR_SEED must be an integer, got {env!r}") from None
    return args.seed


def fit_config(args) -> FitConfig:
    if args.lambda_count < 1 or not 0 < args.lambda_min <= args.lambda_max:
        raise UsageError("need 0 < --lambda-min <= --lambda-max and --lambda-count >= 1")
    if args.lambda_count == 1:
        lambdas = (args.lambda_min,)
    else:
        lambdas = default_lambdas(args.lambda_count, args.lambda_min, args.lambda_max)
    try:
        return FitConfig(
            Q=args.Q,
            lambdas=lambdas,
            folds=args.folds,
            de_init=DeConfig(eval_budget=args.de_init_budget),
            de_reshape=DeConfig(eval_budget=args.de_reshape_budget),
            max_alt_iters=args.max_alt_iters,
            master_seed=args.seed,
            init_scope=args.init_scope,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _load_input(args) -> tuple[FunctionalDataset, list[str], list[Path]]:
    if args.data and args.curves:
        raise UsageError("give either --data (wide CSV) or --curves/--responses (long CSV)")
    if args.data:
        x, y, units = read_wide_csv(args.data)
        if y is None:
            raise DataError(f"{args.data}: no 'y' column")
        return FunctionalDataset(Grid(x.shape[1], args.a, args.b), x, y), units, [Path(args.data)]
    if args.curves:
        if not args.responses:
            raise UsageError("--curves needs --responses")
        spec = DatasetSpec(
            curve_file=Path(args.curves),
            response_file=Path(args.responses),
            p=args.p,
            a=args.a,
            b=args.b,
            min_points_per_unit=args.min_points,
            response_transform=args.transform,
            min_variance=args.min_variance,
        )
        ds, units, report = load_dataset(spec)
        if report.excluded:
            print(f"excluded {len(report.excluded)} unit(s): {', '.join(report.excluded)}")
        return ds, units, [Path(args.curves), Path(args.responses)]
    raise UsageError("no input: give --data or --curves/--responses")


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_simulate(args) -> int:
    started = _now()
    args.seed = _seed(args)
    scn = SimScenario(
        n=args.n,
        p=args.p,
        dependence=args.dependence,
        beta_shape=args.shape,
        noise_sd=args.sigma,
        seed=args.seed,
        rho=args.rho,
    )
    out = _outdir(args)
    ds, beta = simulate(scn)
    write_wide_csv(out / "data.csv", ds.x, ds.y)
    _write_csv(
        out / "true_beta.csv",
        ["t", "beta"],
        [(fmt(t), fmt(b)) for t, b in zip(ds.grid.points, beta)],
    )
    write_manifest(out, args, started, extra={"scenario": scn.to_dict()})
    print(f"wrote {ds.n} x {ds.grid.p} dataset to {out / 'data.csv'}")
    return EXIT_OK


def _write_fit_outputs(out: Path, fit: RidgeFit, gamma: Template | None, ds_std) -> None:
    save_model(out / "model.json", fit, gamma)
    gvals = template_eval(gamma, fit.grid) if gamma is not None else np.zeros(fit.grid.p)
    _write_csv(
        out / "curves.csv",
        ["t", "beta", "gamma"],
        [(fmt(t), fmt(b), fmt(g)) for t, b, g in zip(fit.grid.points, fit.beta, gvals)],
    )
    fitted = fit.fitted(ds_std)
    _write_csv(
        out / "fitted.csv",
        ["unit", "y", "fitted"],
        [(i, fmt(y), fmt(f)) for i, (y, f) in enumerate(zip(ds_std.y, fitted))],
    )


def cmd_fit(args) -> int:
    started = _now()
    args.seed = _seed(args)
    cfg = fit_config(args)
    ds, units, inputs = _load_input(args)
    if ds.n < cfg.folds:
        raise DataError(f"need at least {cfg.folds} samples for {cfg.folds}-fold CV, got {ds.n}")
    out = _outdir(args)
    if args.method == "aatr":
        res = fit_aatr(ds.x, ds.y, ds.grid, cfg, jobs=args.jobs)
        fit, gamma = res.fit, res.gamma_star
        _write_csv(
            out / "cv_table.csv",
            ["q", "lambda", "cv_mse"],
            [
                (qi + 1, fmt(lam), fmt(res.cv_table[qi, m]))
                for qi in range(cfg.Q)
                for m, lam in enumerate(cfg.lambdas)
            ],
        )
        _write_csv(
            out / "trace.csv",
            ["iteration", "train_mse"],
            [(i, fmt(v)) for i, v in enumerate(res.trace.losses)],
        )
        print(f"selected q*={res.q_star} lambda*={res.lambda_star:.6g}")
    else:
        fit = fit_baseline(args.method, ds, cfg)
        gamma = None
        _write_csv(out / "cv_table.csv", ["q", "lambda", "cv_mse"], [])
        print(f"method {args.method}: lambda={fit.lam:.6g}")
    ds_std = standardize(ds)
    _write_fit_outputs(out, fit, gamma, ds_std)
    print(f"training mse {train_mse(fit, ds_std):.6g}")
    write_manifest(out, args, started, inputs=inputs)
    return EXIT_OK


def cmd_predict(args) -> int:
    started = _now()
    fit, _ = load_model(args.model)
    x, _, units = read_wide_csv(args.data, p=fit.grid.p)
    out = _outdir(args)
    pred = predict(fit, x) if x.shape[0] else np.zeros(0)
    _write_csv(out / "predictions.csv", ["unit", "prediction"], zip(units, map(fmt, pred)))
    write_manifest(out, args, started, inputs=[Path(args.model), Path(args.data)])
    print(f"wrote {len(units)} prediction(s) to {out / 'predictions.csv'}")
    return EXIT_OK


def cmd_benchmark(args) -> int:
    started = _now()
    args.seed = _seed(args)
    cfg = fit_config(args)
    methods = []
    for item in args.method or ["aatr,ridge,roughness,mnlstsq"]:
        methods += [m.strip() for m in item.split(",") if m.strip()]
    unknown = [m for m in methods if m not in METHODS]
    if unknown:
        raise UsageError(f"unknown method(s) {', '.join(unknown)}; choose from {', '.join(METHODS)}")
    inputs = []
    extra = {}
    if args.data or args.curves:
        ds, _, inputs = _load_input(args)
    else:
        scn = SimScenario(
            n=args.n,
            p=args.p,
            dependence=args.dependence,
            beta_shape=args.shape,
            noise_sd=args.sigma,
            seed=args.seed,
            rho=args.rho,
        )
        ds, _ = simulate(scn)
        extra["scenario"] = scn.to_dict()
    out = _outdir(args)
    scores = run_benchmark(ds, methods, cfg, outer_folds=args.outer_folds, jobs=args.jobs)
    _write_csv(
        out / "results.csv",
        ["method", "mean_mse", "sd_mse", "n_folds"],
        [(m, fmt(s.mean), fmt(s.sd), len(s.fold_mse)) for m, s in scores.items()],
    )
    _write_csv(
        out / "folds.csv",
        ["method", "fold", "test_mse"],
        [(m, k, fmt(v)) for m, s in scores.items() for k, v in enumerate(s.fold_mse)],
    )
    if "aatr" in scores:
        rows = []
        for k, res in enumerate(scores["aatr"].details):
            rows.append((k, res.q_star, fmt(res.lambda_star), res.trace.n_accepted))
        _write_csv(out / "aatr_selection.csv", ["fold", "q", "lambda", "accepted_iterations"], rows)
    for m, s in scores.items():
        print(f"{m:10s} {s.mean:.4f} +- {s.sd:.4f}")
    write_manifest(out, args, started, inputs=inputs, extra=extra)
    return EXIT_OK


def cmd_rerun(args) -> int:
    path = Path(args.manifest)
    if not path.is_file():
        raise FileNotFoundError(f"no such file: {path}")
    manifest = json.loads(path.read_text(encoding="utf-8"))
    argv = list(manifest["argv"])
    seed = manifest.get("config", {}).get("seed")
    # the resolved seed replaces whatever --seed/AATR_SEED produced originally
    if seed is not None:
        argv += ["--seed", str(seed)]
    argv += ["-o", args.out]
    env_seed = os.environ.pop("AATR_SEED", None)
    try:
        return main(argv)
    finally:
        if env_seed is not None:
            os.environ["AATR_SEED"] = env_seed


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _add_scenario(p):
    p.add_argument("--shape", choices=SHAPES, default="rect1")
    p.add_argument("--dependence", choices=DEPENDENCE, default="independent")
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--rho", type=float, default=0.9)


def _add_fit(p):
    p.add_argument("--Q", type=int, default=3)
    p.add_argument("--lambda-min", type=float, default=1e-4)
    p.add_argument("--lambda-max", type=float, default=1e4)
    p.add_argument("--lambda-count", type=int, default=20)
    p.add_argument("--folds", type=int, default=3)
    p.add_argument("--de-init-budget", type=int, default=5000)
    p.add_argument("--de-reshape-budget", type=int, default=1000)
    p.add_argument("--max-alt-iters", type=int, default=10)
    p.add_argument("--init-scope", choices=("fold", "full"), default="fold")
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1)


def _add_input(p):
    p.add_argument("--data", help="wide CSV with y,x_1..x_p")
    p.add_argument("--curves", help="long CSV with unit,time,value")
    p.add_argument("--responses", help="long CSV with unit,response")
    p.add_argument("--a", type=float, default=-1.0)
    p.add_argument("--b", type=float, default=1.0)
    p.add_argument("--transform", choices=("identity", "mean", "log"), default="identity")
    p.add_argument("--min-points", type=int, default=4)
    p.add_argument("--min-variance", type=float, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="aatr", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="generate a simulated scenario")
    _add_scenario(p)
    p.add_argument("--p", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit a model")
    _add_input(p)
    _add_fit(p)
    p.add_argument("--p", type=int, default=200, help="grid size for long-format input")
    p.add_argument("--method", choices=METHODS, default="aatr")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="predict with a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True, help="wide CSV with x_1..x_p")
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("benchmark", help="outer cross-validated comparison of methods")
    _add_input(p)
    _add_scenario(p)
    _add_fit(p)
    p.add_argument("--p", type=int, default=200)
    p.add_argument("--outer-folds", type=int, default=3)
    p.add_argument("--method", action="append", help="comma-separated methods (repeatable)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("rerun", help="repeat a run from its manifest")
    p.add_argument("manifest")
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=cmd_rerun)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    args.argv = [a for a in argv if a not in ("-v", "--verbose")]
    if args.command != "rerun":
        args.argv = _strip_out(args.argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"aatr: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, FileNotFoundError, OSError) as exc:
        print(f"aatr: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (np.linalg.LinAlgError, FloatingPointError, ArithmeticError) as exc:
        print(f"aatr: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"aatr: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


def _strip_out(argv):
    """Drop ``-o/--out`` and ``--seed`` so a manifest can replay into another directory."""
    out, skip = [], False
    for a in argv:
        if skip:
            skip = False
            continue
        if a in ("-o", "--out", "--seed"):
            skip = True
            continue
        if a.startswith(("--out=", "--seed=")):
            continue
        out.append(a)
    return out


if __name__ == "__main__":
    sys.exit(main())
