"""Command-line pipeline: simulate, train, lr-find, predict, evaluate, serve.

Progress goes to standard error; machine-readable results go to the
output paths only. Exit codes: 0 success, 1 usage, 2 data error,
3 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys

import numpy as np

from . import data as data_mod
from . import store as store_mod
from . import training as training_mod
from .data import DataError
from .network import NetworkConfig, RiskNetwork
from .predict import (
    DEFAULT_HORIZON_DAYS,
    DEFAULT_N_MCMC,
    DEFAULT_REALISATIONS,
    evaluation_report,
)
from .stats import RngStream
from .store import StoreError
from .training import TrainConfig, TrainingError

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _log(msg: str):
    print(msg, file=sys.stderr)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="survaft", description=__doc__)
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)

    p = sub.add_parser("simulate",
                       help="generate synthetic right-censored records")
    p.add_argument("--n", type=int, required=True, help="number of records")
    p.add_argument("--censor-window", type=float, default=60.0,
                   help="observation window in days (default 60)")
    p.add_argument("--sigma", type=float, default=1.0,
                   help="true log-time error scale (default 1.0)")
    p.add_argument("--seed", type=int, default=0, help="generator seed")
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--schema-out", default=None,
                   help="schema config path (default <out>.schema)")
    p.add_argument("--truth-out", default=None,
                   help="ground-truth JSON path (default <out>.truth.json)")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("train",
                       help="fit the survival model on a CSV file")
    p.add_argument("--data", required=True, help="training CSV path")
    p.add_argument("--schema", required=True, help="schema config path")
    p.add_argument("--out-model", required=True, help="model JSON output path")
    p.add_argument("--lr", type=float, default=0.02, help="learning rate")
    p.add_argument("--max-iter", type=int, default=4500, help="iteration cap")
    p.add_argument("--batch", type=int, default=0,
                   help="minibatch size, 0 = full batch")
    p.add_argument("--samples", type=int, default=4,
                   help="parameter draws per gradient step")
    p.add_argument("--seed", type=int, default=0, help="training seed")
    p.add_argument("--hidden", default="200,70",
                   help="hidden layer widths, comma-separated (default 200,70)")
    p.add_argument("--dropout", default="off",
                   help="dropout rates per site, or 'off' (default off)")
    p.add_argument("--sigma-mode", choices=("profile", "sampled", "fixed"),
                   default="profile",
                   help="error-scale treatment (default profile)")
    p.add_argument("--fixed-sigma", type=float, default=None,
                   help="error scale for --sigma-mode fixed")
    p.add_argument("--init-scale", type=float, default=0.05,
                   help="initial spread of the parameter factors (default 0.05)")
    p.add_argument("--prior-std", type=float, default=1.0,
                   help="normal prior scale on network parameters, 0 = flat")
    p.add_argument("--no-warm-start", action="store_true",
                   help="keep the output bias at 0 instead of the mean log time")
    p.add_argument("--polish-fraction", type=float, default=0.4,
                   help="trailing fraction of iterations at a reduced rate")
    p.add_argument("--polish-lr-scale", type=float, default=0.3,
                   help="learning-rate multiplier for the polish stage")
    p.add_argument("--stop-rtol", type=float, default=0.0,
                   help="relative loss-change stopping tolerance (0 disables)")
    p.add_argument("--out-trace", default=None, help="training trace CSV path")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("lr-find",
                       help="sweep learning rates with a fixed budget")
    p.add_argument("--data", required=True, help="training CSV path")
    p.add_argument("--schema", required=True, help="schema config path")
    p.add_argument("--grid", default="0.001:1.0:7",
                   help="log-spaced grid lo:hi:points (default 0.001:1.0:7)")
    p.add_argument("--iters", type=int, default=4000,
                   help="iterations per grid point (default 4000)")
    p.add_argument("--seed", type=int, default=0, help="training seed")
    p.add_argument("--hidden", default="200,70", help="hidden layer widths")
    p.add_argument("--dropout", default="0.6,0.6,0.4",
                   help="dropout rates per site, or 'off'")
    p.add_argument("--out", default=None, help="result table CSV path")
    p.set_defaults(func=_cmd_lr_find)

    p = sub.add_parser("predict",
                       help="survival curves for covariate rows")
    p.add_argument("--model", required=True, help="model JSON path")
    p.add_argument("--input", required=True, help="covariate CSV path")
    p.add_argument("--out-curves", required=True, help="curve CSV output path")
    p.add_argument("--n-mcmc", type=int, default=DEFAULT_N_MCMC,
                   help="parameter draws per realisation (default 200)")
    p.add_argument("--realisations", type=int, default=DEFAULT_REALISATIONS,
                   help="realisations averaged per curve (default 80)")
    p.add_argument("--seed", type=int, default=0, help="prediction seed")
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("evaluate",
                       help="horizon classification report on labelled data")
    p.add_argument("--model", required=True, help="model JSON path")
    p.add_argument("--data", required=True, help="evaluation CSV path")
    p.add_argument("--horizon", type=float, default=DEFAULT_HORIZON_DAYS,
                   help="evaluation horizon in days (default 180)")
    p.add_argument("--n-mcmc", type=int, default=DEFAULT_N_MCMC,
                   help="parameter draws per record (default 200)")
    p.add_argument("--threshold", type=float, default=None,
                   help="survival threshold; default: Youden-optimal")
    p.add_argument("--seed", type=int, default=0, help="evaluation seed")
    p.add_argument("--out-report", required=True, help="report JSON path")
    p.add_argument("--out-histogram", default=None,
                   help="histogram CSV path (default <out-report>.hist.csv)")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("serve",
                       help="HTTP prediction service for the what-if UI")
    p.add_argument("--model", required=True, help="model JSON path")
    p.add_argument("--port", type=int, default=8000, help="listen port")
    p.add_argument("--host", default="127.0.0.1", help="bind address")
    p.add_argument("--ui-dir", default=None,
                   help="static UI directory to mount at /ui")
    p.set_defaults(func=_cmd_serve)

    return parser


def _parse_hidden(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(part) for part in text.split(",") if part.strip())
    except ValueError:
        raise _UsageError(f"bad --hidden value '{text}'") from None


def _parse_dropout(text: str, hidden: tuple[int, ...]) -> tuple[float, ...]:
    if text.strip().lower() == "off":
        return (0.0,) * (len(hidden) + 1)
    try:
        rates = tuple(float(part) for part in text.split(",") if part.strip())
    except ValueError:
        raise _UsageError(f"bad --dropout value '{text}'") from None
    if len(rates) != len(hidden) + 1:
        raise _UsageError(
            f"--dropout needs {len(hidden) + 1} rates for {len(hidden)} hidden layers"
        )
    return rates


def _parse_grid(text: str) -> list[float]:
    parts = text.split(":")
    if len(parts) != 3:
        raise _UsageError("--grid must be lo:hi:points")
    try:
        lo, hi, points = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise _UsageError(f"bad --grid value '{text}'") from None
    if not (0 < lo < hi) or points < 1:
        raise _UsageError("--grid needs 0 < lo < hi and points >= 1")
    if points == 1:
        return [lo]
    return list(np.exp(np.linspace(math.log(lo), math.log(hi), points)))


def _cmd_simulate(args) -> int:
    truth = data_mod.default_ground_truth(
        sigma=args.sigma, censor_window_days=args.censor_window
    )
    schema = data_mod.default_schema()
    config = data_mod.GeneratorConfig(
        n=args.n,
        schema=schema,
        true_sigma=args.sigma,
        censor_window_days=args.censor_window,
        seed=args.seed,
        intercept=truth.intercept,
        cont_coeffs=truth.cont_coeffs,
        cat_offsets=truth.cat_offsets,
    )
    dataset, truth = data_mod.generate_synthetic(config)
    columns = [c.name for c in schema.covariates] + [
        schema.duration_column,
        schema.censor_column,
    ]
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in dataset.raw_rows:
            writer.writerow([_cell(row[c]) for c in columns])
    schema_path = args.schema_out or f"{args.out}.schema"
    with open(schema_path, "w", encoding="utf-8") as fh:
        fh.write(data_mod.format_schema_config(schema))
    truth_path = args.truth_out or f"{args.out}.truth.json"
    with open(truth_path, "w", encoding="utf-8") as fh:
        json.dump(truth.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    _log(
        f"simulated {dataset.n} records "
        f"({dataset.censored_fraction:.1%} censored) -> {args.out}"
    )
    return EXIT_OK


def _cell(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _build_network(schema, args) -> RiskNetwork:
    hidden = _parse_hidden(args.hidden)
    dropout = _parse_dropout(args.dropout, hidden)
    config = NetworkConfig.from_schema(schema, hidden=hidden, dropout=dropout)
    return RiskNetwork(schema, config)


def _cmd_train(args) -> int:
    if args.sigma_mode == "fixed" and args.fixed_sigma is None:
        raise _UsageError("--sigma-mode fixed needs --fixed-sigma")
    if not (0.0 <= args.polish_fraction < 1.0):
        raise _UsageError("--polish-fraction must lie in [0, 1)")
    schema = data_mod.load_schema_config(args.schema)
    dataset = data_mod.load_csv(args.data, schema)
    net = _build_network(schema, args)

    init = None
    if args.init_scale != 1.0 or not args.no_warm_start:
        init = training_mod.warm_start_latent(net, dataset)
        if args.no_warm_start:
            init.mu[:] = 0.0
        init.log_sigma[:] = math.log(args.init_scale)

    def make_config(lr, iters, stage, fixed_sigma):
        return TrainConfig(
            learning_rate=lr,
            max_iterations=iters,
            batch_size=args.batch,
            samples_per_step=args.samples,
            stop_rtol=args.stop_rtol,
            seed=args.seed + stage,
            profile_sigma=args.sigma_mode == "profile",
            fixed_sigma=fixed_sigma,
            prior_std=args.prior_std if args.prior_std > 0 else None,
            dropout_enabled=args.dropout.strip().lower() != "off",
        )

    polish_iters = int(round(args.max_iter * args.polish_fraction))
    main_iters = args.max_iter - polish_iters
    state = net.new_state(training=True)
    _log(f"training on {dataset.n} records, {net.param_count} network parameters")
    progress = lambda it, loss: _log(f"  iter {it}: loss {loss:.2f}")

    omega, trace = training_mod.train(
        dataset, net, make_config(args.lr, main_iters, 0, args.fixed_sigma),
        state=state, init=init, progress=progress,
    )
    traces = [trace]
    if polish_iters > 0:
        carry_sigma = (
            trace.sigma_hat if args.sigma_mode == "profile" else args.fixed_sigma
        )
        omega, trace2 = training_mod.train(
            dataset, net,
            make_config(args.lr * args.polish_lr_scale, polish_iters, 1, carry_sigma),
            state=state, init=omega, progress=progress,
        )
        traces.append(trace2)
    final_trace = traces[-1]
    total_iters = sum(len(t) for t in traces)
    tail = [l for l in final_trace.loss[-50:] if math.isfinite(l)]
    final_loss = float(np.mean(tail)) if tail else math.nan
    fixed_sigma = (
        final_trace.sigma_hat if args.sigma_mode in ("profile", "fixed") else None
    )
    artifact = store_mod.make_artifact(
        schema=schema,
        vocabulary=dataset.vocabulary,
        norms=dataset.norms,
        net=net,
        state=state,
        omega=omega,
        fixed_sigma=fixed_sigma,
        metadata={
            "seed": args.seed,
            "learning_rate": args.lr,
            "max_iterations": args.max_iter,
            "batch_size": args.batch,
            "samples_per_step": args.samples,
            "sigma_mode": args.sigma_mode,
            "prior_std": args.prior_std,
            "iterations_run": total_iters,
            "final_loss": final_loss,
            "skipped_steps": sum(t.skipped_steps for t in traces),
            "training_rows": dataset.n,
        },
    )
    store_mod.save_model(artifact, args.out_model)
    if args.out_trace:
        merged = training_mod.TrainTrace()
        for t in traces:
            merged.loss.extend(t.loss)
            merged.grad_norm.extend(t.grad_norm)
            merged.seconds.extend(t.seconds)
        merged.to_csv(args.out_trace)
    _log(f"trained {total_iters} iterations, final loss {final_loss:.2f} "
         f"-> {args.out_model}")
    return EXIT_OK


def _cmd_lr_find(args) -> int:
    grid = _parse_grid(args.grid)
    schema = data_mod.load_schema_config(args.schema)
    dataset = data_mod.load_csv(args.data, schema)
    net = _build_network(schema, args)
    base = TrainConfig(seed=args.seed)
    result = training_mod.lr_range_test(
        dataset, net, grid, iterations_per_point=args.iters, base_config=base
    )
    for lr, loss in result.table:
        _log(f"  lr {lr:.6g}: final loss {loss:.2f}")
    _log(f"recommended learning rate: {result.recommended:.6g}")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write("lr,final_loss,recommended\n")
            for lr, loss in result.table:
                fh.write(f"{lr!r},{loss!r},{result.recommended!r}\n")
    return EXIT_OK


def _read_covariate_rows(path, schema) -> list[dict]:
    try:
        fh = open(path, "r", encoding="utf-8", newline="")
    except OSError as exc:
        raise DataError(f"cannot read input file {path}: {exc}") from exc
    with fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c.name for c in schema.covariates if c.name not in header]
        if missing:
            raise DataError(f"input file missing column(s): {', '.join(missing)}")
        rows = list(reader)
    if not rows:
        raise DataError(f"input file {path} contains no rows")
    return rows


def _cmd_predict(args) -> int:
    model = store_mod.load_model(args.model).to_model()
    rows = _read_covariate_rows(args.input, model.schema)
    rng_root = RngStream(args.seed)
    with open(args.out_curves, "w", encoding="utf-8") as fh:
        fh.write("record,t,s_hat,lo,hi\n")
        for i, row in enumerate(rows):
            record = model.encode(row)
            curve = model.predict(
                record,
                n_mcmc=args.n_mcmc,
                realisations=args.realisations,
                rng=rng_root.derive(i),
            )
            for t, s, lo, hi in zip(curve.t, curve.s_hat, curve.lo, curve.hi):
                fh.write(
                    f"{i},{float(t)!r},{float(s)!r},{float(lo)!r},{float(hi)!r}\n"
                )
    _log(f"wrote {len(rows)} curves -> {args.out_curves}")
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    model = store_mod.load_model(args.model).to_model()
    dataset = data_mod.load_csv_encoded(
        args.data, model.schema, model.vocabulary, model.norms
    )
    report = evaluation_report(
        model,
        dataset,
        horizon_days=args.horizon,
        n_mcmc=args.n_mcmc,
        rng=RngStream(args.seed),
        threshold=args.threshold,
    )
    with open(args.out_report, "w", encoding="utf-8") as fh:
        json.dump(report.to_json_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    hist_path = args.out_histogram or f"{args.out_report}.hist.csv"
    with open(hist_path, "w", encoding="utf-8") as fh:
        for line in report.histogram_csv_rows():
            fh.write(line + "\n")
    _log(
        f"accuracy {report.accuracy:.3f} (majority {report.majority_accuracy:.3f}), "
        f"AUC {report.auc:.3f} -> {args.out_report}"
    )
    return EXIT_OK


def _cmd_serve(args) -> int:
    import uvicorn

    from .server import create_app

    model = store_mod.load_model(args.model).to_model()
    app = create_app(model, ui_dir=args.ui_dir)
    _log(f"serving model ({model.param_count} parameters) on "
         f"http://{args.host}:{args.port}")
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return EXIT_OK


def run(argv) -> int:
    """Parse and execute; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        _log(f"usage error: {exc}")
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help paths
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    if getattr(args, "func", None) is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except _UsageError as exc:
        _log(f"usage error: {exc}")
        return EXIT_USAGE
    except (DataError, StoreError) as exc:
        _log(f"data error: {exc}")
        return EXIT_DATA
    except (TrainingError, FloatingPointError, OverflowError) as exc:
        _log(f"numeric failure: {exc}")
        return EXIT_NUMERIC
    except OSError as exc:
        _log(f"data error: {exc}")
        return EXIT_DATA


def main():
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
