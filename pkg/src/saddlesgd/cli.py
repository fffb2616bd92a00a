"""Command-line front end: train / psgd-train / replay / eval / scale."""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import data, evaluate, models, parallel, serial

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_VERIFY = 3

_SCHEDULE_ALIASES = {"lemma2": serial.BOUND_SQRT}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def _load(path, task="classification"):
    try:
        with open(path, "r") as fh:
            return data.parse_libsvm(fh, task=task)
    except OSError as exc:
        sys.stderr.write(f"error: cannot read {path}: {exc}\n")
        raise SystemExit(EXIT_DATA) from exc
    except data.DataError as exc:
        sys.stderr.write(f"error: {path}: {exc}\n")
        raise SystemExit(EXIT_DATA) from exc


def _add_train_flags(sub, with_dual_flags=True):
    sub.add_argument("--data", required=True)
    sub.add_argument("--test")
    sub.add_argument("--loss", choices=[models.HINGE, models.LOGISTIC, models.SQUARED],
                     default=models.HINGE)
    sub.add_argument("--reg", choices=[models.L2, models.L1], default=models.L2)
    sub.add_argument("--lambda", dest="lam", type=float, default=1e-3)
    sub.add_argument("--eta0", type=float, default=1.0)
    sub.add_argument("--schedule",
                     choices=[serial.SQRT_T, serial.ADAGRAD, serial.BOUND_SQRT, "lemma2"],
                     default=serial.SQRT_T)
    sub.add_argument("--diam", type=float, default=1.0)
    sub.add_argument("--grad-const", type=float, default=1.0)
    sub.add_argument("--epochs", type=int, default=10)
    sub.add_argument("--workers", type=int, default=1)
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--trace")
    sub.add_argument("--model")
    sub.add_argument("--balance", choices=["contiguous", "greedy"], default="contiguous")
    sub.add_argument("--no-shuffle", action="store_true")
    if with_dual_flags:
        sub.add_argument("--log-updates")
        sub.add_argument("--balpha", type=float, default=10.0)


def _config_from_args(args, log_updates=False) -> serial.TrainConfig:
    kind = _SCHEDULE_ALIASES.get(args.schedule, args.schedule)
    schedule = serial.StepSchedule(
        kind=kind, eta0=args.eta0, diam=args.diam, grad_const=args.grad_const
    )
    return serial.TrainConfig(
        lam=args.lam,
        loss=args.loss,
        reg=args.reg,
        schedule=schedule,
        epochs=args.epochs,
        seed=args.seed,
        p=args.workers,
        b_alpha=getattr(args, "balpha", 10.0),
        eval_every=1 if args.trace else 0,
        shuffle=not args.no_shuffle,
        log_updates=log_updates,
        strategy=args.balance,
    )


def _prepare(args):
    dataset = _load(args.data, task="regression" if args.loss == models.SQUARED else "classification")
    if args.loss != models.SQUARED:
        dataset = data.fold_labels(dataset)
    test = _load(args.test) if args.test else None
    return dataset, test


def _write_trace(path, trace):
    with open(path, "w") as fh:
        for rec in trace:
            fh.write(json.dumps({k: _plain(v) for k, v in rec.items()}) + "\n")


def _plain(v):
    return float(v) if isinstance(v, (np.floating, np.integer)) else v


def _cmd_train(args) -> int:
    dataset, test = _prepare(args)
    config = _config_from_args(args, log_updates=bool(args.log_updates))
    result = parallel.run_parallel(dataset, config, test=test)
    if args.trace:
        _write_trace(args.trace, result.trace)
    if args.log_updates:
        parallel.save_update_log(args.log_updates, result.log)
    if args.model:
        serial.save_checkpoint(args.model, result.state, config, dataset.m, dataset.d)
    return EXIT_OK


def _cmd_psgd_train(args) -> int:
    dataset, test = _prepare(args)
    config = _config_from_args(args)
    w, trace = parallel.run_psgd(dataset, config)
    if args.trace:
        _write_trace(args.trace, trace)
    if args.model:
        state = serial.ModelState(w=w, alpha=np.zeros(dataset.m))
        serial.save_checkpoint(args.model, state, config, dataset.m, dataset.d)
    return EXIT_OK


def _cmd_replay(args) -> int:
    expected_w, expected_a, meta = serial.load_checkpoint(args.model_expected)
    task = "regression" if meta["loss"] == models.SQUARED else "classification"
    dataset = _load(args.data, task=task)
    if meta["loss"] != models.SQUARED:
        dataset = data.fold_labels(dataset)
    schedule = serial.StepSchedule(
        kind=_SCHEDULE_ALIASES.get(args.schedule, args.schedule), eta0=args.eta0
    )
    config = serial.TrainConfig(
        lam=meta["lam"], loss=meta["loss"], reg=meta["reg"],
        schedule=schedule, seed=args.seed, b_alpha=args.balpha,
    )
    try:
        log = parallel.load_update_log(args.log)
        state = parallel.replay_log(dataset, config, log)
    except parallel.CorruptLogError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_DATA
    same = (
        state.w.tobytes() == np.asarray(expected_w).tobytes()
        and state.alpha.tobytes() == np.asarray(expected_a).tobytes()
    )
    if not same:
        sys.stderr.write("replay mismatch: final state differs from checkpoint\n")
        return EXIT_VERIFY
    print("replay ok: final state is bit-identical")
    return EXIT_OK


def _cmd_eval(args) -> int:
    w, alpha, meta = serial.load_checkpoint(args.model)
    test = _load(args.test)
    test_error = evaluate.eval_test_error(w, test)
    try:
        auprc = evaluate.eval_auprc(w, test)
    except evaluate.SingleClassError:
        auprc = None
    primal = dual = gap = None
    if args.data:
        train = _load(args.data, task="regression" if meta["loss"] == models.SQUARED else "classification")
        if meta["loss"] != models.SQUARED:
            train = data.fold_labels(train)
        params = models.make_params(train, meta["lam"], meta["loss"], meta["reg"])
        primal = models.primal_objective(params, w)
        dual = models.dual_objective(params, alpha)
        gap = primal - dual
    report = evaluate.EvalReport(
        test_error=test_error, auprc=auprc, primal=primal, dual=dual, gap=gap
    )
    print(report.to_json())
    return EXIT_OK


def _cmd_scale(args) -> int:
    dataset = _load(args.data)
    dataset = data.fold_labels(dataset)
    worker_counts = [int(tok) for tok in args.workers_list.split(",") if tok]
    samples = []
    for p in worker_counts:
        config = serial.TrainConfig(
            lam=args.lam, epochs=args.warmup + args.epochs, seed=args.seed,
            p=p, schedule=serial.StepSchedule(eta0=args.eta0),
        )
        try:
            timings = parallel.measure_epoch_times(dataset, config, warmup=args.warmup)
        except parallel.InsufficientSamplesError as exc:
            sys.stderr.write(f"error: {exc}\n")
            return EXIT_USAGE
        samples.append((p, timings.mean_wall()))
    try:
        model = evaluate.fit_scaling_model(samples)
    except evaluate.ScalingFitError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_USAGE
    out = {
        "A": model.compute_coeff,
        "B": model.comm_coeff,
        "r_squared": evaluate.scaling_r_squared(model, samples),
        "samples": [{"p": p, "epoch_time_s": t} for p, t in samples],
        "predicted": {str(p): float(model.predict(p)) for p in worker_counts},
    }
    print(json.dumps(out))
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="saddlesgd")
    subs = parser.add_subparsers(dest="command", required=True)

    train = subs.add_parser("train", description="Train with the block-rotating saddle-point solver.")
    _add_train_flags(train)
    train.set_defaults(fn=_cmd_train)

    psgd = subs.add_parser("psgd-train", description="Shard-local SGD with parameter averaging.")
    _add_train_flags(psgd, with_dual_flags=False)
    psgd.set_defaults(fn=_cmd_psgd_train)

    replay = subs.add_parser("replay", description="Serially replay an update log and verify bit-exactness.")
    replay.add_argument("--data", required=True)
    replay.add_argument("--log", required=True)
    replay.add_argument("--model-expected", required=True)
    replay.add_argument("--schedule",
                        choices=[serial.SQRT_T, serial.ADAGRAD, serial.BOUND_SQRT, "lemma2"],
                        default=serial.SQRT_T)
    replay.add_argument("--eta0", type=float, default=1.0)
    replay.add_argument("--seed", type=int, default=0)
    replay.add_argument("--balpha", type=float, default=10.0)
    replay.set_defaults(fn=_cmd_replay)

    ev = subs.add_parser("eval", description="Evaluate a checkpoint on a test set.")
    ev.add_argument("--model", required=True)
    ev.add_argument("--test", required=True)
    ev.add_argument("--data", help="training data; enables primal/dual/gap in the report")
    ev.set_defaults(fn=_cmd_eval)

    scale = subs.add_parser("scale", description="Measure epoch times and fit t(p) = A/p + B.")
    scale.add_argument("--data", required=True)
    scale.add_argument("--workers-list", required=True)
    scale.add_argument("--warmup", type=int, default=1)
    scale.add_argument("--epochs", type=int, default=2, help="measured epochs per worker count")
    scale.add_argument("--lambda", dest="lam", type=float, default=1e-3)
    scale.add_argument("--eta0", type=float, default=1.0)
    scale.add_argument("--seed", type=int, default=0)
    scale.set_defaults(fn=_cmd_scale)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else EXIT_USAGE
    try:
        return args.fn(args)
    except SystemExit as exc:
        return exc.code if exc.code is not None else EXIT_USAGE
    except serial.CheckpointError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_DATA
    except (ValueError, OSError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_USAGE


if __name__ == "__main__":
    raise SystemExit(main())
