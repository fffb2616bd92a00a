#!/usr/bin/env python3
"""Epoch-time scaling: measure wall time per epoch across worker counts and
fit t(p) = A/p + B.

On a multi-core machine A captures the update work that divides across
workers and B the per-epoch synchronization floor.
"""

import argparse
import json

from saddlesgd import data, evaluate, parallel, serial, synthetic


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--m", type=int, default=4000)
    ap.add_argument("--d", type=int, default=1000)
    ap.add_argument("--nnz-per-row", type=int, default=500)
    ap.add_argument("--workers", default="1,2,4")
    ap.add_argument("--epochs", type=int, default=2, help="measured epochs")
    ap.add_argument("--warmup", type=int, default=1)
    ap.add_argument("--lambda", dest="lam", type=float, default=1e-3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    ds = data.fold_labels(
        synthetic.make_sparse_classification(
            args.m, args.d, args.nnz_per_row, seed=args.seed
        )
    )
    print(f"dataset: m={ds.m} d={ds.d} nnz={ds.nnz_total}")

    samples = []
    for p in (int(tok) for tok in args.workers.split(",")):
        config = serial.TrainConfig(
            lam=args.lam, epochs=args.warmup + args.epochs, seed=args.seed, p=p
        )
        timings = parallel.measure_epoch_times(ds, config, warmup=args.warmup)
        samples.append((p, timings.mean_wall()))
        print(
            f"p={p}: wall {timings.mean_wall():.3f}s/epoch  "
            f"compute {timings.compute.sum(axis=1).mean():.3f}s  "
            f"wait {timings.exchange.sum(axis=1).mean():.3f}s"
        )

    model = evaluate.fit_scaling_model(samples)
    r2 = evaluate.scaling_r_squared(model, samples)
    print(json.dumps({
        "A": model.compute_coeff,
        "B": model.comm_coeff,
        "r_squared": r2,
        "predicted": {str(p): float(model.predict(p)) for p, _ in samples},
    }))


if __name__ == "__main__":
    main()
