#!/usr/bin/env python3
"""Joint saddle-point training vs shard-local SGD with parameter averaging
on a deliberately heterogeneous two-shard problem.

Each method picks its best step size from a small grid; the comparison is
on the final primal objective of the full (pooled) problem.
"""

import argparse

from saddlesgd import data, models, parallel, serial, synthetic


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--m-per-shard", type=int, default=100)
    ap.add_argument("--d", type=int, default=30)
    ap.add_argument("--nnz-per-row", type=int, default=8)
    ap.add_argument("--pos-rates", default="0.8,0.2",
                    help="per-shard positive-class rates")
    ap.add_argument("--lambda", dest="lam", type=float, default=1e-2)
    ap.add_argument("--epochs", type=int, default=50)
    ap.add_argument("--seed", type=int, default=5)
    ap.add_argument("--etas", default="0.1,1,10")
    args = ap.parse_args()

    rates = tuple(float(tok) for tok in args.pos_rates.split(","))
    full = synthetic.make_imbalanced_shards(
        args.m_per_shard, args.d, args.nnz_per_row, pos_rates=rates, seed=11
    )
    ds = data.fold_labels(full)
    params = models.make_params(ds, args.lam)

    best = {"joint": (None, float("inf")), "averaged": (None, float("inf"))}
    for eta0 in (float(tok) for tok in args.etas.split(",")):
        config = serial.TrainConfig(
            lam=args.lam, epochs=args.epochs, seed=args.seed, p=len(rates),
            schedule=serial.StepSchedule(kind=serial.ADAGRAD, eta0=eta0),
        )
        state, _ = serial.train_serial(ds, config)
        joint = models.primal_objective(params, state.w)
        w_avg, _ = parallel.run_psgd(ds, config)
        averaged = models.primal_objective(params, w_avg)
        print(f"eta0={eta0:g}: joint {joint:.5f}  shard-averaged {averaged:.5f}")
        if joint < best["joint"][1]:
            best["joint"] = (eta0, joint)
        if averaged < best["averaged"][1]:
            best["averaged"] = (eta0, averaged)

    (je, jv), (ae, av) = best["joint"], best["averaged"]
    print(f"best joint:          {jv:.5f} (eta0={je:g})")
    print(f"best shard-averaged: {av:.5f} (eta0={ae:g})")


if __name__ == "__main__":
    main()
