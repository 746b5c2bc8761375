#!/usr/bin/env python3
"""Compare the numba-jitted kernels against the pure-numpy fallback.

The backend is fixed at import time by DEAN_NUMBA, so this script
re-executes itself in a subprocess per backend and prints a small table.

    python benchmarks/bench_backends.py [--submodels 8] [--rows 2000] ...
"""

import argparse
import json
import os
import subprocess
import sys
import time


def worker(args) -> None:
    import numpy as np

    from dean import backend_name
    from dean.data import make_synthetic
    from dean.ensemble import EnsembleConfig, ensemble_score, train_ensemble
    from dean.nn import TrainConfig

    data = make_synthetic("gauss-blob", args.rows, args.rows // 10, args.dim,
                          seed=7)
    config = EnsembleConfig(
        n_submodels=args.submodels, bag_size=args.bag,
        hidden=tuple(int(h) for h in args.hidden.split(",")),
        power=9,
        tconfig=TrainConfig(epochs=args.epochs, patience=args.epochs,
                            learning_rate=1e-4, batch_size=256, seed=3),
        master_seed=11, threads=1)

    # warm: first training also pays any jit compilation
    warm_cfg = EnsembleConfig(n_submodels=1, bag_size=args.bag,
                              hidden=config.hidden, power=9,
                              tconfig=config.tconfig, master_seed=5, threads=1)
    train_ensemble(data, warm_cfg)

    t0 = time.perf_counter()
    e = train_ensemble(data, config)
    t_train = time.perf_counter() - t0

    t0 = time.perf_counter()
    for _ in range(args.score_reps):
        scores = ensemble_score(e, data)
    t_score = (time.perf_counter() - t0) / args.score_reps

    print(json.dumps({
        "backend": backend_name(),
        "train_s": t_train,
        "score_s": t_score,
        "checksum": float(np.sum(scores)),
    }))


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--submodels", type=int, default=8)
    parser.add_argument("--rows", type=int, default=2000)
    parser.add_argument("--dim", type=int, default=16)
    parser.add_argument("--bag", type=int, default=16)
    parser.add_argument("--hidden", default="64,64,64")
    parser.add_argument("--epochs", type=int, default=15)
    parser.add_argument("--score-reps", type=int, default=5)
    parser.add_argument("--worker", action="store_true", help=argparse.SUPPRESS)
    args = parser.parse_args()

    if args.worker:
        worker(args)
        return

    results = {}
    for flag in ("1", "0"):
        env = dict(os.environ, DEAN_NUMBA=flag)
        cmd = [sys.executable, os.path.abspath(__file__), "--worker"]
        for name in ("submodels", "rows", "dim", "bag", "hidden", "epochs",
                     "score_reps"):
            cmd += [f"--{name.replace('_', '-')}", str(getattr(args, name))]
        out = subprocess.run(cmd, env=env, check=True, capture_output=True,
                             text=True).stdout
        rec = json.loads(out.strip().splitlines()[-1])
        results[rec["backend"]] = rec

    numba, numpy_ = results.get("numba"), results["numpy"]
    print(f"{'backend':<8} {'train (s)':>10} {'score (s)':>10}")
    for rec in results.values():
        print(f"{rec['backend']:<8} {rec['train_s']:>10.3f} {rec['score_s']:>10.4f}")
    if numba:
        print(f"speedup  {numpy_['train_s'] / numba['train_s']:>10.2f}x "
              f"{numpy_['score_s'] / numba['score_s']:>9.2f}x")
        drift = abs(numba["checksum"] - numpy_["checksum"])
        rel = drift / max(abs(numpy_["checksum"]), 1e-300)
        print(f"score checksum rel. difference between backends: {rel:.2e}")


if __name__ == "__main__":
    main()
