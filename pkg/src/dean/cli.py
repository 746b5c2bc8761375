"""Batch command-line interface.

Exit codes: 0 success, 1 usage error, 2 data/format error, 3 numeric
failure.  Every randomized command takes --seed and reproduces its outputs
byte for byte; --threads (or the DEAN_THREADS environment variable) only
changes wall-clock time.
"""

import argparse
import csv
import os
import sys

import numpy as np

from . import data as dmod
from . import ensemble as emod
from . import fairness as fmod
from . import metrics as mmod
from . import nn
from .errors import DataFormatError, NumericError
from .rng import mix64


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _parse_hidden(text):
    try:
        widths = tuple(int(tok) for tok in text.split(",") if tok.strip())
    except ValueError:
        raise UsageError(f"bad hidden layer list {text!r}") from None
    if not widths or any(w < 1 for w in widths):
        raise UsageError(f"bad hidden layer list {text!r}")
    return widths


def _add_data_flags(p, group_col=True):
    p.add_argument("--data", required=True, help="input CSV with header row")
    p.add_argument("--label-col", default=None,
                   help="name of the binary anomaly-label column")
    if group_col:
        p.add_argument("--group-col", default=None,
                       help="name of the binary group-attribute column")


def _add_ensemble_flags(p):
    p.add_argument("--submodels", type=int, default=100)
    p.add_argument("--bag", type=int, default=200,
                   help="features per submodel (all, if the data has fewer)")
    p.add_argument("--hidden", default="255,255,255",
                   help="comma-separated hidden layer widths")
    p.add_argument("--power", type=int, default=9)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--patience", type=int, default=10)
    p.add_argument("--lr", type=float, default=0.0001)
    p.add_argument("--batch", type=int, default=512)
    p.add_argument("--loss", choices=("squared", "absolute"), default="squared")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads (default: DEAN_THREADS or all cores)")
    p.add_argument("--quiet", action="store_true",
                   help="suppress the per-submodel progress counter")


def _threads(args):
    if args.threads is not None:
        return args.threads
    env = os.environ.get("DEAN_THREADS")
    return int(env) if env else None


def _ensemble_config(args):
    tconfig = nn.TrainConfig(epochs=args.epochs, patience=args.patience,
                             learning_rate=args.lr, batch_size=args.batch,
                             loss=args.loss, seed=args.seed)
    return emod.EnsembleConfig(
        n_submodels=args.submodels, bag_size=args.bag,
        hidden=_parse_hidden(args.hidden), power=args.power,
        tconfig=tconfig, master_seed=args.seed, threads=_threads(args))


def _progress(quiet):
    if quiet:
        return None

    def report(done, total):
        print(f"\rsubmodels {done}/{total}", end="" if done < total else "\n",
              file=sys.stderr, flush=True)

    return report


def _load_labeled(args, group_col=True):
    return dmod.load_csv(args.data, label_col=args.label_col,
                         group_col=args.group_col if group_col else None)


def _write_scores(path, scores):
    with open(path, "w", newline="") as fh:
        fh.write("row_index,score\n")
        for i, v in enumerate(scores):
            fh.write(f"{i},{_fmt(v)}\n")


def _read_scores(path):
    try:
        fh = open(path, "r", newline="")
    except OSError as exc:
        raise DataFormatError(f"cannot open {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["row_index", "score"]:
            raise DataFormatError(f"{path}: expected header 'row_index,score'")
        values = []
        for i, row in enumerate(reader, start=1):
            if len(row) != 2:
                raise DataFormatError(f"{path}: row {i} is ragged")
            try:
                idx, val = int(row[0]), float(row[1])
            except ValueError:
                raise DataFormatError(f"{path}: row {i} is not numeric") from None
            if idx != i - 1:
                raise DataFormatError(f"{path}: row_index out of order at row {i}")
            values.append(val)
    return np.array(values, dtype=np.float64)


# -- commands ------------------------------------------------------------


def cmd_train(args) -> int:
    labeled = _load_labeled(args)
    config = _ensemble_config(args)
    e = emod.train_ensemble(labeled, config, fair_theta=args.fair_theta,
                            progress=_progress(args.quiet))
    emod.save(e, args.model)
    return 0


def cmd_score(args) -> int:
    e = emod.load(args.model)
    labeled = _load_labeled(args)
    _write_scores(args.out, emod.ensemble_score(e, labeled))
    return 0


def cmd_eval(args) -> int:
    scores = _read_scores(args.scores)
    labeled = dmod.load_csv(args.data, label_col=args.label_col)
    if labeled.labels is None:
        raise UsageError("eval needs --label-col")
    if scores.shape[0] != labeled.rows:
        raise DataFormatError(
            f"{args.scores} has {scores.shape[0]} rows, data has {labeled.rows}")
    roc = mmod.auc_roc(scores, labeled.labels)
    pr = mmod.auc_pr(scores, labeled.labels)
    print(f"auc_roc={roc!r} auc_pr={pr!r}")
    return 0


def cmd_cmp(args) -> int:
    table = mmod.load_results_csv(args.table)
    report = mmod.compare_algorithms(table, alpha=args.alpha)
    order = np.argsort(report.mean_ranks, kind="stable")
    print(f"friedman_statistic={report.friedman_statistic!r} "
          f"friedman_p={report.friedman_p!r}")
    print("mean ranks (lower is better):")
    for i in order:
        print(f"  {report.algorithms[i]}: {report.mean_ranks[i]:.4f}")
    if report.not_significantly_different:
        print(f"not significantly different at alpha={args.alpha}:")
        for a, b in report.not_significantly_different:
            print(f"  {a} ~ {b}")
    else:
        print(f"all pairs significantly different at alpha={args.alpha}")
    if args.out:
        with open(args.out, "w", newline="") as fh:
            fh.write("algorithm,mean_rank," +
                     ",".join(f"holm_p_vs_{a}" for a in report.algorithms) + "\n")
            for i, name in enumerate(report.algorithms):
                cells = [name, _fmt(report.mean_ranks[i])]
                for j in range(len(report.algorithms)):
                    cells.append("" if i == j else _fmt(report.holm_adjusted[i, j]))
                fh.write(",".join(cells) + "\n")
    return 0


def _bench_dataset(args, run_seed):
    if args.data is not None:
        full = dmod.load_csv(args.data, label_col=args.label_col,
                             group_col=args.group_col)
        if full.labels is None:
            raise UsageError("bench on a CSV needs --label-col")
    else:
        full = dmod.make_synthetic(args.suite, args.n_normal, args.n_anomaly,
                                   args.dim, args.seed)
    return dmod.split(full, args.train_fraction, run_seed,
                      normal_only_train=True)


def _k_grid(text, n):
    if text:
        ks = sorted({int(tok) for tok in text.split(",") if tok.strip()})
        if not ks or ks[0] < 1 or ks[-1] > n:
            raise UsageError(f"--k-grid entries must lie in [1, {n}]")
        return ks
    ks = np.unique(np.rint(np.geomspace(1, n, num=min(10, n))).astype(int))
    return [int(k) for k in ks]


def cmd_bench(args) -> int:
    if args.data is None and args.suite is None:
        raise UsageError("bench needs --suite or --data")
    config = _ensemble_config(args)
    ks = _k_grid(args.k_grid, config.n_submodels)
    roc_runs, pr_runs = [], []
    growth_roc = {k: [] for k in ks}
    growth_pr = {k: [] for k in ks}
    for r in range(args.repeats):
        run_seed = mix64(args.seed, r)
        train, test = _bench_dataset(args, run_seed)
        if test.labels is None or test.labels.min() == test.labels.max():
            raise DataFormatError("test split needs both classes for AUC")
        cfg = emod.EnsembleConfig(
            n_submodels=config.n_submodels, bag_size=config.bag_size,
            hidden=config.hidden, power=config.power, tconfig=config.tconfig,
            master_seed=run_seed, threads=config.threads)
        e = emod.train_ensemble(train, cfg, progress=_progress(args.quiet))
        scores = emod.ensemble_score(e, test)
        roc_runs.append(mmod.auc_roc(scores, test.labels))
        pr_runs.append(mmod.auc_pr(scores, test.labels))
        base = emod.base_score_matrix(e, test)
        for k in ks:
            sk = emod.scores_from_base(base[:, :k], e.power, e.weights[:k])
            growth_roc[k].append(mmod.auc_roc(sk, test.labels))
            growth_pr[k].append(mmod.auc_pr(sk, test.labels))
    with open(args.growth_out, "w", newline="") as fh:
        fh.write("k,auc_roc,auc_pr\n")
        for k in ks:
            fh.write(f"{k},{_fmt(np.asarray(growth_roc[k]).mean())},"
                     f"{_fmt(np.asarray(growth_pr[k]).mean())}\n")
    with open(args.repeats_out, "w", newline="") as fh:
        fh.write("run,auc_roc,auc_pr\n")
        for r, (a, p) in enumerate(zip(roc_runs, pr_runs)):
            fh.write(f"{r},{_fmt(a)},{_fmt(p)}\n")
        if len(roc_runs) >= 2:
            roc_mean, roc_std = mmod.repetition_stats(roc_runs)
            pr_mean, pr_std = mmod.repetition_stats(pr_runs)
            fh.write(f"mean,{_fmt(roc_mean)},{_fmt(pr_mean)}\n")
            fh.write(f"std,{_fmt(roc_std)},{_fmt(pr_std)}\n")
    return 0


def _print_report(tag, rep):
    print(f"{tag}: auc_group0={rep.auc_group0!r} auc_group1={rep.auc_group1!r} "
          f"fairness_score={rep.fairness_score!r} overall_auc={rep.overall_auc!r}")


def cmd_fairness(args) -> int:
    if args.data is not None:
        full = dmod.load_csv(args.data, label_col=args.label_col,
                             group_col=args.group_col)
        if full.labels is None or full.groups is None:
            raise UsageError("fairness needs --label-col and --group-col")
    else:
        full = dmod.make_synthetic("biased-groups", args.n_normal,
                                   args.n_anomaly, args.dim, args.seed)
    train, test = dmod.split(full, args.train_fraction, args.seed,
                             normal_only_train=True)
    config = _ensemble_config(args)
    progress = _progress(args.quiet)
    e = emod.train_ensemble(train, config, progress=progress)
    before = fmod.fairness_metric(emod.ensemble_score(e, test),
                                  test.labels, test.groups)
    _print_report("before", before)

    if args.mode == "prune":
        adjusted = fmod.prune_for_fairness(e, test, args.fraction)
    elif args.mode == "weight":
        ga = fmod.GaConfig(population=args.ga_population,
                           generations=args.ga_generations,
                           mutation_sigma=args.ga_sigma,
                           elite=args.ga_elite, seed=args.seed)
        adjusted = emod.with_weights(e, fmod.evolve_weights(e, test, ga))
    else:  # loss
        # the train split is one-class already, so its rows are the
        # effective training rows
        gap_before = fmod.output_gap(e, train.data.values, train.groups)
        adjusted = emod.train_ensemble(train, config, fair_theta=args.theta,
                                       progress=progress)
        gap_after = fmod.output_gap(adjusted, train.data.values, train.groups)
        print(f"train_output_gap_before={gap_before!r} "
              f"train_output_gap_after={gap_after!r}")
    after = fmod.fairness_metric(emod.ensemble_score(adjusted, test),
                                 test.labels, test.groups)
    _print_report("after", after)
    return 0


def cmd_demo_sin(args) -> int:
    grid = dmod.make_synthetic("sine-demo", args.points, 0, 2, args.seed)
    x = grid.data.values[:, 0:1]
    y = grid.data.values[:, 1]
    tconfig = nn.TrainConfig(epochs=args.epochs, patience=args.epochs,
                             learning_rate=args.lr, batch_size=args.batch,
                             loss="squared", seed=args.seed)
    fits, mses = {}, {}
    for stream, policy in enumerate(("all", "none", "all-but-last"), start=1):
        net = nn.init_mlp([1, 100, 100, 100, 1], policy,
                          ["relu", "relu", "relu", "identity"],
                          mix64(args.seed, stream))
        net, _ = nn.train(net, x, tconfig, target=y)
        pred = nn.forward(net, x)[:, 0]
        fits[policy] = pred
        mses[policy] = float(np.mean((pred - y) ** 2))
    with open(args.out, "w", newline="") as fh:
        fh.write("x,target,all_bias,no_bias,bias_but_last\n")
        for i in range(args.points):
            fh.write(",".join(_fmt(v) for v in (
                x[i, 0], y[i], fits["all"][i], fits["none"][i],
                fits["all-but-last"][i])) + "\n")
    print(f"mse_all_bias={mses['all']!r} mse_no_bias={mses['none']!r} "
          f"mse_bias_but_last={mses['all-but-last']!r}")
    return 0


def cmd_grad_check(args) -> int:
    rng = np.random.default_rng(args.seed)
    worst = 0.0
    for _ in range(args.trials):
        depth = int(rng.integers(1, 4))
        widths = [int(rng.integers(1, 17)) for _ in range(depth + 1)]
        widths.append(1)
        acts = [str(rng.choice(["relu", "selu"])) for _ in range(len(widths) - 1)]
        policy = str(rng.choice(["all", "none", "all-but-last"]))
        net = nn.init_mlp(widths, policy, acts, int(rng.integers(0, 2 ** 31)))
        batch = rng.normal(size=(int(rng.integers(1, 9)), widths[0]))
        err = nn.grad_check(net, batch, 1.0, eps=args.eps)
        worst = max(worst, err)
    print(f"max_rel_err={worst!r} trials={args.trials}")
    if worst > args.tol:
        raise NumericError(
            f"gradient check failed: {worst} exceeds tolerance {args.tol}")
    return 0


# -- parser --------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="dean", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train an ensemble and save it as JSON")
    _add_data_flags(p)
    p.add_argument("--model", required=True, help="output model path")
    _add_ensemble_flags(p)
    p.add_argument("--fair-theta", type=float, default=0.0,
                   help="group-fairness penalty weight (needs --group-col)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("score", help="score rows with a saved ensemble")
    p.add_argument("--model", required=True)
    _add_data_flags(p)
    p.add_argument("--out", required=True, help="output CSV (row_index,score)")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("eval", help="AUC metrics for a score file")
    p.add_argument("--scores", required=True, help="CSV from 'dean score'")
    p.add_argument("--data", required=True)
    p.add_argument("--label-col", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("cmp", help="rank-based comparison of algorithm results")
    p.add_argument("--table", required=True,
                   help="CSV: dataset name column, then one column per algorithm")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--out", default=None, help="optional pairwise CSV report")
    p.set_defaults(func=cmd_cmp)

    p = sub.add_parser("bench", help="growth-curve and repetition benchmarks")
    p.add_argument("--suite", choices=("linear-pattern", "gauss-blob",
                                       "biased-groups"), default=None)
    p.add_argument("--data", default=None, help="labeled CSV as an alternative")
    p.add_argument("--label-col", default=None)
    p.add_argument("--group-col", default=None)
    p.add_argument("--n-normal", type=int, default=2000)
    p.add_argument("--n-anomaly", type=int, default=200)
    p.add_argument("--dim", type=int, default=8)
    p.add_argument("--train-fraction", type=float, default=0.7)
    p.add_argument("--repeats", type=int, default=10)
    p.add_argument("--k-grid", default=None,
                   help="comma-separated subset sizes (default: geometric)")
    p.add_argument("--growth-out", required=True)
    p.add_argument("--repeats-out", required=True)
    _add_ensemble_flags(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("fairness",
                       help="group-fairness adaptations of a trained ensemble")
    p.add_argument("--mode", choices=("loss", "prune", "weight"), required=True)
    p.add_argument("--data", default=None)
    p.add_argument("--label-col", default=None)
    p.add_argument("--group-col", default=None)
    p.add_argument("--n-normal", type=int, default=2000)
    p.add_argument("--n-anomaly", type=int, default=200)
    p.add_argument("--dim", type=int, default=8)
    p.add_argument("--train-fraction", type=float, default=0.6)
    p.add_argument("--theta", type=float, default=0.1)
    p.add_argument("--fraction", type=float, default=0.1)
    p.add_argument("--ga-population", type=int, default=64)
    p.add_argument("--ga-generations", type=int, default=200)
    p.add_argument("--ga-sigma", type=float, default=0.05)
    p.add_argument("--ga-elite", type=int, default=4)
    _add_ensemble_flags(p)
    p.set_defaults(func=cmd_fairness)

    p = sub.add_parser("demo-sin",
                       help="fit sin(x) with three bias policies, emit curves")
    p.add_argument("--out", required=True)
    p.add_argument("--points", type=int, default=256)
    p.add_argument("--epochs", type=int, default=1500)
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_demo_sin)

    p = sub.add_parser("grad-check",
                       help="verify analytic gradients against finite differences")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_grad_check)

    return parser


def run(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (DataFormatError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
