# src/cli.py
"""
mtl - command-line surface for the grouped latent multi-task trainer.

Usage examples:
  python -m src synth --d 100 --m 12 --groups 3 --n-per-task 200 \
      --undersample "0:15,1:15,2:15" --seed 7 --out-dir data/synth
  python -m src train --features data/synth/train/*.mtlf --labels data/synth/train/*.csv \
      --groups data/synth/groups.txt --mu 0.1 --gamma 0.05 --latent-k d/2 --out model.mtlm
  python -m src eval --model model.mtlm --features data/synth/test.mtlf \
      --labels data/synth/test.csv --groups data/synth/groups.txt --metric acc

Commands:
  train     fit L and S by alternating minimisation; writes the model and a JSON-lines report
            (--ungrouped: one group per attribute, i.e. latent sharing without group structure)
  predict   score a feature file with a saved model (CSV to stdout or --out)
  eval      group-level accuracy / mAP table; several --model files give a comparison table
  baseline  lasso | l21 | ridge comparison classifiers, saved in the model format
  synth     group-structured synthetic data with ground truth
  cv        grid search of (mu, gamma), or gamma for the lasso baseline

Exit codes: 0 ok, 1 usage, 2 data error, 3 solver error.
Logs go to stderr; results go to stdout unless --out is given.
"""

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
from rich.console import Console
from rich.logging import RichHandler

from .baselines import train_l21_all, train_ridge, train_single_lasso
from .config import CONFIG
from .dataio import (
    SynthSpec,
    generate_synthetic,
    load_dataset,
    load_features,
    load_groups,
    load_model,
    save_features,
    save_groups,
    save_labels,
    save_model,
)
from .errors import DataError, SolverError, TrainingError
from .evaluation import accuracy_table, comparison_table, evaluate_dataset, predict_labels, predict_scores
from .file_utils import write_text
from .model import Dataset, GroupPartition, Hyperparams, LatentModel, ensure_valid, task_seed
from .optim import SolverOpts
from .report_generator import (
    accuracy_table_csv,
    format_accuracy_table,
    format_comparison_table,
    format_cv_table,
    write_json_report,
    write_training_report,
)
from .trainer import cross_validate, cross_validate_lasso, describe_support, train

logger = logging.getLogger("mtl")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_SOLVER = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """ArgumentParser that reports usage errors to the caller instead of exiting."""

    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


# -------------------------
# Argument types
# -------------------------
def latent_k_arg(text: str) -> Union[int, str]:
    text = text.strip().lower()
    if text in ("auto", "d/2"):
        return text
    try:
        k = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, 'd/2' or 'auto', got '{text}'")
    if k < 1:
        raise argparse.ArgumentTypeError("latent K must be >= 1")
    return k


def float_list_arg(text: str) -> List[float]:
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got '{text}'")
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


def undersample_arg(text: str) -> Dict[int, int]:
    """"0:15,1:15" -> {0: 15, 1: 15}"""
    out = {}
    for item in (i.strip() for i in text.split(",") if i.strip()):
        try:
            task, n = item.split(":")
            out[int(task)] = int(n)
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected task:count pairs, got '{item}'")
    return out


def resolve_latent_k(value: Union[int, str], d: int) -> Optional[int]:
    if value == "auto":
        return None
    if value == "d/2":
        return max(1, d // 2)
    return int(value)


# -------------------------
# Shared helpers
# -------------------------
def _add_data_args(p: argparse.ArgumentParser, groups_required: bool = True, allow_ungrouped: bool = False) -> None:
    p.add_argument("--features", nargs="+", required=True, help="feature files (.mtlf or .csv), one per label file")
    p.add_argument("--labels", nargs="+", required=True, help="label CSV files, paired in order with --features")
    if allow_ungrouped:
        g = p.add_mutually_exclusive_group(required=groups_required)
        g.add_argument("--groups", help="group file 'Name: attr, attr, ...'")
        g.add_argument(
            "--ungrouped",
            action="store_true",
            help="one group per attribute: the S penalty becomes entrywise L1 and no group structure is encoded",
        )
    else:
        p.add_argument("--groups", required=groups_required, help="group file 'Name: attr, attr, ...'")
    p.add_argument("--zero-one-labels", action="store_true", help="accept 0/1 labels (0 maps to -1)")


def _add_hyper_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--mu", type=float, default=0.1, help="group-L21 weight on S")
    p.add_argument("--gamma", type=float, default=0.01, help="L1 weight on L")
    p.add_argument("--lambda", dest="lam", type=float, default=CONFIG.LAMBDA, help="Frobenius weight on L")
    p.add_argument("--latent-k", type=latent_k_arg, default="auto", help="K as an integer, 'd/2' or 'auto'")
    p.add_argument("--nu", type=float, default=None, help="smoothing scale (default derived from inner tol)")
    p.add_argument("--nu-schedule", choices=("fixed", "geometric"), default="fixed")
    p.add_argument("--s-solver", choices=("spg", "exact"), default="spg")
    p.add_argument("--outer-max", type=int, default=CONFIG.OUTER_MAX)
    p.add_argument("--outer-tol", type=float, default=1e-5)
    p.add_argument("--inner-max", type=int, default=CONFIG.INNER_MAX)
    p.add_argument("--inner-tol", type=float, default=1e-6)
    p.add_argument("--ridge-lambda", type=float, default=1.0, help="ridge strength of the warm start")
    p.add_argument("--squared-group-norm", action="store_true")
    p.add_argument("--group-size-weighting", action="store_true")
    p.add_argument("--max-per-task", type=int, default=None, help="subsample every pool to at most N rows")


def _hyperparams(args, d: int) -> Hyperparams:
    return Hyperparams(
        mu=args.mu,
        gamma=args.gamma,
        lam=args.lam,
        k=resolve_latent_k(args.latent_k, d),
        nu=args.nu,
        outer_max=args.outer_max,
        outer_tol=args.outer_tol,
        inner_max=args.inner_max,
        inner_tol=args.inner_tol,
        seed=args.seed,
        ridge_lambda=args.ridge_lambda,
        squared_group_norm=args.squared_group_norm,
        group_size_weighting=args.group_size_weighting,
        nu_schedule=args.nu_schedule,
        s_solver=args.s_solver,
    )


def _balance(dataset: Dataset, cap: int, seed: int) -> Dataset:
    """Seeded per-task subsample to at most `cap` rows (pre-balancing changes the summed loss)."""
    if cap < 1:
        raise DataError(f"--max-per-task must be >= 1, got {cap}")
    rows = []
    for task in dataset.tasks:
        if task.n <= cap:
            rows.append(np.arange(task.n))
        else:
            rng = np.random.default_rng(task_seed(seed, task.name))
            rows.append(np.sort(rng.choice(task.n, size=cap, replace=False)))
    logger.warning("pools subsampled to at most %d rows per task", cap)
    return dataset.subset(rows)


def _partition(args, dataset: Dataset) -> GroupPartition:
    if getattr(args, "ungrouped", False):
        return GroupPartition.singletons(dataset.names)
    if args.groups:
        return load_groups(args.groups, dataset.names)
    return GroupPartition.single(dataset.m)


def _load_training_data(args):
    dataset = load_dataset(args.features, args.labels, zero_one=args.zero_one_labels)
    partition = _partition(args, dataset)
    ensure_valid(dataset, partition)
    return dataset, partition


def _align(model: LatentModel, names: Sequence[str]) -> LatentModel:
    """Reorder model columns to the given attribute order."""
    names = tuple(names)
    if model.names == names:
        return model
    if sorted(model.names) != sorted(names):
        raise DataError(f"model attributes {list(model.names)} do not match data attributes {list(names)}")
    order = [model.names.index(n) for n in names]
    return LatentModel(model.l, model.s[:, order], names)


def _matrix_csv(names: Sequence[str], matrix: np.ndarray, integer: bool = False) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(list(names))
    for row in matrix:
        writer.writerow([str(int(v)) if integer else repr(float(v)) for v in row])
    return buf.getvalue()


def _emit(out: Console, text: str, path: Optional[str]) -> None:
    if path:
        write_text(path, text if text.endswith("\n") else text + "\n")
        logger.info("wrote %s", path)
    else:
        out.print(text, markup=False, highlight=False, end="" if text.endswith("\n") else "\n")


# -------------------------
# Commands
# -------------------------
def cmd_train(args, out: Console) -> int:
    dataset, partition = _load_training_data(args)
    if args.max_per_task:
        dataset = _balance(dataset, args.max_per_task, args.seed)
    hp = _hyperparams(args, dataset.d)
    report_path = args.report or str(Path(args.out).with_suffix(".jsonl"))
    try:
        model, report = train(dataset, partition, hp)
    except TrainingError as e:
        if e.report is not None:
            write_training_report(report_path, e.report)
            logger.error("partial training report written to %s", report_path)
        raise
    save_model(args.out, model)
    write_training_report(report_path, report)
    for group, rows in describe_support(model, partition).items():
        logger.info("group %s uses %d of %d latent rows", group, len(rows), model.k)
    final = report.steps[-1].objective if report.steps else report.initial_objective
    out.print(
        f"model: {args.out}\nreport: {report_path}\nouter iterations: {report.n_outer}\n"
        f"objective: {final:.6f}\nconverged: {report.converged}",
        markup=False,
        highlight=False,
    )
    return EXIT_OK


def cmd_predict(args, out: Console) -> int:
    model = load_model(args.model)
    scores = predict_scores(model, load_features(args.features))
    if args.labels_only:
        _emit(out, _matrix_csv(model.names, predict_labels(scores), integer=True), args.out)
    else:
        _emit(out, _matrix_csv(model.names, scores), args.out)
    return EXIT_OK


def _evaluate(model: LatentModel, args, partition: GroupPartition, dataset: Dataset):
    model = _align(model, dataset.names)
    if len(args.features) == 1:
        labels = np.column_stack([task.y for task in dataset.tasks])
        return accuracy_table(predict_scores(model, dataset.tasks[0].x), labels, partition, dataset.names)
    return evaluate_dataset(model, dataset, partition)


def cmd_eval(args, out: Console) -> int:
    dataset, partition = _load_training_data(args)
    tables = {}
    for path in args.model:
        tables[Path(path).stem] = _evaluate(load_model(path), args, partition, dataset)
    if len(tables) == 1:
        table = next(iter(tables.values()))
        text = format_accuracy_table(table, with_map=args.with_map, metric=args.metric)
        if args.csv:
            write_text(args.csv, accuracy_table_csv(table))
    else:
        text = format_comparison_table(comparison_table(tables, metric=args.metric))
    _emit(out, text, args.out)
    return EXIT_OK


def cmd_baseline(args, out: Console) -> int:
    dataset, partition = _load_training_data(args)
    opts = SolverOpts(max_iter=args.max_iter, tol=args.tol)
    if args.kind == "lasso":
        w = train_single_lasso(dataset, args.gamma, opts)
    elif args.kind == "l21":
        w = train_l21_all(dataset, args.mu, opts)
    else:
        w = train_ridge(dataset, args.ridge_lambda)
    save_model(args.out, LatentModel.from_weights(w, dataset.names))
    out.print(f"{args.kind} baseline: {args.out}", markup=False, highlight=False)
    return EXIT_OK


def cmd_synth(args, out: Console) -> int:
    counts = [args.n_per_task] * args.m
    for task, n in args.undersample.items():
        if not 0 <= task < args.m:
            raise DataError(f"--undersample names task {task}, M={args.m}")
        counts[task] = n
    spec = SynthSpec(
        d=args.d,
        k_true=args.k_true or args.m,
        m=args.m,
        partition=GroupPartition.contiguous(args.m, args.groups),
        n_per_task=tuple(counts),
        density=args.density,
        noise=args.noise,
        margin_scale=args.margin_scale,
        n_test=args.n_test,
        noisy_test=args.noisy_test,
    )
    data = generate_synthetic(spec, args.seed)
    root = Path(args.out_dir)
    names = data.train.names
    for task in data.train.tasks:
        save_features(root / "train" / f"{task.name}.mtlf", task.x)
        save_labels(root / "train" / f"{task.name}.csv", [task.name], task.y[:, None])
    test_x = data.test.tasks[0].x
    save_features(root / "test.mtlf", test_x)
    save_labels(root / "test.csv", names, np.column_stack([t.y for t in data.test.tasks]))
    save_groups(root / "groups.txt", spec.partition, names)
    save_model(root / "truth.mtlm", LatentModel(data.l_true, data.s_true, tuple(names)))
    out.print(f"synthetic data: {root} ({args.m} tasks, D={args.d}, sizes {counts})", markup=False, highlight=False)
    return EXIT_OK


def cmd_cv(args, out: Console) -> int:
    dataset, partition = _load_training_data(args)
    if args.method == "lasso":
        opts = SolverOpts(max_iter=args.inner_max, tol=args.inner_tol)
        result = cross_validate_lasso(dataset, args.gamma_grid, args.folds, opts, args.seed, args.threads)
    else:
        hp = _hyperparams(args, dataset.d)
        result = cross_validate(
            dataset, partition, args.mu_grid, args.gamma_grid, args.folds, hp, args.seed, args.threads
        )
    _emit(out, format_cv_table(result), None)
    if args.out:
        payload = {
            "method": args.method,
            "param_names": list(result.param_names),
            "best": list(result.best),
            "scores": [
                {"params": list(s.params), "fold_scores": list(s.fold_scores), "mean": s.mean} for s in result.scores
            ],
        }
        write_json_report(args.out, payload, extra={"folds": args.folds, "seed": args.seed})
    return EXIT_OK


# -------------------------
# Parser
# -------------------------
def _common_args(top_level: bool) -> argparse.ArgumentParser:
    """--seed/--threads/--log-level, accepted before or after the subcommand."""

    def default(value):
        return value if top_level else argparse.SUPPRESS

    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=default(CONFIG.SEED), help="seed for every random draw")
    p.add_argument("--threads", type=int, default=default(CONFIG.THREADS), help="cv worker threads")
    p.add_argument(
        "--log-level", default=default(CONFIG.LOG_LEVEL), choices=("DEBUG", "INFO", "WARNING", "ERROR")
    )
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="mtl", description="Grouped latent multi-task attribute classifiers.", parents=[_common_args(True)]
    )
    sub = parser.add_subparsers(dest="command", required=True)
    common = [_common_args(False)]

    p = sub.add_parser("train", parents=common, help="fit the latent multi-task model")
    _add_data_args(p, allow_ungrouped=True)
    _add_hyper_args(p)
    p.add_argument("--out", required=True, help="model file (.mtlm)")
    p.add_argument("--report", default=None, help="JSON-lines report (default: <out>.jsonl)")
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("predict", parents=common, help="score features with a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--labels-only", action="store_true", help="emit -1/+1 instead of raw scores")
    p.add_argument("--out", default=None)
    p.set_defaults(handler=cmd_predict)

    p = sub.add_parser("eval", parents=common, help="group-level accuracy table")
    p.add_argument("--model", nargs="+", required=True, help="one model, or several for a comparison table")
    _add_data_args(p)
    p.add_argument("--metric", choices=("acc", "map"), default="acc")
    p.add_argument("--with-map", action="store_true", help="add an mAP column to the accuracy table")
    p.add_argument("--csv", default=None, help="also write per-attribute/group/total CSV")
    p.add_argument("--out", default=None)
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("baseline", parents=common, help="comparison classifiers")
    p.add_argument("kind", choices=("lasso", "l21", "ridge"))
    _add_data_args(p, groups_required=False)
    p.add_argument("--gamma", type=float, default=0.01)
    p.add_argument("--mu", type=float, default=0.1)
    p.add_argument("--ridge-lambda", type=float, default=1.0)
    p.add_argument("--max-iter", type=int, default=CONFIG.INNER_MAX)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_baseline)

    p = sub.add_parser("synth", parents=common, help="generate group-structured synthetic data")
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--groups", type=int, required=True, help="number of contiguous task groups")
    p.add_argument("--k-true", type=int, default=None, help="ground-truth latent rows (default M)")
    p.add_argument("--n-per-task", type=int, default=200)
    p.add_argument("--undersample", type=undersample_arg, default={}, help="task:count overrides, e.g. '0:15,1:15'")
    p.add_argument("--density", type=float, default=0.5)
    p.add_argument("--noise", type=float, default=0.0, help="label flip probability")
    p.add_argument("--margin-scale", type=float, default=1.0)
    p.add_argument("--n-test", type=int, default=1000)
    p.add_argument("--noisy-test", action="store_true")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(handler=cmd_synth)

    p = sub.add_parser("cv", parents=common, help="cross-validated hyperparameter selection")
    _add_data_args(p, allow_ungrouped=True)
    _add_hyper_args(p)
    p.add_argument("--method", choices=("mtl", "lasso"), default="mtl")
    p.add_argument("--mu-grid", type=float_list_arg, default=[0.01, 0.1, 1.0])
    p.add_argument("--gamma-grid", type=float_list_arg, default=[0.001, 0.01, 0.1])
    p.add_argument("--folds", type=int, default=3)
    p.add_argument("--out", default=None, help="JSON summary")
    p.set_defaults(handler=cmd_cv)
    return parser


def setup_logging(level: str) -> None:
    handler = RichHandler(console=Console(stderr=True), show_path=False, rich_tracebacks=False)
    logging.basicConfig(level=level, format="%(message)s", datefmt="[%X]", handlers=[handler], force=True)


def _resolved_flags(args) -> str:
    flags = {k: v for k, v in sorted(vars(args).items()) if k != "handler"}
    return json.dumps(flags, default=str, sort_keys=True)


def run(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        sys.stderr.write(f"{e}\n")
        return EXIT_USAGE
    except SystemExit as e:  # --help
        return EXIT_OK if e.code in (None, 0) else EXIT_USAGE

    setup_logging(args.log_level)
    logger.info("config %s", _resolved_flags(args))
    out = Console(soft_wrap=True)
    try:
        return args.handler(args, out)
    except DataError as e:
        logger.error("data error: %s", e)
        for issue in e.issues[1:]:
            logger.error("  %s", issue)
        return EXIT_DATA
    except SolverError as e:
        logger.error("solver error: %s", e)
        return EXIT_SOLVER
    except OSError as e:
        logger.error("cannot access %s: %s", getattr(e, "filename", "file"), e.strerror or e)
        return EXIT_DATA


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
