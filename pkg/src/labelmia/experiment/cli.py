"""Command-line entry point.

Exit codes: 0 success, 2 configuration or argument error, 3 data-format
error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from labelmia.attack.features import DEFAULT_RATE_SET, build_attack_dataset, feature_names
from labelmia.attack.model import SELECTION_STRATEGIES, AttackClassifier
from labelmia.attack.table import read_attack_table, write_records
from labelmia.data.bundle import load_bundle, save_bundle
from labelmia.data.sampling import METHODS, DatasetSplit, feature_extrema, sample_split
from labelmia.data.sbm import generate_sbm
from labelmia.errors import ArgumentError, ConfigError, FormatError, NumericError
from labelmia.evaluation import TABLE_COLUMNS, compute_metrics, fmt, permutation_importance
from labelmia.experiment.config import SYNTHETIC_DEFAULTS, load_config
from labelmia.experiment.runner import (DEFENSE_FLAGS, _first_failure, aggregate_rows,
                                        run_defense_grid, run_experiment, run_relaxation_matrix)
from labelmia.gnn.checkpoint import load_checkpoint, save_checkpoint
from labelmia.gnn.model import GNN_TYPES, preset_config
from labelmia.gnn.training import as_label_oracle, train_gnn
from labelmia.graph import induced_subgraph
from labelmia.io import atomic_write_text

EXIT_OK, EXIT_CONFIG, EXIT_FORMAT, EXIT_NUMERIC = 0, 2, 3, 4


def _emit(rows, columns, fmt_name, stream=None):
    stream = stream or sys.stdout
    if fmt_name == "json-lines":
        for row in rows:
            stream.write(json.dumps({c: row[c] for c in columns}) + "\n")
    else:
        stream.write(",".join(columns) + "\n")
        for row in rows:
            stream.write(",".join(fmt(row[c]) if isinstance(row[c], float) else str(row[c])
                                  for c in columns) + "\n")


def _need(args, *names):
    missing = [n for n in names if getattr(args, n) is None]
    if missing:
        raise ConfigError("missing required option(s): " + ", ".join(
            "--" + n.replace("_", "-") for n in missing))


def _experiment_config(args):
    _need(args, "config")
    config = load_config(args.config)
    changes = {}
    if args.seed is not None:
        changes["base_seed"] = args.seed
    if args.repetitions is not None:
        if args.repetitions < 1:
            raise ConfigError("--repetitions must be >= 1")
        changes["repetitions"] = args.repetitions
    if args.out is not None:
        changes["output_dir"] = args.out
    return config.with_overrides(**changes) if changes else config


def _out(args, default="."):
    path = Path(args.out or default)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _rates(text):
    if text is None:
        return DEFAULT_RATE_SET
    try:
        return tuple(float(t) for t in text.split(","))
    except ValueError:
        raise ConfigError(f"--rate-set must be comma-separated numbers, got {text!r}") from None


def _load_split(path):
    path = Path(path)
    try:
        d = json.loads(path.read_text())
    except FileNotFoundError:
        raise FormatError("split file not found", path) from None
    except json.JSONDecodeError as exc:
        raise FormatError(f"invalid JSON: {exc.msg}", path, exc.lineno) from None
    return DatasetSplit.from_dict(d, source=path)


def cmd_gen_synthetic(args):
    seed = args.seed if args.seed is not None else SYNTHETIC_DEFAULTS["seed"]
    graph = generate_sbm(args.num_nodes, args.num_classes, args.intra, args.inter,
                         args.feature_dim, args.feature_signal, seed=seed, noise_std=args.noise_std)
    path = save_bundle(graph, _out(args, "synthetic-bundle"), feature_encoding=args.encoding)
    print(f"wrote bundle {path}: {graph.num_nodes} nodes, {graph.num_edges} edges")


def cmd_split(args):
    _need(args, "bundle")
    graph = load_bundle(args.bundle)
    sizes = [int(s) for s in args.sizes.split(",")] if args.sizes else None
    split = sample_split(graph, args.method, sizes, seed=args.seed or 0)
    path = _out(args) / "split.json"
    atomic_write_text(path, split.to_json() + "\n")
    rows = [{"set": name, "size": len(s)} for name, s in
            zip(("target_train", "target_test", "shadow_train", "shadow_test"), split.sets())]
    _emit(rows, ("set", "size"), args.format)


def _role_sets(split, role):
    return (split.target_train, split.target_test) if role == "target" else \
        (split.shadow_train, split.shadow_test)


def cmd_train(args):
    _need(args, "bundle", "split")
    graph = load_bundle(args.bundle)
    train, test = _role_sets(_load_split(args.split), args.role)
    cfg = preset_config(args.preset, args.gnn_type, seed=args.seed or 0)
    if args.epochs is not None:
        cfg = cfg.replace(epochs=args.epochs)
    train_graph, _ = induced_subgraph(graph, train)
    view, mapping = induced_subgraph(graph, np.concatenate([train, test]))
    model = train_gnn(cfg, train_graph, view, [mapping[int(v)] for v in test])
    path = save_checkpoint(model, _out(args) / f"{args.role}_model")
    print(f"wrote {path}")
    _emit([{"role": args.role, "train_acc": model.train_acc, "test_acc": model.test_acc}],
          ("role", "train_acc", "test_acc"), args.format)


def cmd_extract_features(args):
    _need(args, "bundle", "split", "checkpoint")
    graph = load_bundle(args.bundle)
    split = _load_split(args.split)
    train, test = _role_sets(split, args.role)
    view, mapping = induced_subgraph(graph, np.concatenate([train, test]))
    shadow_view, _ = induced_subgraph(graph, np.concatenate([split.shadow_train, split.shadow_test]))
    extrema = feature_extrema(shadow_view if args.extrema_from == "shadow" else view)
    oracle = as_label_oracle(load_checkpoint(args.checkpoint))
    rate_set = _rates(args.rate_set)
    records = build_attack_dataset(oracle, view, [mapping[int(v)] for v in train],
                                   [mapping[int(v)] for v in test], rate_set=rate_set,
                                   extrema=extrema, seed=args.seed or 0)
    path = _out(args) / f"{args.role}_attack.csv"
    write_records(path, records, rate_set)
    print(f"wrote {path}: {len(records)} rows, {oracle.query_count} label queries")


def _fit_from_table(args):
    _, y, X, rate_set = read_attack_table(args.train_table)
    rng = np.random.default_rng(args.seed or 0)
    held = np.zeros(len(y), dtype=bool)
    for cls in (0, 1):
        idx = rng.permutation(np.flatnonzero(y == cls))
        held[idx[:max(1, int(round(args.holdout_fraction * len(idx))))]] = True
    model = AttackClassifier(epochs=args.epochs, selection=args.selection,
                             random_state=args.seed or 0)
    eval_kwargs = {}
    if args.selection == "evaluate_acc":
        _, ye, Xe, _ = read_attack_table(args.eval_table)
        eval_kwargs = {"X_eval": Xe, "y_eval": ye}
    model.fit(X[~held], y[~held], X[held], y[held], **eval_kwargs)
    return model, rate_set


def cmd_attack(args):
    _need(args, "train_table", "eval_table")
    model, rate_set = _fit_from_table(args)
    nodes, y, X, eval_rates = read_attack_table(args.eval_table)
    if eval_rates != rate_set:
        raise FormatError("rate set differs from the training table", args.eval_table, 1)
    scores = model.predict_proba(X)[:, 1]
    lines = ["node,membership,score"] + [f"{n},{m},{fmt(s)}" for n, m, s in zip(nodes, y, scores)]
    path = _out(args) / "scores.csv"
    atomic_write_text(path, "\n".join(lines) + "\n")
    print(f"wrote {path} (best epoch {model.best_epoch_})")


def _read_scores(path):
    path = Path(path)
    if not path.is_file():
        raise FormatError("scores file not found", path)
    lines = path.read_text().splitlines()
    if not lines or lines[0] != "node,membership,score":
        raise FormatError("expected header 'node,membership,score'", path, 1)
    y, s = [], []
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        try:
            y.append(int(parts[1]))
            s.append(float(parts[2]))
        except (IndexError, ValueError):
            raise FormatError("malformed row", path, lineno) from None
    return np.array(s), np.array(y)


def cmd_evaluate(args):
    _need(args, "scores")
    scores, y = _read_scores(args.scores)
    report = compute_metrics(scores, y, threshold=args.threshold, fpr_target=args.fpr_target)
    atomic_write_text(_out(args) / "metrics.json", json.dumps(report.to_dict(), sort_keys=True) + "\n")
    row = report.to_dict()
    _emit([row], ("accuracy", "precision", "recall", "auc", "f1", "tpr_at_fpr"), args.format)


def cmd_run(args):
    config = _experiment_config(args)
    report = run_experiment(config)
    for r in report.repetitions:
        msg = f"rep {r.index}: {r.status}"
        if r.status == "ok":
            msg += f" acc={r.attack.accuracy:.3f} auc={r.attack.auc:.3f}"
        else:
            msg += f" at {r.stage}: {r.error}"
        print(msg, file=sys.stderr)
    if report.aggregate is None:
        raise _first_failure(report)
    _emit(aggregate_rows(report, config), TABLE_COLUMNS, args.format)


def cmd_defense_grid(args):
    config = _experiment_config(args)
    rows = run_defense_grid(config, gnn_type=args.gnn_type)
    _emit(rows, ("row", *DEFENSE_FLAGS, "acc", "auc", "target_gap", "status"), args.format)


def cmd_relaxation_matrix(args):
    config = _experiment_config(args)
    entries = args.entries.split(",") if args.entries else None
    if entries is not None and any(e not in GNN_TYPES for e in entries):
        raise ConfigError(f"--entries must be drawn from {GNN_TYPES}")
    axis = "gnn_type" if entries is not None else None
    if axis is None and config.relaxation is None:
        raise ConfigError("no relaxation section in the config and no --entries given")
    labels, matrix = run_relaxation_matrix(config, axis=axis, entries=entries)
    rows = [{"target": t, **{s: matrix[i][j] for j, s in enumerate(labels)}}
            for i, t in enumerate(labels)]
    _emit(rows, ("target", *labels), args.format)


def cmd_importance(args):
    _need(args, "train_table", "eval_table")
    model, rate_set = _fit_from_table(args)
    _, y, X, _ = read_attack_table(args.eval_table)
    ranked = permutation_importance(model, X, y, metric=args.metric, repeats=args.repeats,
                                    seed=args.seed or 0, names=feature_names(rate_set))
    rows = [{"feature": n, "importance": v} for n, v in ranked]
    lines = ["feature,importance"] + [f"{r['feature']},{fmt(r['importance'])}" for r in rows]
    atomic_write_text(_out(args) / "importance.csv", "\n".join(lines) + "\n")
    _emit(rows, ("feature", "importance"), args.format)


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config (YAML or JSON)")
    common.add_argument("--seed", type=int, help="base seed")
    common.add_argument("--out", help="output directory")
    common.add_argument("--repetitions", type=int)
    common.add_argument("--format", choices=("csv", "json-lines"), default="csv",
                        help="format of the table printed to stdout")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="labelmia", description="Label-only membership inference "
                                     "against node-classification GNNs.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synthetic", parents=[common], help="write a synthetic SBM bundle")
    p.add_argument("--num-nodes", type=int, default=SYNTHETIC_DEFAULTS["num_nodes"])
    p.add_argument("--num-classes", type=int, default=SYNTHETIC_DEFAULTS["num_classes"])
    p.add_argument("--intra", type=float, default=SYNTHETIC_DEFAULTS["intra_edge_prob"])
    p.add_argument("--inter", type=float, default=SYNTHETIC_DEFAULTS["inter_edge_prob"])
    p.add_argument("--feature-dim", type=int, default=SYNTHETIC_DEFAULTS["feature_dim"])
    p.add_argument("--feature-signal", type=float, default=SYNTHETIC_DEFAULTS["feature_signal"])
    p.add_argument("--noise-std", type=float, default=SYNTHETIC_DEFAULTS["noise_std"])
    p.add_argument("--encoding", choices=("binary_f32", "csv"), default="binary_f32")
    p.set_defaults(func=cmd_gen_synthetic)

    p = sub.add_parser("split", parents=[common], help="sample the four node sets")
    p.add_argument("--bundle")
    p.add_argument("--method", choices=METHODS, default="balanced")
    p.add_argument("--sizes", help="four comma-separated set sizes")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", parents=[common], help="train a target or shadow GNN")
    p.add_argument("--bundle")
    p.add_argument("--split")
    p.add_argument("--role", choices=("target", "shadow"), default="target")
    p.add_argument("--preset", choices=("low", "high"), default="high")
    p.add_argument("--gnn-type", choices=GNN_TYPES, default="GCN")
    p.add_argument("--epochs", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("extract-features", parents=[common], help="query a model for attack features")
    p.add_argument("--bundle")
    p.add_argument("--split")
    p.add_argument("--checkpoint")
    p.add_argument("--role", choices=("target", "shadow"), default="shadow")
    p.add_argument("--rate-set")
    p.add_argument("--extrema-from", choices=("shadow", "target"), default="shadow")
    p.set_defaults(func=cmd_extract_features)

    for name, func, hlp in (("attack", cmd_attack, "train the attack model and score a table"),
                            ("importance", cmd_importance, "permutation feature importance")):
        p = sub.add_parser(name, parents=[common], help=hlp)
        p.add_argument("--train-table", help="shadow attack table")
        p.add_argument("--eval-table", help="target attack table")
        p.add_argument("--selection", choices=SELECTION_STRATEGIES, default="test_acc")
        p.add_argument("--holdout-fraction", type=float, default=0.2)
        p.add_argument("--epochs", type=int, default=300)
        if name == "importance":
            p.add_argument("--metric", choices=("accuracy", "auc"), default="accuracy")
            p.add_argument("--repeats", type=int, default=5)
        p.set_defaults(func=func)

    p = sub.add_parser("evaluate", parents=[common], help="metrics from a scores file")
    p.add_argument("--scores")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--fpr-target", type=float, default=0.1)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("run", parents=[common], help="full experiment from a config file")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("defense-grid", parents=[common], help="16-cell defense grid")
    p.add_argument("--gnn-type", choices=GNN_TYPES)
    p.set_defaults(func=cmd_defense_grid)

    p = sub.add_parser("relaxation-matrix", parents=[common], help="target x shadow mismatch matrix")
    p.add_argument("--entries", help="comma-separated GNN types (overrides the config)")
    p.set_defaults(func=cmd_relaxation_matrix)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (ConfigError, ArgumentError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FormatError as exc:
        print(f"data format error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
