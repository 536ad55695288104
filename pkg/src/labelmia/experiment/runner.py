"""Experiment orchestration: repetitions, defense grid and relaxation matrix.

Seed derivation: repetition ``i`` uses ``rep_seed = base_seed + i``; every
stage draws its own seed as ``SeedSequence([rep_seed, stage_code])`` with
the codes in :data:`STAGES`.
"""

from __future__ import annotations

import itertools
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from labelmia.attack.baselines import baseline_matrix
from labelmia.attack.features import build_attack_dataset, records_to_arrays
from labelmia.attack.model import AttackClassifier
from labelmia.attack.table import write_records
from labelmia.data.bundle import load_bundle
from labelmia.data.sampling import feature_extrema, sample_split
from labelmia.data.sbm import generate_sbm
from labelmia.errors import ArgumentError
from labelmia.evaluation import METRIC_NAMES, TABLE_COLUMNS, MetricsReport, aggregate_repetitions, \
    compute_metrics, fmt
from labelmia.experiment.config import DatasetSpec, ExperimentConfig
from labelmia.gnn.checkpoint import save_checkpoint
from labelmia.gnn.model import apply_defenses, preset_config
from labelmia.gnn.training import as_label_oracle, as_posterior_oracle, train_gnn
from labelmia.graph import induced_subgraph
from labelmia.io import atomic_write_text

log = logging.getLogger(__name__)

STAGES = {"split_target": 1, "split_shadow": 2, "train_target": 3, "train_shadow": 4,
          "extract_shadow": 5, "extract_target": 6, "attack_holdout": 7, "attack_model": 8}
DEFENSE_FLAGS = ("normalization", "dropout", "regularization", "jumping_knowledge")
_METRIC_COLUMNS = dict(zip(("acc", "pre", "rec", "auc", "f1", "tpr_at_fpr"), METRIC_NAMES))


def stage_seed(rep_seed: int, stage: str) -> int:
    return int(np.random.SeedSequence([rep_seed, STAGES[stage]]).generate_state(1)[0])


def defense_combinations():
    """The 16 flag tuples: all off, then singles, pairs, triples, all on."""
    rows = []
    for k in range(len(DEFENSE_FLAGS) + 1):
        for combo in itertools.combinations(range(len(DEFENSE_FLAGS)), k):
            rows.append(tuple(i in combo for i in range(len(DEFENSE_FLAGS))))
    return rows


_GRAPH_CACHE: dict = {}


def load_dataset(spec: DatasetSpec):
    key = spec.key()
    if key not in _GRAPH_CACHE:
        if spec.bundle is not None:
            graph = load_bundle(spec.bundle)
        else:
            p = spec.synthetic
            graph = generate_sbm(p["num_nodes"], p["num_classes"], p["intra_edge_prob"],
                                 p["inter_edge_prob"], p["feature_dim"], p["feature_signal"],
                                 seed=p["seed"], noise_std=p["noise_std"])
        _GRAPH_CACHE[key] = graph
    return _GRAPH_CACHE[key]


@dataclass
class RepetitionResult:
    index: int
    seed: int
    status: str = "ok"
    stage: str | None = None
    error: str | None = None
    accuracies: dict = field(default_factory=dict)
    attack: MetricsReport | None = None
    baselines: dict = field(default_factory=dict)
    queries: dict = field(default_factory=dict)
    best_epoch: int | None = None
    oracle_only: bool = False
    exception: BaseException | None = field(default=None, repr=False, compare=False)

    def to_dict(self):
        return {
            "repetition": self.index, "seed": self.seed, "status": self.status,
            "stage": self.stage, "error": self.error, "accuracies": self.accuracies,
            "attack": self.attack.to_dict() if self.attack else None,
            "baselines": {k: v.to_dict() for k, v in self.baselines.items()},
            "queries": self.queries, "best_epoch": self.best_epoch,
            "oracle_only": self.oracle_only,
        }


@dataclass
class RunReport:
    config_echo: str
    fingerprint: str
    repetitions: list
    aggregate: dict | None
    baseline_aggregates: dict
    artifacts: dict = field(default_factory=dict)

    @property
    def succeeded(self):
        return [r for r in self.repetitions if r.status == "ok"]

    @property
    def partial(self) -> bool:
        return len(self.succeeded) < len(self.repetitions)


class _Side:
    """One model owner (target or shadow) within a repetition."""

    def __init__(self, graph, train, test):
        self.graph = graph
        self.train = np.asarray(train)
        self.test = np.asarray(test)
        self.train_graph, _ = induced_subgraph(graph, self.train)
        self.view, mapping = induced_subgraph(graph, np.concatenate([self.train, self.test]))
        self.view_train = np.array([mapping[int(v)] for v in self.train])
        self.view_test = np.array([mapping[int(v)] for v in self.test])
        self.model = None

    def fit(self, gnn_config):
        self.model = train_gnn(gnn_config, self.train_graph, self.view, self.view_test)
        return self.model


def _stratified_holdout(y, fraction, seed):
    rng = np.random.default_rng(seed)
    held = []
    for cls in (1, 0):
        idx = rng.permutation(np.flatnonzero(y == cls))
        held.extend(idx[:max(1, int(round(fraction * len(idx))))])
    mask = np.zeros(len(y), dtype=bool)
    mask[held] = True
    return ~mask, mask


def _fit_attack(config: ExperimentConfig, X, y, keep, held, seed, X_eval=None, y_eval=None):
    a = config.attack
    model = AttackClassifier(hidden_layer_sizes=a.hidden_layer_sizes, learning_rate=a.learning_rate,
                             epochs=a.epochs, batch_size=a.batch_size, selection=a.selection,
                             random_state=seed)
    kwargs = {}
    if a.selection == "evaluate_acc":
        kwargs = {"X_eval": X_eval, "y_eval": y_eval}
    return model.fit(X[keep], y[keep], X[held], y[held], **kwargs)


def _split_graphs(config, rep_seed):
    target_graph = load_dataset(config.target_dataset)
    sizes = config.sampling_sizes
    target_split = sample_split(target_graph, config.sampling_method, sizes,
                                stage_seed(rep_seed, "split_target"))
    if config.shadow_dataset.key() == config.target_dataset.key():
        return target_graph, target_split, target_graph, target_split
    shadow_graph = load_dataset(config.shadow_dataset)
    shadow_split = sample_split(shadow_graph, config.sampling_method, sizes,
                                stage_seed(rep_seed, "split_shadow"))
    return target_graph, target_split, shadow_graph, shadow_split


def run_repetition(config: ExperimentConfig, index: int, artifact_dir: Path | None = None):
    rep_seed = config.base_seed + index
    result = RepetitionResult(index=index, seed=rep_seed)
    fingerprint = config.fingerprint()
    stage = "split"
    try:
        tg, tsplit, sg, ssplit = _split_graphs(config, rep_seed)
        target = _Side(tg, tsplit.target_train, tsplit.target_test)
        shadow = _Side(sg, ssplit.shadow_train, ssplit.shadow_test)

        stage = "train_target"
        target.fit(config.target_model.gnn_config(stage_seed(rep_seed, stage), config.dtype))
        stage = "train_shadow"
        shadow.fit(config.shadow_model.gnn_config(stage_seed(rep_seed, stage), config.dtype))
        for name, side in (("target", target), ("shadow", shadow)):
            result.accuracies[f"{name}_train_acc"] = side.model.train_acc
            result.accuracies[f"{name}_test_acc"] = side.model.test_acc

        stage = "extract_shadow"
        extrema = feature_extrema(shadow.view if config.extrema_source == "shadow" else target.view)
        shadow_oracle = as_label_oracle(shadow.model)
        shadow_records = build_attack_dataset(
            shadow_oracle, shadow.view, shadow.view_train, shadow.view_test,
            rate_set=config.rate_set, extrema=extrema, seed=stage_seed(rep_seed, stage))
        stage = "extract_target"
        target_oracle = as_label_oracle(target.model)
        target_records = build_attack_dataset(
            target_oracle, target.view, target.view_train, target.view_test,
            rate_set=config.rate_set, extrema=extrema, seed=stage_seed(rep_seed, stage))
        result.queries = {"shadow_label_queries": shadow_oracle.query_count,
                          "target_label_queries": target_oracle.query_count,
                          "target_posterior_queries": 0}

        stage = "attack"
        Xs, ys, _ = records_to_arrays(shadow_records)
        Xt, yt, _ = records_to_arrays(target_records)
        keep, held = _stratified_holdout(ys, config.attack.holdout_fraction,
                                         stage_seed(rep_seed, "attack_holdout"))
        attack_seed = stage_seed(rep_seed, "attack_model")
        model = _fit_attack(config, Xs, ys, keep, held, attack_seed, Xt, yt)
        result.best_epoch = model.best_epoch_
        result.oracle_only = model.oracle_only_

        stage = "evaluate"
        result.attack = compute_metrics(model.predict_proba(Xt)[:, 1], yt, fpr_target=config.fpr_target,
                                        seed=rep_seed, config_fingerprint=fingerprint)

        for variant in config.baselines:
            stage = f"baseline_{variant}"
            result.baselines[variant] = _run_baseline(config, variant, shadow, target, keep, held,
                                                      attack_seed, rep_seed, result.queries)

        if artifact_dir is not None:
            stage = "artifacts"
            rep_dir = artifact_dir / f"rep{index:03d}"
            save_checkpoint(target.model, rep_dir / "target_model")
            save_checkpoint(shadow.model, rep_dir / "shadow_model")
            write_records(rep_dir / "shadow_attack.csv", shadow_records, config.rate_set)
            write_records(rep_dir / "target_attack.csv", target_records, config.rate_set)
    except Exception as exc:  # a failed stage aborts only this repetition
        log.warning("repetition %d failed at %s: %s", index, stage, exc)
        result.status, result.stage, result.error = "failed", stage, f"{type(exc).__name__}: {exc}"
        result.exception = exc
    return result


def _baseline_rows(oracle, side, variant):
    if variant == "all_prob":
        # full posterior of each partition graph: members see train, non-members see test
        members = baseline_matrix(oracle, side.train_graph, range(len(side.train)), variant)
        test_graph, _ = induced_subgraph(side.graph, side.test)
        nonmembers = baseline_matrix(oracle, test_graph, range(len(side.test)), variant)
    else:
        members = baseline_matrix(oracle, side.view, side.view_train, variant)
        nonmembers = baseline_matrix(oracle, side.view, side.view_test, variant)
    X = np.vstack([members, nonmembers])
    y = np.concatenate([np.ones(len(members), np.int64), np.zeros(len(nonmembers), np.int64)])
    return X, y


def _run_baseline(config, variant, shadow, target, keep, held, attack_seed, rep_seed, queries):
    shadow_oracle = as_posterior_oracle(shadow.model)
    target_oracle = as_posterior_oracle(target.model)
    Xs, ys = _baseline_rows(shadow_oracle, shadow, variant)
    Xt, yt = _baseline_rows(target_oracle, target, variant)
    model = _fit_attack(config, Xs, ys, keep, held, attack_seed, Xt, yt)
    queries[f"{variant}_target_posterior_queries"] = target_oracle.query_count
    return compute_metrics(model.predict_proba(Xt)[:, 1], yt, fpr_target=config.fpr_target,
                           seed=rep_seed, config_fingerprint=config.fingerprint())


def _mean_accuracies(reps):
    keys = ("target_train_acc", "target_test_acc", "shadow_train_acc", "shadow_test_acc")
    return {k: float(np.mean([r.accuracies[k] for r in reps])) for k in keys}


def _table_row(config, aggregate, accs, first_label=None):
    row = {"dataset": config.target_dataset.name, "gnn": config.target_model.gnn_type,
           "test_acc": accs["target_test_acc"], "train_acc": accs["target_train_acc"]}
    for col, metric in _METRIC_COLUMNS.items():
        row[col] = aggregate["mean"][metric]
    if first_label is not None:
        row = {"method": first_label, **row}
    return row


def _csv(rows, columns):
    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join(fmt(row[c]) if isinstance(row[c], float) else str(row[c])
                              for c in columns))
    return "\n".join(lines) + "\n"


def run_experiment(config: ExperimentConfig, write=True) -> RunReport:
    """Run every repetition and (optionally) write the outputs.

    Files under ``config.output_dir``: ``config.yaml`` (verbatim echo),
    ``reports.jsonl`` (one line per repetition), ``aggregate.csv`` and
    ``aggregate.json``, ``baselines.csv`` when baselines are configured,
    and ``rep###/`` checkpoints and attack tables when ``save_artifacts``.
    """
    # dataset problems are configuration-level: fail before any repetition starts
    load_dataset(config.target_dataset)
    load_dataset(config.shadow_dataset)
    out = Path(config.output_dir)
    artifact_dir = out if (write and config.save_artifacts) else None
    reps = [run_repetition(config, i, artifact_dir) for i in range(config.repetitions)]
    ok = [r for r in reps if r.status == "ok"]
    aggregate, baseline_aggs = None, {}
    if ok:
        aggregate = aggregate_repetitions([r.attack for r in ok])
        aggregate["n_requested"] = config.repetitions
        aggregate["accuracies"] = _mean_accuracies(ok)
        for variant in config.baselines:
            baseline_aggs[variant] = aggregate_repetitions([r.baselines[variant] for r in ok])
    report = RunReport(config_echo=config.raw_text, fingerprint=config.fingerprint(),
                       repetitions=reps, aggregate=aggregate, baseline_aggregates=baseline_aggs)
    if write:
        report.artifacts = write_report(report, config, out)
    return report


def aggregate_rows(report: RunReport, config: ExperimentConfig):
    if report.aggregate is None:
        return []
    return [_table_row(config, report.aggregate, report.aggregate["accuracies"])]


def write_report(report: RunReport, config: ExperimentConfig, out: Path) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    paths = {"config": out / "config.yaml", "reports": out / "reports.jsonl",
             "aggregate_csv": out / "aggregate.csv", "aggregate_json": out / "aggregate.json"}
    atomic_write_text(paths["config"], report.config_echo)
    atomic_write_text(paths["reports"], "".join(
        json.dumps(r.to_dict(), sort_keys=True) + "\n" for r in report.repetitions))
    rows = aggregate_rows(report, config)
    atomic_write_text(paths["aggregate_csv"], _csv(rows, TABLE_COLUMNS))
    summary = {"fingerprint": report.fingerprint, "n_requested": config.repetitions,
               "n_succeeded": len(report.succeeded), "partial": report.partial,
               "attack": report.aggregate, "baselines": report.baseline_aggregates}
    atomic_write_text(paths["aggregate_json"], json.dumps(summary, sort_keys=True, indent=2) + "\n")
    if report.baseline_aggregates:
        accs = report.aggregate["accuracies"]
        brows = [_table_row(config, report.aggregate, accs, "label_only")]
        brows += [_table_row(config, agg, accs, name) for name, agg in report.baseline_aggregates.items()]
        paths["baselines_csv"] = out / "baselines.csv"
        atomic_write_text(paths["baselines_csv"], _csv(brows, ("method", *TABLE_COLUMNS)))
    if config.save_artifacts:
        paths["artifacts"] = out
    return {k: str(v) for k, v in paths.items()}


def _first_failure(report: RunReport):
    for r in report.repetitions:
        if r.status != "ok":
            return r.exception
    return None


def run_defense_grid(config: ExperimentConfig, gnn_type: str | None = None, write=True):
    """One experiment per defense combination on the high-overfit preset.

    Returns a list of 16 row dicts in canonical order. Failed cells carry
    ``status="failed"`` and NaN numbers.
    """
    gnn_type = gnn_type or (config.defense_grid or {}).get("gnn_type", config.target_model.gnn_type)
    out = Path(config.output_dir)
    rows = []
    for i, flags in enumerate(defense_combinations()):
        models = {}
        for side in ("target_model", "shadow_model"):
            spec = getattr(config, side)
            models[side] = type(spec)("high", gnn_type, {**spec.overrides, **_defense_overrides(flags)})
        cell = config.with_overrides(output_dir=str(out / f"cell{i:02d}"), **models)
        report = run_experiment(cell, write=write)
        row = {"row": i, **{name: int(f) for name, f in zip(DEFENSE_FLAGS, flags)}}
        if report.aggregate is not None:
            accs = report.aggregate["accuracies"]
            row.update(status="partial" if report.partial else "ok",
                       acc=report.aggregate["mean"]["accuracy"],
                       auc=report.aggregate["mean"]["auc"],
                       target_gap=accs["target_train_acc"] - accs["target_test_acc"])
        else:
            row.update(status="failed", acc=float("nan"), auc=float("nan"), target_gap=float("nan"))
        rows.append(row)
    if write:
        out.mkdir(parents=True, exist_ok=True)
        columns = ("row", *DEFENSE_FLAGS, "acc", "auc", "target_gap", "status")
        atomic_write_text(out / "defense_grid.csv", _csv(rows, columns))
    return rows


def _defense_overrides(flags):
    cfg = apply_defenses(preset_config("high"), *flags)
    return {k: v for k, v in cfg.to_dict().items()
            if k in ("use_batchnorm", "dropout_rate", "weight_decay", "use_jumping_knowledge")}


def run_relaxation_matrix(config: ExperimentConfig, axis=None, entries=None, write=True):
    """Attack accuracy for every (target setting, shadow setting) pair.

    Returns ``(labels, matrix)``; ``matrix[i][j]`` uses target entry ``i``
    and shadow entry ``j``. Failed cells are NaN.
    """
    relax = config.relaxation or {}
    axis = axis or relax.get("axis")
    entries = entries if entries is not None else relax.get("entries")
    if axis not in ("dataset", "gnn_type") or not entries or len(entries) < 2:
        raise ArgumentError("relaxation needs an axis and at least 2 entries")
    if axis == "dataset":
        labels = [e.name for e in entries]
    else:
        labels = list(entries)
    out = Path(config.output_dir)
    matrix = []
    for i, t in enumerate(entries):
        row = []
        for j, s in enumerate(entries):
            if axis == "dataset":
                changes = {"target_dataset": t, "shadow_dataset": s}
            else:
                changes = {"target_model": type(config.target_model)(config.target_model.preset, t,
                                                                      config.target_model.overrides),
                           "shadow_model": type(config.shadow_model)(config.shadow_model.preset, s,
                                                                      config.shadow_model.overrides)}
            cell = config.with_overrides(output_dir=str(out / f"cell{i}_{j}"), **changes)
            report = run_experiment(cell, write=write)
            row.append(report.aggregate["mean"]["accuracy"] if report.aggregate else float("nan"))
        matrix.append(row)
    if write:
        out.mkdir(parents=True, exist_ok=True)
        lines = [",".join(["target\\shadow", *labels])]
        lines += [",".join([labels[i], *map(fmt, row)]) for i, row in enumerate(matrix)]
        atomic_write_text(out / "relaxation_matrix.csv", "\n".join(lines) + "\n")
    return labels, matrix
