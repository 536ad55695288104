"""Experiment configuration: YAML (or JSON) document, validated up front.

Example::

    name: sbm-gcn
    base_seed: 0
    repetitions: 10
    target:
      dataset: {name: sbm, synthetic: {num_nodes: 800, num_classes: 4, ...}}
      gnn: {preset: high, gnn_type: GCN}
    shadow:            # optional, defaults to the target section
      gnn: {preset: high, gnn_type: GAT, overrides: {epochs: 100}}
    sampling: {method: balanced}
    rate_set: [0.2, 0.4, 0.6, 0.8, 1.0]
    attack: {selection: test_acc, holdout_fraction: 0.2}
    fpr_target: 0.1
    baselines: [hop0, hop2]
    output: {dir: runs/sbm-gcn, save_artifacts: false}
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from labelmia.attack.baselines import VARIANTS
from labelmia.attack.features import DEFAULT_RATE_SET
from labelmia.attack.model import SELECTION_STRATEGIES, AttackMlpConfig
from labelmia.data.sampling import METHODS
from labelmia.errors import ArgumentError, ConfigError
from labelmia.gnn.model import GNN_TYPES, GnnConfig, preset_config
from labelmia.validation import check_rate_set

SYNTHETIC_DEFAULTS = {
    "num_nodes": 800,
    "num_classes": 4,
    "intra_edge_prob": 0.01,
    "inter_edge_prob": 0.002,
    "feature_dim": 512,
    "feature_signal": 0.3,
    "noise_std": 0.15,
    "seed": 0,
}

_TOP_KEYS = {"name", "base_seed", "repetitions", "target", "shadow", "sampling", "rate_set",
             "attack", "fpr_target", "baselines", "extrema_source", "relaxation",
             "defense_grid", "output", "dtype"}


def _require(cond, msg):
    if not cond:
        raise ConfigError(msg)


def _check_keys(section, allowed, where):
    _require(isinstance(section, dict), f"{where} must be a mapping")
    unknown = set(section) - set(allowed)
    _require(not unknown, f"unknown keys in {where}: {sorted(unknown)}")


@dataclass(frozen=True)
class DatasetSpec:
    name: str
    bundle: str | None = None
    synthetic: dict | None = None

    @classmethod
    def parse(cls, d, where, base_dir: Path):
        _check_keys(d, {"name", "bundle", "synthetic"}, where)
        _require(("bundle" in d) != ("synthetic" in d),
                 f"{where} needs exactly one of 'bundle' or 'synthetic'")
        if "bundle" in d:
            _require(isinstance(d["bundle"], str), f"{where}.bundle must be a path string")
            path = Path(d["bundle"])
            if not path.is_absolute():
                path = base_dir / path
            return cls(name=str(d.get("name", path.name)), bundle=str(path))
        syn = d["synthetic"] or {}
        _check_keys(syn, SYNTHETIC_DEFAULTS, f"{where}.synthetic")
        params = {**SYNTHETIC_DEFAULTS, **syn}
        for key in ("num_nodes", "num_classes", "feature_dim", "seed"):
            _require(isinstance(params[key], int), f"{where}.synthetic.{key} must be an integer")
        for key in ("intra_edge_prob", "inter_edge_prob", "feature_signal", "noise_std"):
            _require(isinstance(params[key], (int, float)), f"{where}.synthetic.{key} must be a number")
        _require(0 <= params["inter_edge_prob"] <= params["intra_edge_prob"] <= 1,
                 f"{where}.synthetic needs 0 <= inter_edge_prob <= intra_edge_prob <= 1")
        _require(params["num_classes"] >= 2, f"{where}.synthetic.num_classes must be >= 2")
        return cls(name=str(d.get("name", "sbm")), synthetic=params)

    def key(self):
        return json.dumps({"bundle": self.bundle, "synthetic": self.synthetic}, sort_keys=True)

    def to_dict(self):
        d = {"name": self.name}
        if self.bundle is not None:
            d["bundle"] = self.bundle
        else:
            d["synthetic"] = dict(self.synthetic)
        return d


@dataclass(frozen=True)
class ModelSpec:
    preset: str = "high"
    gnn_type: str = "GCN"
    overrides: dict = field(default_factory=dict)

    @classmethod
    def parse(cls, d, where):
        _check_keys(d, {"preset", "gnn_type", "overrides"}, where)
        preset = d.get("preset", "high")
        gnn_type = d.get("gnn_type", "GCN")
        _require(preset in ("low", "high"), f"{where}.preset must be 'low' or 'high'")
        _require(gnn_type in GNN_TYPES, f"{where}.gnn_type must be one of {GNN_TYPES}")
        overrides = dict(d.get("overrides") or {})
        spec = cls(preset, gnn_type, overrides)
        try:
            spec.gnn_config(0)
        except (ArgumentError, TypeError) as exc:
            raise ConfigError(f"{where}.overrides: {exc}") from exc
        return spec

    def gnn_config(self, seed: int, dtype="float64") -> GnnConfig:
        base = preset_config(self.preset, self.gnn_type, seed=seed).replace(dtype=dtype)
        unknown = set(self.overrides) - set(base.to_dict())
        if unknown:
            raise ArgumentError(f"unknown GnnConfig keys {sorted(unknown)}")
        if "seed" in self.overrides or "gnn_type" in self.overrides:
            raise ArgumentError("seed and gnn_type cannot be overridden")
        return base.replace(**self.overrides)

    def to_dict(self):
        return {"preset": self.preset, "gnn_type": self.gnn_type, "overrides": dict(self.overrides)}


@dataclass(frozen=True)
class AttackSpec:
    hidden_layer_sizes: tuple = (64, 64)
    learning_rate: float = 1e-3
    epochs: int = 300
    batch_size: int = 32
    selection: str = "test_acc"
    holdout_fraction: float = 0.2

    @classmethod
    def parse(cls, d):
        _check_keys(d, cls.__dataclass_fields__, "attack")
        spec = cls(**{**d, "hidden_layer_sizes": tuple(d.get("hidden_layer_sizes", (64, 64)))})
        _require(spec.selection in SELECTION_STRATEGIES,
                 f"attack.selection must be one of {SELECTION_STRATEGIES}")
        _require(0 < spec.holdout_fraction < 1, "attack.holdout_fraction must lie in (0, 1)")
        _require(all(isinstance(h, int) and h > 0 for h in spec.hidden_layer_sizes),
                 "attack.hidden_layer_sizes must be positive integers")
        try:
            spec.mlp_config(0)
        except ArgumentError as exc:
            raise ConfigError(f"attack: {exc}") from exc
        return spec

    def mlp_config(self, seed) -> AttackMlpConfig:
        return AttackMlpConfig(self.hidden_layer_sizes, self.learning_rate, self.epochs,
                               self.batch_size, seed)

    def to_dict(self):
        return {"hidden_layer_sizes": list(self.hidden_layer_sizes),
                "learning_rate": self.learning_rate, "epochs": self.epochs,
                "batch_size": self.batch_size, "selection": self.selection,
                "holdout_fraction": self.holdout_fraction}


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    base_seed: int
    repetitions: int
    target_dataset: DatasetSpec
    shadow_dataset: DatasetSpec
    target_model: ModelSpec
    shadow_model: ModelSpec
    sampling_method: str = "balanced"
    sampling_sizes: tuple | None = None
    rate_set: tuple = DEFAULT_RATE_SET
    attack: AttackSpec = AttackSpec()
    fpr_target: float = 0.1
    baselines: tuple = ()
    extrema_source: str = "shadow"
    relaxation: dict | None = None
    defense_grid: dict | None = None
    output_dir: str = "labelmia-out"
    save_artifacts: bool = False
    dtype: str = "float64"
    raw_text: str = ""

    def with_overrides(self, **changes) -> "ExperimentConfig":
        d = dict(self.__dict__)
        d.update(changes)
        return ExperimentConfig(**d)

    def to_dict(self) -> dict:
        return {
            "name": self.name, "base_seed": self.base_seed, "repetitions": self.repetitions,
            "target": {"dataset": self.target_dataset.to_dict(), "gnn": self.target_model.to_dict()},
            "shadow": {"dataset": self.shadow_dataset.to_dict(), "gnn": self.shadow_model.to_dict()},
            "sampling": {"method": self.sampling_method,
                         "sizes": list(self.sampling_sizes) if self.sampling_sizes else None},
            "rate_set": list(self.rate_set), "attack": self.attack.to_dict(),
            "fpr_target": self.fpr_target, "baselines": list(self.baselines),
            "extrema_source": self.extrema_source, "dtype": self.dtype,
        }

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def parse_config(d: dict, base_dir=".", raw_text="") -> ExperimentConfig:
    base_dir = Path(base_dir)
    _check_keys(d, _TOP_KEYS, "config")
    d = copy.deepcopy(d)
    _require("target" in d, "config needs a 'target' section")
    target = d["target"]
    _check_keys(target, {"dataset", "gnn"}, "target")
    _require("dataset" in target, "target.dataset is required")
    target_ds = DatasetSpec.parse(target["dataset"], "target.dataset", base_dir)
    target_model = ModelSpec.parse(target.get("gnn", {}), "target.gnn")
    shadow = d.get("shadow") or {}
    _check_keys(shadow, {"dataset", "gnn"}, "shadow")
    shadow_ds = (DatasetSpec.parse(shadow["dataset"], "shadow.dataset", base_dir)
                 if "dataset" in shadow else target_ds)
    shadow_model = (ModelSpec.parse(shadow["gnn"], "shadow.gnn") if "gnn" in shadow
                    else target_model)

    base_seed = d.get("base_seed", 0)
    _require(isinstance(base_seed, int) and base_seed >= 0, "base_seed must be a non-negative integer")
    reps = d.get("repetitions", 10)
    _require(isinstance(reps, int) and reps >= 1, "repetitions must be an integer >= 1")

    sampling = d.get("sampling") or {}
    _check_keys(sampling, {"method", "sizes"}, "sampling")
    method = sampling.get("method", "balanced")
    _require(method in METHODS, f"sampling.method must be one of {METHODS}")
    sizes = sampling.get("sizes")
    if sizes is not None:
        _require(isinstance(sizes, list) and len(sizes) == 4
                 and all(isinstance(s, int) and s > 0 for s in sizes),
                 "sampling.sizes must be four positive integers")
        sizes = tuple(sizes)

    try:
        rate_set = check_rate_set(d.get("rate_set", DEFAULT_RATE_SET))
    except (ArgumentError, TypeError) as exc:
        raise ConfigError(f"rate_set: {exc}") from exc
    attack = AttackSpec.parse(d.get("attack") or {})
    fpr = d.get("fpr_target", 0.1)
    _require(isinstance(fpr, (int, float)) and 0 < fpr < 1, "fpr_target must lie in (0, 1)")
    baselines = tuple(d.get("baselines") or ())
    _require(all(b in VARIANTS for b in baselines), f"baselines must be drawn from {VARIANTS}")
    _require(len(set(baselines)) == len(baselines), "baselines must not repeat")
    extrema = d.get("extrema_source", "shadow")
    _require(extrema in ("shadow", "target"), "extrema_source must be 'shadow' or 'target'")
    dtype = d.get("dtype", "float64")
    _require(dtype in ("float64", "float32"), "dtype must be float64 or float32")

    relaxation = d.get("relaxation")
    if relaxation is not None:
        _check_keys(relaxation, {"axis", "entries"}, "relaxation")
        axis = relaxation.get("axis")
        entries = relaxation.get("entries")
        _require(axis in ("dataset", "gnn_type"), "relaxation.axis must be 'dataset' or 'gnn_type'")
        _require(isinstance(entries, list) and len(entries) >= 2,
                 "relaxation.entries needs at least 2 entries")
        if axis == "gnn_type":
            _require(all(e in GNN_TYPES for e in entries), f"relaxation entries must be in {GNN_TYPES}")
        else:
            entries = [DatasetSpec.parse(e, f"relaxation.entries[{i}]", base_dir)
                       for i, e in enumerate(entries)]
        relaxation = {"axis": axis, "entries": entries}

    grid = d.get("defense_grid")
    if grid is not None:
        _check_keys(grid, {"gnn_type"}, "defense_grid")
        _require(grid.get("gnn_type", target_model.gnn_type) in GNN_TYPES,
                 "defense_grid.gnn_type must be a known GNN type")

    output = d.get("output") or {}
    _check_keys(output, {"dir", "save_artifacts"}, "output")
    out_dir = output.get("dir", "labelmia-out")
    _require(isinstance(out_dir, str), "output.dir must be a string")
    return ExperimentConfig(
        name=str(d.get("name", "experiment")), base_seed=base_seed, repetitions=reps,
        target_dataset=target_ds, shadow_dataset=shadow_ds, target_model=target_model,
        shadow_model=shadow_model, sampling_method=method, sampling_sizes=sizes,
        rate_set=rate_set, attack=attack, fpr_target=float(fpr), baselines=baselines,
        extrema_source=extrema, relaxation=relaxation, defense_grid=grid, output_dir=out_dir,
        save_artifacts=bool(output.get("save_artifacts", False)), dtype=dtype, raw_text=raw_text)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    try:
        d = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
    _require(isinstance(d, dict), f"{path}: top level must be a mapping")
    return parse_config(d, base_dir=path.parent, raw_text=text)
