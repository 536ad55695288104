"""Label-only attack features, the attack classifier and baselines."""

from labelmia.attack.baselines import VARIANTS, baseline_features, baseline_matrix
from labelmia.attack.features import (
    DEFAULT_RATE_SET,
    SCHEMA_VERSION,
    AttackFeatureVector,
    AttackRecord,
    build_attack_dataset,
    extract_attack_features,
    feature_names,
    queries_per_node,
    records_to_arrays,
)
from labelmia.attack.model import (
    SELECTION_STRATEGIES,
    AttackClassifier,
    AttackMlpConfig,
    train_attack_model,
)
from labelmia.attack.table import read_attack_table, write_attack_table, write_records

__all__ = [
    "DEFAULT_RATE_SET", "SCHEMA_VERSION", "SELECTION_STRATEGIES", "VARIANTS",
    "AttackClassifier", "AttackFeatureVector", "AttackMlpConfig", "AttackRecord",
    "baseline_features", "baseline_matrix", "build_attack_dataset", "extract_attack_features",
    "feature_names", "queries_per_node", "read_attack_table", "records_to_arrays",
    "train_attack_model", "write_attack_table", "write_records",
]
