"""Graph bundles, synthetic SBM graphs and node sampling."""

from labelmia.data.bundle import load_bundle, save_bundle
from labelmia.data.sampling import METHODS, SET_NAMES, DatasetSplit, feature_extrema, sample_split
from labelmia.data.sbm import generate_sbm, homophily

__all__ = [
    "METHODS", "SET_NAMES", "DatasetSplit", "feature_extrema", "generate_sbm", "homophily",
    "load_bundle", "sample_split", "save_bundle",
]
