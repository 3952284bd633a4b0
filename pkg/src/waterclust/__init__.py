"""Mixed-type exemplar clustering of community water-access records.

Gower dissimilarity feeds a damped affinity propagation; clusters are then
explained with a CART tree and mapped onto expert priority levels.
"""

from waterclust.affinity import ClusterResult, run_ap
from waterclust.cart import DecisionRule, build_tree, extract_rules, rank_attributes
from waterclust.data import (
    Attribute,
    AttributeSchema,
    Dataset,
    Record,
    encode_categorical,
    load_dataset,
    normalize_and_filter,
    partition_by,
)
from waterclust.errors import ConfigError, InputError, ParseError, SchemaError
from waterclust.evaluation import damping_sweep, silhouette_global
from waterclust.gower import gower_matrix, to_similarity
from waterclust.priority import assign_priorities, load_rules, profile_clusters

__version__ = "0.1.0"

__all__ = [
    "Attribute",
    "AttributeSchema",
    "ClusterResult",
    "ConfigError",
    "Dataset",
    "DecisionRule",
    "InputError",
    "ParseError",
    "Record",
    "SchemaError",
    "assign_priorities",
    "build_tree",
    "damping_sweep",
    "encode_categorical",
    "extract_rules",
    "gower_matrix",
    "load_dataset",
    "load_rules",
    "normalize_and_filter",
    "partition_by",
    "profile_clusters",
    "rank_attributes",
    "run_ap",
    "silhouette_global",
    "to_similarity",
]
