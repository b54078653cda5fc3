"""Higher-level patterns built from map and the storage services"""
from wrenlet.patterns.gather import featurize_and_fit, gather_reduce
from wrenlet.patterns.layout import Medium, ShuffleLayout
from wrenlet.patterns.paramserver import SgdModel, hogwild_sgd
from wrenlet.patterns.sort import RangePartition, sample_boundaries, terasort
from wrenlet.patterns.wordcount import word_count

__all__ = [
    "Medium",
    "RangePartition",
    "SgdModel",
    "ShuffleLayout",
    "featurize_and_fit",
    "gather_reduce",
    "hogwild_sgd",
    "sample_boundaries",
    "terasort",
    "word_count",
]
