"""Supervised hashing toolkit: two-step training (graph-cut binary code
inference, then boosted-tree hash functions) with Hamming-ranking evaluation.
"""

from .boost import (
    BoostedHash,
    LinearHash,
    Stump,
    Tree,
    eval_hash,
    train_boosted_hash,
    train_linear_hash,
    train_stump,
    train_tree,
)
from .core import (
    BitMatrix,
    FeatureMatrix,
    QuantizedFeatures,
    SimilarityGraph,
    hamming_affinity,
    hamming_distance,
    quantize,
)
from .datasets import Dataset, build_similarity, gaussian_clusters, lsh_codes, xor_clusters
from .evalkit import (
    Ranking,
    RelevanceOracle,
    knn_classify,
    mean_average_precision,
    precision_at_k,
    precision_recall_auc,
    rank,
    retrieval_metrics,
)
from .inference import (
    BlockCover,
    BqpInstance,
    PairStates,
    block_graphcut_bit,
    brute_force_bqp,
    build_blocks,
    icm_bit,
    spectral_bit,
)
from .loss import LossKind, PairState, bit_loss_terms, loss_value, pair_coefficient
from .maxflow import CutGraph, EnergyInstance, max_flow, minimize_energy, reduce_energy_to_cut
from .trainer import (
    HashModel,
    InferenceMethod,
    LearnerKind,
    TrainConfig,
    TrainResult,
    encode,
    load,
    save,
    train,
)

__version__ = "0.1.0"
