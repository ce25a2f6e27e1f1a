"""Contrastive meta-learning for few-shot node classification.

Nodes are represented by their top-K personalized-PageRank subgraphs,
encoded by a one-layer GCN into two views (central node and mean pool).
Meta-training alternates a contrastive adaptation step over the support
set, optionally augmented with similarity-sensitive subgraph mix-up, with
an Adam cross-entropy step over the query set. Meta-testing fits a fresh
logistic-regression head per task against the frozen encoder.
"""

from ._kernels import USING_EXT
from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig, build_run_config
from .contrastive import (ClassBank, ViewGradients, bank_from_view_pairs,
                          contrastive_loss, mi_term, node_loss)
from .encoder import (AdamState, ForwardCache, ModelParams, ViewPair,
                      adam_step, backward_from_views, encode_views,
                      encoder_backward, finite_diff_check, gcn_forward,
                      init_params, views)
from .episodes import MetaTask, sample_meta_task
from .errors import (CheckpointError, ConfigError, ConvergenceError,
                     CosmicError, DatasetFormatError, InfeasibleTaskError,
                     NonFiniteError, SplitError)
from .evaluate import (EvalSummary, TaskClassifier, clustering_quality,
                       evaluate, export_embeddings, fit_task_classifier,
                       predict_labels)
from .graph import (ClassSplit, Graph, column_normalize, gcn_normalize,
                    generate_planted_partition, graph_from_edges,
                    load_class_split, load_graph)
from .mixup import (MixedSubgraph, MixupConfig, bhattacharyya_alpha,
                    build_mixed_classes, mix_subgraphs,
                    sample_ratio_matrices)
from .ppr import (PPRIndex, Subgraph, SubgraphExtractor, compute_ppr,
                  extract_neighborhood, induce_subgraph)
from .seeding import substream
from .trainer import (EpisodeBatch, EpisodeReport, TrainConfig, ce_loss,
                      inner_update, outer_update, train)

__version__ = "0.1.0"

__all__ = [
    "AdamState", "CheckpointError", "ClassBank", "ClassSplit", "ConfigError",
    "ConvergenceError", "CosmicError", "DatasetFormatError", "EpisodeBatch",
    "EpisodeReport", "EvalSummary", "ForwardCache", "Graph",
    "InfeasibleTaskError", "MetaTask", "MixedSubgraph", "MixupConfig",
    "ModelParams", "NonFiniteError", "PPRIndex", "RunConfig", "SplitError",
    "Subgraph", "SubgraphExtractor", "TaskClassifier", "TrainConfig",
    "USING_EXT", "ViewGradients", "ViewPair", "adam_step",
    "backward_from_views", "bank_from_view_pairs", "bhattacharyya_alpha",
    "build_mixed_classes", "build_run_config", "ce_loss",
    "clustering_quality", "column_normalize", "compute_ppr",
    "contrastive_loss", "encode_views", "encoder_backward", "evaluate",
    "export_embeddings", "extract_neighborhood", "finite_diff_check",
    "fit_task_classifier", "gcn_forward", "gcn_normalize",
    "generate_planted_partition", "graph_from_edges", "induce_subgraph",
    "init_params", "inner_update", "load_checkpoint", "load_class_split",
    "load_graph", "mi_term", "mix_subgraphs", "node_loss", "outer_update",
    "predict_labels", "sample_meta_task", "sample_ratio_matrices",
    "save_checkpoint", "substream", "train", "views",
]
