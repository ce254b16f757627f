"""Label assignment toolkit for anchor-based lane detection."""
from .lane import IoUParams, Lane, RowGrid, lane_iou, line_iou, resample
from .cost import CostWeights, classical_cost, focal_cost, pair_loss
from .assign import (
    AssignerConfig,
    ClassicalAssigner,
    MatchNetAssigner,
    assign_classical,
    assign_matchnet,
    balance_sample,
    dynamic_k,
    make_targets,
)
from .matchnet import MatchNetClassifier, MlpModel, PairFeaturizer, TrainConfig, train
from .evaluate import EvalConfig, evaluate_dataset, f1_score, match_image

__version__ = "0.1.0"
