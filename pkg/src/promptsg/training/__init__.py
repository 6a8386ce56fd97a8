from .episode import EpisodePlan, episode_forward, plan_episode
from .losses import LOSS_TERMS, LossWeights, StepPredictions, dice_loss, hard_mask_iou, total_loss
from .loop import TrainConfig, TrainResult, cosine_lr, parse_train_config, train
from .matching import MatchResult, build_cost_matrix, hungarian_match, match_cost
from .points import distance_weights, sample_gt_point, sample_uniform_point, tight_box

__all__ = [
    "EpisodePlan",
    "LossWeights",
    "LOSS_TERMS",
    "MatchResult",
    "StepPredictions",
    "TrainConfig",
    "TrainResult",
    "build_cost_matrix",
    "cosine_lr",
    "dice_loss",
    "distance_weights",
    "episode_forward",
    "hard_mask_iou",
    "hungarian_match",
    "match_cost",
    "parse_train_config",
    "plan_episode",
    "sample_gt_point",
    "sample_uniform_point",
    "tight_box",
    "total_loss",
    "train",
]
