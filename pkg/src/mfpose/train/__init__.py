from mfpose.train.engine import (TrainConfig, TrainResult, build_model, evaluate, evaluate_heatmaps,
                                 evaluate_model, load_checkpoint, model_from_checkpoint, overfit, predict,
                                 save_checkpoint, train, with_ablation)
from mfpose.train.optim import AdamW, step_lr

__all__ = ["AdamW", "TrainConfig", "TrainResult", "build_model", "evaluate", "evaluate_heatmaps",
           "evaluate_model", "load_checkpoint", "model_from_checkpoint", "overfit", "predict",
           "save_checkpoint", "step_lr", "train", "with_ablation"]
