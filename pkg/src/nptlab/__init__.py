"""Neural-collapse-anchored prompt tuning on a toy frozen dual encoder."""
from .data import (ClassSplit, Dataset, GeneratorConfig, ImbalanceProfile, anchor_directions,
                   base_novel_split, class_directions, generate_dataset, imbalance_profile)
from .experiment import ExperimentConfig, ExperimentReport, emit_plots, run_base_to_novel, run_sweep
from .geometry import EtfFrame, build_etf, etf_target_gram, gram_distance, random_partial_rotation
from .losses import (Batch, LossWeights, RepGradients, grad_check, loss_clip, loss_lc, loss_mi,
                     lc_gradient, loss_total, param_gradients, rep_gradients)
from .metrics import (CollapseReport, class_prototypes, classifier_collapse_nc3, collapse_report,
                      delta_lcd, delta_mid, feature_collapse_nc1, prototype_collapse_nc2)
from .model import (ModelConfig, ModelParams, encode_image, encode_text, init_model, load_checkpoint,
                    predict_probs, save_checkpoint)
from .train import TrainConfig, Trajectory, evaluate, harmonic_mean, train

__version__ = "0.1.0"
