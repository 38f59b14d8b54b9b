"""Cloud/sky segmentation with GAN-augmented training data.

Pipeline: train a small GAN on night-sky difference images (with 16-fold
geometric augmentation), estimate binary maps for its samples by clustering
and smoothing, keep the samples that do not hurt validation fit, and compare
segmentation regressors trained with and without them.
"""

from .augment import denormalize, normalize, sixteen_fold
from .dataio import (DataError, extract_rb, load_image_file, load_map_file,
                     load_rgb_file, save_image_file, save_map_file,
                     split_dataset, synth_dataset)
from .evalmetrics import (confusion, evaluate_model, optimal_threshold, prf,
                          roc_curve)
from .filtering import baseline, evaluate_candidate, filter_candidates
from .gan import TrainConfig, bce_loss, forward_discriminator, forward_generator, sample, train_gan
from .nets import DiscriminatorNet, GeneratorNet
from .pls import PlsModel, fit_pls2, predict, r2_score, sweep_ncomp
from .pseudolabel import (Candidate, ClusterConfig, SmoothConfig,
                          kmeans_pixels, make_candidates, smooth_map)

__version__ = "0.1.0"

__all__ = [
    "Candidate", "ClusterConfig", "DataError", "DiscriminatorNet",
    "GeneratorNet", "PlsModel", "SmoothConfig", "TrainConfig", "baseline",
    "bce_loss", "confusion", "denormalize", "evaluate_candidate",
    "evaluate_model", "extract_rb", "filter_candidates", "fit_pls2",
    "forward_discriminator", "forward_generator", "kmeans_pixels",
    "load_image_file", "load_map_file", "load_rgb_file", "make_candidates",
    "normalize", "optimal_threshold", "predict", "prf", "r2_score",
    "roc_curve", "sample", "save_image_file", "save_map_file",
    "sixteen_fold", "smooth_map", "split_dataset", "sweep_ncomp",
    "synth_dataset", "train_gan",
]
