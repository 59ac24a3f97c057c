"""Camouflage background synthesis and detection-metric toolkit."""

from ._core import (
    Generator,
    GeneratorSpec,
    add_noise,
    e_measure,
    evaluate_directory,
    expand_dataset,
    feature_matching_loss,
    gan_loss_d,
    gan_loss_g,
    lr_schedule,
    mae,
    preprocess,
    s_measure,
    split_foreground,
    total_generator_loss,
    weighted_f_measure,
)

__all__ = [
    "Generator",
    "GeneratorSpec",
    "add_noise",
    "e_measure",
    "evaluate_directory",
    "expand_dataset",
    "feature_matching_loss",
    "gan_loss_d",
    "gan_loss_g",
    "lr_schedule",
    "mae",
    "preprocess",
    "s_measure",
    "split_foreground",
    "total_generator_loss",
    "weighted_f_measure",
]
