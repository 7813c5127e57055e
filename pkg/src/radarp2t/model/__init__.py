"""Sparse-encoder / dense-decoder conditional adversarial model."""

from .layers import SparseTensor
from .losses import LossWeights, loss_cgan, loss_l1, loss_perceptual, loss_total
from .network import Discriminator, DiscriminatorSpec, Generator, GeneratorSpec, ScaleOutput, sparse_input
from .train import Adam, TrainConfig, Trainer, backward_and_step, discriminator_objective, generator_objective

__all__ = [
    "Adam",
    "Discriminator",
    "DiscriminatorSpec",
    "Generator",
    "GeneratorSpec",
    "LossWeights",
    "ScaleOutput",
    "SparseTensor",
    "TrainConfig",
    "Trainer",
    "backward_and_step",
    "discriminator_objective",
    "generator_objective",
    "loss_cgan",
    "loss_l1",
    "loss_perceptual",
    "loss_total",
    "sparse_input",
]
