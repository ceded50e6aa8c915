"""GAN trainer for low-resolution CT-like image synthesis.

The package is self-contained: a tape-based reverse-mode autodiff core
(`ctgen.autodiff`, `ctgen.ops`) with compiled gather/scatter kernels and a
pure-NumPy fallback (`ctgen.kernels`), RMSProp/Adam optimizers
(`ctgen.optim`), the two reference architectures and the adversarial
objective (`ctgen.model`), the training loop with bit-exact checkpointing
(`ctgen.train`, `ctgen.checkpoint`), and the image pipeline (`ctgen.data`).
"""

__version__ = "0.1.0"

from ctgen.autodiff import Evaluator, Node, Parameter, Tape
from ctgen.model import (
    GanConfig,
    build_discriminator,
    build_generator,
    d_loss,
    g_loss,
    gan_value,
    sample_noise,
)
from ctgen.train import TrainState, init_train_state, train, train_step

__all__ = [
    "Evaluator",
    "GanConfig",
    "Node",
    "Parameter",
    "Tape",
    "TrainState",
    "build_discriminator",
    "build_generator",
    "d_loss",
    "g_loss",
    "gan_value",
    "init_train_state",
    "sample_noise",
    "train",
    "train_step",
]
