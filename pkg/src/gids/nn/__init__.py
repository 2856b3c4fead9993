"""Small numpy neural-network kernel: dense and transposed-conv layers, BCE, Adam."""

from .gradcheck import check_network, numeric_grad, rel_error
from .layers import Act, Crop, Deconv2d, Dense, Reshape
from .losses import bce_loss
from .model import NOISE_DIM, ArchTag, Network, build_discriminator, build_generator
from .optim import AdamState, adam_step
from .serialize import load_weights, load_weights_file, save_weights, save_weights_file

__all__ = [
    "Act", "AdamState", "ArchTag", "Crop", "Deconv2d", "Dense", "NOISE_DIM", "Network", "Reshape",
    "adam_step", "bce_loss", "build_discriminator", "build_generator", "check_network",
    "load_weights", "load_weights_file", "numeric_grad", "rel_error", "save_weights",
    "save_weights_file",
]
