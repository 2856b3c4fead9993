"""GAN-based intrusion detection for CAN bus traffic."""

__version__ = "0.1.0"
