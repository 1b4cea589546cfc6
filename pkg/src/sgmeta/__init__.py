"""Meta-learned best-response models for leader-follower trajectory guidance."""

__version__ = "0.1.0"
