"""Agreement-adaptive ensemble self-training for graph convolutional networks."""

__version__ = "0.1.0"
