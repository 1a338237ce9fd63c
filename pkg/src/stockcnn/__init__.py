"""Stock movement classification with a from-scratch 1D convolutional network."""

__version__ = "0.1.0"
