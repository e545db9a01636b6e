"""Fractional variational Bayes with TVB calibration of credible intervals."""

__version__ = "0.1.0"
