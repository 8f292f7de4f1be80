"""Topical behavior prediction: topic modeling of activity logs, topical
metrics, topic grids and recurrent / convolutional predictors."""

__version__ = "0.1.0"
