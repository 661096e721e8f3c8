"""Bearing condition monitoring: an offline-trained compressed-feature
encoder feeding a one-class online-sequential extreme learning machine with
an adaptive, data-calibrated anomaly threshold."""

__version__ = "0.1.0"
