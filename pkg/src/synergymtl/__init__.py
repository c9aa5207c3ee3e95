"""Spatio-temporal similarity multi-task regression for longitudinal progression modelling."""

__version__ = "0.1.0"
