"""Toolkit for estimating OOD performance of model ensembles from
prediction logs, via agreement-based line fitting plus confidence
baselines, with a synthetic ensemble generator for desk-scale validation."""

__version__ = "0.1.0"

from .errors import ToolkitError  # noqa: F401
