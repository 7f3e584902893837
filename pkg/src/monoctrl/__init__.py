"""Controllability lab for the 1D monodomain equations with a moving control support."""
from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:
    __version__ = "0.1.0"
