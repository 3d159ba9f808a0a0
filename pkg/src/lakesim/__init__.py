"""lakesim: viscous and inviscid lake-flow simulation over vanishing depth."""

__version__ = "0.1.0"
