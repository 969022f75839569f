"""Sound event detection with a multi-grained attention network, on a numpy autograd engine."""

__version__ = "0.1.0"
