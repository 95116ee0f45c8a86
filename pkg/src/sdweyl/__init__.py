"""Numerical certification of self-dual Weyl eigenform identities on 4D metrics."""

__version__ = "0.1.0"
