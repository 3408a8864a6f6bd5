"""Selected inversion of sparse symmetric matrices."""

__version__ = "0.1.0"
