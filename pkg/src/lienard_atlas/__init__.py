"""Global dynamics of the quintic Z2-equivariant Lienard family."""

__version__ = "0.1.0"
