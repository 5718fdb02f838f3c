"""Thermodynamic-formalism numerics on subshifts of finite type."""

__version__ = "0.1.0"
