"""Isothermal multicomponent mixtures and their low Mach-number limit in 1D."""
from ._jit import USE_NUMBA
from .thermo import MixtureSpec, ThermoFamily, default_spec

__all__ = ["MixtureSpec", "ThermoFamily", "default_spec", "USE_NUMBA"]
__version__ = "0.1.0"
