"""evanskit: spectral and time-domain stability toolkit for radiative shocks.

Subpackages are imported lazily; the commonly used entry points are
re-exported here.
"""

from importlib import import_module

__version__ = "0.1.0"

_SUBMODULES = (
    "models",
    "hypotheses",
    "profile",
    "kernel",
    "spectral_ode",
    "evans",
    "resolvent",
    "evolution",
    "cli",
    "errors",
)

__all__ = list(_SUBMODULES) + ["__version__"]


def __getattr__(name):
    if name in _SUBMODULES:
        return import_module(f".{name}", __name__)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
