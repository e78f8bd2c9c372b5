"""Reference scorer service for the mbrkit wire protocol."""

from .backends import ScorerBackend, StandinBackend, load_backend

__version__ = "0.1.0"

__all__ = ["ScorerBackend", "StandinBackend", "load_backend", "__version__"]
