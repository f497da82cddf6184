"""Marked Galton-Watson trees: penalization martingales, tilted samplers and exact oracles."""

from .laws import MarkedGWLaw, load_law, validate_law
from .tree import MarkedTree, build_tree, compute_masses, generation_stats, restrict

__all__ = [
    "MarkedGWLaw",
    "MarkedTree",
    "build_tree",
    "compute_masses",
    "generation_stats",
    "load_law",
    "restrict",
    "validate_law",
]
__version__ = "0.1.0"
