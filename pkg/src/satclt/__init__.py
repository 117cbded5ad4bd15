"""Random 2-SAT solution counts: generation, pruning, exact counting,
belief propagation on Galton-Watson trees and population dynamics."""
from __future__ import annotations

__version__ = "0.1.0"
