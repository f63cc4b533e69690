"""multibc: a numerical laboratory for orbit hitting statistics.

Empirical verification of quantitative recurrence phenomena for expanding
circle maps and toral translations: Poisson and mixed-Poisson limit laws for
hit and return counts of shrinking targets, log-law asymptotics for r-fold
nearest returns, iterated-logarithm corrections for Gibbs ball measures, and
Khintchine-Groshev style counting of Diophantine solutions checked against
lattice-space moment identities.
"""

__version__ = "0.1.0"

from .precision import (
    DEFAULT_POLICY,
    PrecisionError,
    PrecisionPolicy,
    SeededRng,
    TorusPoint,
    make_point,
    torus_distance,
    uniform_point,
)

__all__ = [
    "DEFAULT_POLICY",
    "PrecisionError",
    "PrecisionPolicy",
    "SeededRng",
    "TorusPoint",
    "make_point",
    "torus_distance",
    "uniform_point",
    "__version__",
]
