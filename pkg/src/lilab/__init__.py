"""Monte-Carlo verification lab for LIL-scale limit theorems of stationary processes.

Finite-dimensional norm spaces, declarative stationary process families with
reproducible counter-based simulation, projection/martingale-approximation
machinery, transfer-operator condition checks, and limit-theorem statistics
with oracle-backed acceptance tests.
"""

from lilab.spaces import NormSpec, CovarianceOperator, norm, smoothness_defect, dual_ball_sup
from lilab.limits import log_plus

__version__ = "0.1.0"

__all__ = [
    "NormSpec",
    "CovarianceOperator",
    "norm",
    "smoothness_defect",
    "dual_ball_sup",
    "log_plus",
    "__version__",
]
