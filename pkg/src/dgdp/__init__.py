"""High-precision f-DP accountant for discrete Gaussian mechanisms.

Computes tight trade-off curves and (eps, delta) privacy profiles for
i.i.d. and heterogeneous compositions of discrete Gaussian noise, inverts
budgets to noise scales, and certifies every output with an explicit error
ledger.  Importing the package fixes the process-wide working precision
(ACCOUNTANT_PRECISION or 80 decimal digits); call
``hp.configure_precision`` before any computation to change it.
"""

from . import census, dgauss, figures, hp, iid, inid, sim, tradeoff, zcdp
from .dgauss import DiscreteGaussian, DiscreteGaussianSampler
from .hp import BooleQuadratureSpec, configure_precision, precision
from .iid import ErrorLedger, IidCompositionSpec, ResidualBound
from .inid import AllocationConfig
from .tradeoff import TradeoffCurve

__all__ = [
    "AllocationConfig",
    "BooleQuadratureSpec",
    "DiscreteGaussian",
    "DiscreteGaussianSampler",
    "ErrorLedger",
    "IidCompositionSpec",
    "ResidualBound",
    "TradeoffCurve",
    "census",
    "configure_precision",
    "dgauss",
    "figures",
    "hp",
    "iid",
    "inid",
    "precision",
    "sim",
    "tradeoff",
    "zcdp",
]

configure_precision()
