"""Numerical checks for the gauge-adjusted Bach flow near constant-curvature metrics.

Submodules
----------
model_spaces
    Flat tori, hyperbolic slabs and sphere charts on finite-difference grids.
tensor_fields
    Covariant calculus for tensor fields on those grids.
curvature
    Curvature of a metric field, the Bach tensor and the flow's right-hand side.
linearized
    The linearized operator, its adjoint and the linearization oracles.
decomposition
    Trace / image-of-K / transverse-traceless splitting.
spectral
    Spectral facts, integral identities and Rayleigh-quotient sampling.
indicial
    Indicial roots of the operator at the conformal boundary.
flow
    Linear and nonlinear time stepping with diagnostics.
cli
    The ``bachflow`` experiment runner.
"""
import os as _os

_threads = _os.environ.get("BACHFLOW_THREADS")
if _threads and _threads.isdigit() and int(_threads) > 0:
    # cap BLAS pools before numpy loads them
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ.setdefault(_var, _threads)

__version__ = "0.1.0"

from .curvature import GaugeParams, MetricField, bach_tensor, flow_rhs  # noqa: E402
from .linearized import apply_L, apply_L_general, quadratic_form  # noqa: E402
from .model_spaces import make_model  # noqa: E402
from .tensor_fields import TensorField  # noqa: E402

__all__ = [
    "GaugeParams",
    "MetricField",
    "TensorField",
    "__version__",
    "apply_L",
    "apply_L_general",
    "bach_tensor",
    "flow_rhs",
    "make_model",
    "quadratic_form",
]
