"""Penalized maximum Poisson-likelihood image reconstruction.

The solver minimizes a Poisson negative log-likelihood plus a sparsity
penalty over the nonnegative orthant, by sequential separable quadratic
approximations with Barzilai-Borwein step scales and nonmonotone
acceptance.  Four penalty backends are provided: canonical l1, l1 in an
orthonormal wavelet basis (solved by Lagrangian dual alternation),
anisotropic total variation, and recursive dyadic partitions with an
optional cycle-spun translation-invariant variant.
"""

from .denoise import (
    denoise_canonical_l1,
    denoise_l1_dual,
    denoise_tv,
    tv_seminorm,
)
from .harness import (
    ExperimentConfig,
    MethodSpec,
    initialize,
    make_phantom,
    rmse_percent,
    run_experiment,
    sample_poisson,
)
from .likelihood import PoissonModel
from .operators import (
    LinearMap,
    MatrixMap,
    TomographyModel,
    adjoint_gap,
    build_projector,
    build_tomography,
)
from .rdp import rdp_fit, rdp_ti_fit
from .solver import SolverConfig, SolverResult, SubConfig, run
from .wavelets import OrthoBasis

__version__ = "0.1.0"

__all__ = [
    "LinearMap",
    "MatrixMap",
    "TomographyModel",
    "adjoint_gap",
    "build_projector",
    "build_tomography",
    "OrthoBasis",
    "PoissonModel",
    "denoise_canonical_l1",
    "denoise_l1_dual",
    "denoise_tv",
    "tv_seminorm",
    "rdp_fit",
    "rdp_ti_fit",
    "SolverConfig",
    "SubConfig",
    "SolverResult",
    "run",
    "ExperimentConfig",
    "MethodSpec",
    "make_phantom",
    "sample_poisson",
    "rmse_percent",
    "initialize",
    "run_experiment",
    "__version__",
]
