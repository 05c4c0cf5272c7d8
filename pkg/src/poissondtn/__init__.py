"""Poisson kernels, Poisson semigroups and Dirichlet-to-Normal maps for constant-coefficient
strongly elliptic second-order systems in the upper half-space."""

from .elliptic import (
    CoefficientTensor,
    EllipticSystem,
    check_symbol_conditions,
    conormal_residual,
    ellipticity_constant,
    laplacian,
    make_lame_system,
    make_scalar_system,
    make_system,
    parse_system,
    symbol,
)
from .errors import PoissonDtNError
from .fields import (
    BoundaryField,
    ConeSpec,
    GridSpec,
    PVKernel,
    convolve,
    fourier_multiplier,
    gradient,
    make_field,
    nt_max_sampled,
    pv_apply,
    read_field,
    riesz,
    riesz_kernel,
    write_field,
)
from .fundsol import FundamentalSolution, build_fundsol, eval_E, eval_gradE, quadrature_selfcheck
from .generator import (
    check_block_identity,
    check_semigroup,
    dtn,
    dtn_conjugate,
    dtn_pv,
    dtn_quotient,
    dtn_spectral,
    generator_power,
    make_context,
    route_agreement,
    semigroup_apply,
)
from .poisson import (
    build_conjugate,
    build_kernel,
    eval_K,
    verify_annihilation,
    verify_normalization,
)

__version__ = "0.1.0"
