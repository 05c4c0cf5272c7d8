"""Registry of named verification checks: what identity each one exercises and why
its tolerance is what it is."""
from __future__ import annotations

from dataclasses import dataclass

from .errors import UnknownCheck

__all__ = ["CheckInfo", "CHECKS", "explain", "default_tolerance"]


@dataclass(frozen=True)
class CheckInfo:
    name: str
    module: str
    identity: str
    tolerance: float
    rationale: str


CHECKS = {
    c.name: c
    for c in [
        CheckInfo(
            "fundsol_selfcheck",
            "fundsol",
            "The plane-wave quadrature fundamental solution agrees with the closed form "
            "(up to an additive constant when n = 2).",
            1e-6,
            "Spectrally accurate sphere rule; the outer Laplacian is a 6th-order stencil, "
            "so the error sits well below the quoted bound.",
        ),
        CheckInfo(
            "conormal",
            "elliptic-core",
            "Conormal vanishing: a^{ba}_{rn} d_r E_{gb}(x', 0) = 0 on the boundary, scaled by |x'|^{n-1}.",
            1e-10,
            "Analytic gradients make this an algebraic identity; 1e-6 applies on the "
            "quadrature route where gradients are differenced.",
        ),
        CheckInfo(
            "symbol_conditions",
            "elliptic-core",
            "Symbol-level sufficient conditions for conormal vanishing, with the circle "
            "integral condition when n = 2.",
            1e-8,
            "Exact derivative of the inverse symbol; only the trapezoid circle rule is discretised.",
        ),
        CheckInfo(
            "normalization",
            "poisson",
            "The Poisson kernel integrates to the identity matrix over the boundary.",
            1e-3,
            "Trapezoid integral on a finite box plus a fitted |x'|^{-n} far field; the "
            "fit uncertainty is reported alongside.",
        ),
        CheckInfo(
            "annihilation",
            "poisson",
            "Each column of K(x', t) solves L u = 0 in the upper half-space.",
            1e-5,
            "Second central differences with step 1e-3: truncation near 1e-7, roundoff near 1e-10.",
        ),
        CheckInfo(
            "decay_constant",
            "poisson",
            "||P(x')|| (1 + |x'|^2)^{n/2} stays bounded; the sampled supremum is stable "
            "when the sample radius doubles.",
            1e-6,
            "The supremum is attained at moderate radius, so enlarging the sample must not change it.",
        ),
        CheckInfo(
            "semigroup",
            "generator",
            "Kernels compose under convolution, P_s * P_t = P_{s+t}, hence "
            "T(s) T(t) f = T(s + t) f.",
            1e-5,
            "The discrete convolution is spectrally accurate for t >= 4h; the intermediate "
            "field is computed on a wider grid so its |x'|^{-n} tail is kept.",
        ),
        CheckInfo(
            "convolution_routes",
            "fields",
            "Direct trapezoid summation and FFT convolution compute the same discrete sum.",
            1e-6,
            "Both evaluate identical sums; differences are roundoff.",
        ),
        CheckInfo(
            "route_agreement",
            "generator",
            "The generator A f computed from principal-value integrals, the Fourier "
            "multiplier, the difference quotient (T(h) f - f)/h and the conjugate kernels coincide.",
            1e-2,
            "Bounded by the quotient route, whose Richardson-extrapolated error is a few 1e-3.",
        ),
        CheckInfo(
            "block_identity",
            "generator",
            "For block systems L = d_n^2 + L' the generator squares to A^2 f = -L'f.",
            2e-2,
            "Repeated pv or quotient application compounds two route errors; the spectral "
            "route meets 1e-8 because the multiplier algebra is exact.",
        ),
        CheckInfo(
            "generator_power",
            "generator",
            "A^k f equals the k-th normal derivative of the solution at the boundary; "
            "repeated application and one-sided t-differences of T(t) f must agree.",
            5e-2,
            "k-th one-sided differences amplify errors like s^{-k}; Richardson extrapolation "
            "over three step sizes keeps the gap near 1e-3.",
        ),
        CheckInfo(
            "pv_oracle",
            "fields",
            "Principal-value convolution with c_d y_s/|y|^{d+1} reproduces the Riesz "
            "multiplier -i xi_s/|xi|.",
            1e-3,
            "The punctured lattice sum with zeta correction is third-order accurate.",
        ),
    ]
}


def default_tolerance(name: str) -> float:
    return CHECKS[name].tolerance if name in CHECKS else 1e-6


def explain(name: str) -> str:
    try:
        info = CHECKS[name]
    except KeyError:
        known = ", ".join(sorted(CHECKS))
        raise UnknownCheck(f"unknown check {name!r}; known checks: {known}") from None
    return (
        f"{info.name} [{info.module}]\n"
        f"  identity:  {info.identity}\n"
        f"  tolerance: {info.tolerance:g}\n"
        f"  rationale: {info.rationale}\n"
    )
