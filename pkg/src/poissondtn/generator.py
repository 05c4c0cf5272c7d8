"""Poisson semigroup T(t) f = P_t * f and its generator (the Dirichlet-to-Normal map).

Routes for A f:
  pv          first-order term plus principal-value integrals of grad E on the boundary
  spectral    Fourier multiplier -sqrt(b(xi')) for block systems with scalar tangential symbol
  quotient    (T(h) f - f)/h on a ladder of h, Richardson-extrapolated
  conjugate   first-order term plus principal-value integrals of the conjugate kernels
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .elliptic import EllipticSystem
from .errors import BranchAmbiguity, GridTooCoarse, NoConvergence, UnsupportedRoute, UnsupportedSystem
from .fields import (
    BoundaryField,
    GridSpec,
    PVKernel,
    _offset_points,
    convolve,
    fourier_multiplier,
    gradient,
    l2_norm,
    pv_apply,
    rel_l2,
)
from .fundsol import build_fundsol
from .numdiff import fornberg_weights
from .poisson import PoissonKernel, build_conjugate, build_kernel, jump_coefficient

__all__ = [
    "SemigroupContext",
    "GeneratorResult",
    "make_context",
    "semigroup_apply",
    "check_semigroup",
    "first_order_coefficients",
    "dtn_pv",
    "dtn_spectral",
    "dtn_quotient",
    "dtn_conjugate",
    "dtn",
    "generator_power",
    "check_block_identity",
    "operator_norm",
    "tangential_operator",
    "route_agreement",
    "DTN_ROUTES",
]

DTN_ROUTES = ("pv", "spectral", "quotient", "conjugate")


@dataclass(frozen=True)
class SemigroupContext:
    system: EllipticSystem
    kernel: PoissonKernel
    grid: GridSpec
    cache: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def d(self) -> int:
        return self.grid.d


@dataclass(frozen=True)
class GeneratorResult:
    value: BoundaryField
    route: str
    diagnostics: dict


def make_context(system: EllipticSystem, grid: GridSpec, kernel: Optional[PoissonKernel] = None) -> SemigroupContext:
    if grid.d != system.n - 1:
        raise ValueError(f"grid dimension {grid.d} does not match n - 1 = {system.n - 1}")
    if kernel is None:
        kernel = build_kernel(system)
    return SemigroupContext(system, kernel, grid)


def _check_field(ctx: SemigroupContext, f: BoundaryField):
    if f.grid != ctx.grid:
        raise ValueError("field grid differs from the context grid")
    if f.M != ctx.system.M:
        raise ValueError(f"field has {f.M} components, system has {ctx.system.M}")


def semigroup_apply(ctx: SemigroupContext, f: BoundaryField, t: float, method: str = "fft") -> BoundaryField:
    _check_field(ctx, f)
    if t < 0:
        raise ValueError("t must be >= 0")
    if t == 0:
        return f
    return convolve(f, ctx.kernel, t, method)


def _embed(f: BoundaryField, factor: int) -> BoundaryField:
    """Same field on a grid `factor` times wider with the same step (zero outside)."""
    if factor == 1:
        return f
    g = GridSpec(f.grid.d, f.grid.R * factor, f.grid.N * factor)
    v = np.zeros(g.shape + (f.M,), dtype=complex)
    lo = (g.N - f.grid.N) // 2
    sl = tuple(slice(lo, lo + f.grid.N) for _ in range(f.grid.d))
    v[sl] = f.values
    return BoundaryField(g, v, f.decay_class)


def _crop(f: BoundaryField, grid: GridSpec) -> BoundaryField:
    if f.grid == grid:
        return f
    lo = (f.grid.N - grid.N) // 2
    sl = tuple(slice(lo, lo + grid.N) for _ in range(grid.d))
    return BoundaryField(grid, np.asarray(f.values)[sl], "schwartz_like")


def check_semigroup(ctx: SemigroupContext, f: BoundaryField, t1: float, t2: float, extend: int = 1) -> float:
    """||T(t1) T(t2) f - T(t1 + t2) f|| / ||f|| on the context grid.

    With ``extend`` > 1 the intermediate field T(t2) f is computed on a wider grid
    (same step) so its slowly decaying tail is not cut at the box edge.
    """
    _check_field(ctx, f)
    if t2 == 0 or t1 == 0:
        return 0.0
    big = _embed(f, extend)
    u2 = convolve(big, ctx.kernel, t2)
    u12 = _crop(convolve(u2, ctx.kernel, t1), ctx.grid)
    direct = convolve(f, ctx.kernel, t1 + t2)
    return l2_norm(u12 - direct) / l2_norm(f)


# first-order coefficients and PV kernels


def first_order_coefficients(system: EllipticSystem) -> np.ndarray:
    """C_s[g, a] = sum_b (B^{-1})_{g b} a^{b a}_{n s} for s < n; shape (n-1, M, M)."""
    a = system.tensor.a
    n = system.n
    B = a[n - 1, n - 1]
    Binv = np.linalg.solve(B, np.eye(system.M))
    # a^{b a}_{n s} is stored as a[n-1, s, b, a]
    return np.einsum("gb,sba->sga", Binv, a[n - 1, : n - 1])


def _pv_kernels(ctx: SemigroupContext) -> list:
    """k_s(y')[g, a] = -2 a^{b a}_{r s} d_r E_{g b}(y', 0) for s < n."""
    if "pv_kernels" in ctx.cache:
        return ctx.cache["pv_kernels"]
    system = ctx.system
    n, M = system.n, system.M
    fs = ctx.kernel.fundsol
    if fs is None:
        fs = build_fundsol(system)
    a = system.tensor.a
    kernels = []
    for s in range(n - 1):

        def ev(y, s=s):
            X = np.hstack((y, np.zeros((len(y), 1))))
            grad = fs.gradE_batch(X)
            # contract over (r, b): grad[p, r, g, b] with a[r, s, b, a]
            return -2.0 * np.tensordot(grad.transpose(0, 2, 1, 3), a[:, s], axes=([2, 3], [0, 1]))

        if fs.route == "quadrature":
            kernels.append(PVKernel.from_profile(ev, n - 1, M, f"pv{s}"))
        else:
            kernels.append(PVKernel(ev, n - 1, M, f"pv{s}"))
    ctx.cache["pv_kernels"] = kernels
    return kernels


def _apply_first_order(C: np.ndarray, grads: list) -> np.ndarray:
    return sum(np.einsum("ga,...a->...g", C[s], np.asarray(grads[s].values)) for s in range(len(grads)))


def dtn_pv(ctx: SemigroupContext, f: BoundaryField, grad_route: str = "fd") -> GeneratorResult:
    _check_field(ctx, f)
    C = first_order_coefficients(ctx.system)
    grads = gradient(f, grad_route, check=False)
    out = -_apply_first_order(C, grads)
    kernels = _pv_kernels(ctx)
    corr = 0.0
    for s, k in enumerate(kernels):
        res = pv_apply(k, grads[s])
        out = out + np.asarray(res.values)
        corr = max(corr, res.meta.get("correction_norm", 0.0))
    diag = {"first_order": C, "correction_norm": corr, "grad_route": grad_route}
    return GeneratorResult(BoundaryField(f.grid, out, "schwartz_like"), "pv", diag)


def _block_symbol(system: EllipticSystem) -> np.ndarray:
    split = system.block_split
    if split is None:
        raise UnsupportedSystem("spectral route needs a block system (identity in d_n^2, no mixed terms)")
    b = split.scalar_symbol
    if b is None:
        raise UnsupportedSystem("spectral route needs a scalar tangential symbol")
    return b


def dtn_spectral(ctx: SemigroupContext, f: BoundaryField, power: int = 1, pad: Optional[int] = None, check: bool = True) -> GeneratorResult:
    """Multiplier (-sqrt(b(xi')))^power with b(xi') = sum B_rs xi_r xi_s (principal root).

    The output decays only like |x'|^{-d-1}, so periodic images are pushed away
    by zero padding (default 16x in d=1, 4x in d=2).
    """
    _check_field(ctx, f)
    if pad is None:
        pad = 16 if ctx.d == 1 else 4
    b = _block_symbol(ctx.system)
    freqs = ctx.grid.freqs(pad)
    bxi = np.einsum("...r,rs,...s->...", freqs, b, freqs)
    nonzero = np.any(freqs != 0, axis=-1)
    if np.any(bxi.real[nonzero] <= 0):
        raise BranchAmbiguity("Re b(xi') <= 0 at some grid frequency")
    mult = (-np.sqrt(bxi.astype(complex))) ** power
    out = fourier_multiplier(f, lambda xi: mult, pad=pad, check=check)
    return GeneratorResult(out, "spectral", {"pad": pad, "power": power})


def _richardson(seq: Sequence[np.ndarray], ratio: float = 2.0, first: int = 1) -> tuple:
    """Neville table for values with error c1 h^first + c2 h^{first+1} + ... (h halving)."""
    table = [list(seq)]
    for j in range(1, len(seq)):
        fac = ratio ** (first + j - 1)
        prev = table[-1]
        table.append([prev[i + 1] + (prev[i + 1] - prev[i]) / (fac - 1) for i in range(len(prev) - 1)])
    return table[-1][-1], table


def _observed_orders(values: Sequence[np.ndarray], ratio: float = 2.0) -> list:
    diffs = [np.linalg.norm((values[i + 1] - values[i]).ravel()) for i in range(len(values) - 1)]
    orders = []
    for i in range(len(diffs) - 1):
        if diffs[i + 1] == 0 or diffs[i] == 0:
            orders.append(float("inf"))
        else:
            orders.append(math.log(diffs[i] / diffs[i + 1]) / math.log(ratio))
    return diffs, orders


def dtn_quotient(ctx: SemigroupContext, f: BoundaryField, h_ladder: Sequence[float] = (0.4, 0.2, 0.1)) -> GeneratorResult:
    """(T(h) f - f)/h on a halving ladder, Richardson-extrapolated in h."""
    _check_field(ctx, f)
    ladder = sorted(h_ladder, reverse=True)
    if len(ladder) < 2:
        raise ValueError("need at least two rungs")
    for hi, lo in zip(ladder, ladder[1:]):
        if not math.isclose(hi / lo, 2.0, rel_tol=1e-12):
            raise ValueError("h_ladder must halve at each rung")
    if ladder[-1] < 4 * ctx.grid.h:
        raise GridTooCoarse(f"smallest rung {ladder[-1]} < 4 * grid step {ctx.grid.h}")
    v = np.asarray(f.values)
    quotients = [(np.asarray(convolve(f, ctx.kernel, hh).values) - v) / hh for hh in ladder]
    diffs, orders = _observed_orders(quotients)
    if any(d2 >= d1 for d1, d2 in zip(diffs, diffs[1:])):
        raise NoConvergence(f"quotient differences are not decreasing: {diffs}")
    best, table = _richardson(quotients)
    extrap_orders = []
    if len(table[1]) >= 3:
        _, extrap_orders = _observed_orders(table[1])
    diag = {"ladder": ladder, "raw_differences": diffs, "observed_orders": orders, "extrapolated_orders": extrap_orders}
    return GeneratorResult(BoundaryField(f.grid, best, "schwartz_like"), "quotient", diag)


def _conjugate_first_order(ctx: SemigroupContext) -> np.ndarray:
    system = ctx.system
    n = system.n
    if system.M == 1:
        a = system.tensor.a[:, :, 0, 0]
        c = np.array([(a[n - 1, j] + a[j, n - 1]) / (2 * a[n - 1, n - 1]) for j in range(n - 1)])
        return c[:, None, None]
    if system.kind == "lame":
        mu, lam = system.params["mu"], system.params["lam"]
        d = np.eye(n)
        coef = (mu + lam) / (3 * mu + lam)
        return np.array([coef * (np.outer(d[n - 1], d[j]) + np.outer(d[j], d[n - 1])) for j in range(n - 1)])
    raise UnsupportedRoute("conjugate route needs a scalar or Lame system")


def dtn_conjugate(ctx: SemigroupContext, f: BoundaryField, grad_route: str = "fd") -> GeneratorResult:
    """-sum_j [c_j d_j f + p.v. K_j(., 0) * d_j f]."""
    _check_field(ctx, f)
    c = _conjugate_first_order(ctx)
    kernel = ctx.kernel
    if kernel.system.M != 1 and kernel.system.kind != "lame":
        raise UnsupportedRoute("conjugate route needs a scalar or Lame system")
    grads = gradient(f, grad_route, check=False)
    out = -_apply_first_order(c, grads)
    jumps = []
    for j in range(ctx.d):
        conj = build_conjugate(kernel, j)
        k = PVKernel(conj.boundary, ctx.d, ctx.system.M, f"conj{j}")
        out = out - np.asarray(pv_apply(k, grads[j]).values)
        jumps.append(float(np.max(np.abs(jump_coefficient(conj) - c[j]))))
    diag = {"first_order": c, "jump_coefficient_gap": max(jumps)}
    return GeneratorResult(BoundaryField(f.grid, out, "schwartz_like"), "conjugate", diag)


def dtn(ctx: SemigroupContext, f: BoundaryField, route: str, **kw) -> GeneratorResult:
    if route == "pv":
        return dtn_pv(ctx, f, **kw)
    if route == "spectral":
        return dtn_spectral(ctx, f, **kw)
    if route == "quotient":
        return dtn_quotient(ctx, f, **kw)
    if route == "conjugate":
        return dtn_conjugate(ctx, f, **kw)
    raise UnsupportedRoute(f"unknown generator route {route!r}")


def available_routes(system: EllipticSystem) -> list:
    routes = ["pv", "quotient"]
    if system.block_split is not None and system.block_split.scalar_symbol is not None:
        routes.insert(1, "spectral")
    if system.M == 1 or system.kind == "lame":
        routes.append("conjugate")
    return routes


def route_agreement(ctx: SemigroupContext, f: BoundaryField, routes: Optional[Sequence[str]] = None, **kw) -> dict:
    """Pairwise relative L2 gaps (normalised by the larger of the two norms)."""
    routes = list(routes or available_routes(ctx.system))
    results = {r: dtn(ctx, f, r, **kw.get(r, {})) for r in routes}
    gaps = {}
    for i, r1 in enumerate(routes):
        for r2 in routes[i + 1 :]:
            v1 = np.asarray(results[r1].value.values)
            v2 = np.asarray(results[r2].value.values)
            scale = max(np.linalg.norm(v1), np.linalg.norm(v2))
            gaps[f"{r1}-{r2}"] = float(np.linalg.norm(v1 - v2) / scale)
    return {"results": results, "gaps": gaps}


def generator_power(
    ctx: SemigroupContext,
    f: BoundaryField,
    k: int,
    route: str = "pv",
    dt: float = 0.1,
    levels: int = 3,
    extra: int = 2,
) -> dict:
    """A^k f by repeated application of ``route`` and by the trace route.

    Trace route: u(., t) = T(t) f on t = 0, s, 2s, ..., (k + extra) s; the k-th
    t-derivative at 0 from one-sided Fornberg weights, Richardson-extrapolated
    over s = dt * 2^j (j = levels-1, ..., 0).
    """
    _check_field(ctx, f)
    if not 1 <= k <= 4:
        raise ValueError("k must be in 1..4")
    if route == "spectral":
        repeated = dtn_spectral(ctx, f, power=k).value
    else:
        g = f
        for _ in range(k):
            g = dtn(ctx, g, route).value
        repeated = g
    p = k + extra
    nodes = np.arange(p + 1, dtype=float)
    w = fornberg_weights(0.0, nodes, k)[k]
    steps = [dt * 2**j for j in range(levels - 1, -1, -1)]
    if steps[-1] < 4 * ctx.grid.h:
        raise GridTooCoarse("trace-route step below 4 * grid step")
    cache = {0.0: np.asarray(f.values)}
    ests = []
    for s in steps:
        acc = 0.0
        for i, wi in enumerate(w):
            t = round(i * s, 12)
            if t not in cache:
                cache[t] = np.asarray(convolve(f, ctx.kernel, t).values)
            acc = acc + wi * cache[t]
        ests.append(acc / s**k)
    trace, table = _richardson(ests, first=p + 1 - k)
    diffs, orders = _observed_orders(ests)
    if len(diffs) >= 2 and any(d2 >= d1 for d1, d2 in zip(diffs, diffs[1:])):
        raise NoConvergence(f"trace-route estimates do not converge: {diffs}")
    trace_f = BoundaryField(f.grid, trace, "schwartz_like")
    return {
        "repeated": repeated,
        "trace": trace_f,
        "gap": rel_l2(trace_f, repeated),
        "diagnostics": {"steps": steps, "stencil_points": p + 1, "differences": diffs, "observed_orders": orders},
    }


def tangential_operator(ctx: SemigroupContext, f: BoundaryField, pad: int = 4) -> BoundaryField:
    """L'f = sum_{r,s<n} B_rs d_r d_s f spectrally (matrix multiplier -B_rs xi_r xi_s)."""
    split = ctx.system.block_split
    if split is None:
        raise UnsupportedSystem("block identity needs a block system")
    B = split.tangential

    def m(xi):
        return -np.einsum("...r,...s,rsga->...ga", xi, xi, B)

    return fourier_multiplier(f, m, pad=pad, matrix=True)


def check_block_identity(ctx: SemigroupContext, f: BoundaryField, route: str = "pv") -> float:
    """||A(Af) + L'f|| / ||L'f||."""
    Lf = tangential_operator(ctx, f)
    if route == "spectral":
        AAf = dtn_spectral(ctx, f, power=2).value
    else:
        AAf = dtn(ctx, dtn(ctx, f, route).value, route).value
    return l2_norm(AAf + Lf) / l2_norm(Lf)


def operator_norm(ctx: SemigroupContext, t: float, iterations: int = 40, seed: int = 0) -> float:
    """Power-iteration estimate of the discrete L2 -> L2 norm of T(t)."""
    grid = ctx.grid
    rng = np.random.default_rng(seed)
    M = ctx.system.M
    x = rng.standard_normal(grid.shape + (M,)) + 0j
    d = grid.d
    offs = _offset_points(grid).reshape(-1, d)
    kv = ctx.kernel.K_batch(offs, t).reshape(_offset_points(grid).shape[:-1] + (M, M))
    kadj = np.conj(np.swapaxes(kv[tuple(slice(None, None, -1) for _ in range(d))], -1, -2))
    from .fields import _conv_matrix_kernel

    h = grid.h
    est = 0.0
    for _ in range(iterations):
        x /= np.linalg.norm(x)
        y = h**d * _conv_matrix_kernel(kv, x, d)
        z = h**d * _conv_matrix_kernel(kadj, y, d)
        est = math.sqrt(float(np.real(np.vdot(x, z))))
        x = z
    return est
