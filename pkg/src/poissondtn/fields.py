"""Boundary fields on uniform grids of R^{n-1} and the operators acting on them.

Grid nodes are x_k = -R + k h with h = 2R/N (k = 0..N-1 per axis), so the node
with index N/2 sits at the origin.  Fourier transforms follow
f^(xi) = int e^{-i xi.x} f(x) dx, which matches numpy's forward DFT sign.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Optional, Sequence

import numpy as np
from scipy import ndimage
from scipy.signal import fftconvolve

from .errors import (
    AliasingRisk,
    ConfigError,
    GridTooCoarse,
    KernelNotHomogeneous,
    KernelNotOdd,
    PeriodizationRisk,
)

__all__ = [
    "GridSpec",
    "BoundaryField",
    "PVKernel",
    "ConeSpec",
    "make_field",
    "gaussian",
    "convolve",
    "fourier_multiplier",
    "riesz",
    "pv_apply",
    "gradient",
    "nt_max_sampled",
    "riesz_kernel",
    "l2_norm",
    "rel_l2",
    "write_field",
    "read_field",
]

BOUNDARY_TOL = 1e-10
NYQUIST_TOL = 1e-6


@dataclass(frozen=True)
class GridSpec:
    d: int
    R: float
    N: int

    def __post_init__(self):
        if self.d not in (1, 2):
            raise ValueError("boundary dimension d must be 1 or 2")
        if self.N < 64 or self.N & (self.N - 1):
            raise ValueError("N must be a power of two and >= 64")
        if self.R <= 0:
            raise ValueError("R must be positive")
        if self.h > 0.25:
            raise ValueError(f"grid step h = {self.h} exceeds 0.25")

    @property
    def h(self) -> float:
        return 2.0 * self.R / self.N

    @property
    def shape(self) -> tuple:
        return (self.N,) * self.d

    @property
    def axis(self) -> np.ndarray:
        return -self.R + self.h * np.arange(self.N)

    def coords(self) -> np.ndarray:
        """Node coordinates, shape shape + (d,)."""
        axes = np.meshgrid(*([self.axis] * self.d), indexing="ij")
        return np.stack(axes, axis=-1)

    def points(self) -> np.ndarray:
        return self.coords().reshape(-1, self.d)

    def freqs(self, pad: int = 1) -> np.ndarray:
        """Angular frequencies of the (padded) DFT grid, shape (N pad,)*d + (d,)."""
        k = 2.0 * math.pi * np.fft.fftfreq(self.N * pad, self.h)
        axes = np.meshgrid(*([k] * self.d), indexing="ij")
        return np.stack(axes, axis=-1)

    @property
    def origin_index(self) -> tuple:
        return (self.N // 2,) * self.d

    def to_json(self) -> dict:
        return {"d": self.d, "R": self.R, "N": self.N}

    @classmethod
    def from_json(cls, obj: Mapping) -> "GridSpec":
        try:
            return cls(int(obj["d"]), float(obj["R"]), int(obj["N"]))
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed grid ({exc})", field="grid")
        except ValueError as exc:
            raise ConfigError(str(exc), field="grid")


@dataclass(frozen=True)
class BoundaryField:
    """Samples of an M-component field; ``values`` has shape grid.shape + (M,)."""

    grid: GridSpec
    values: np.ndarray
    decay_class: str = "schwartz_like"
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.shape == self.grid.shape:
            v = v[..., None]
        if v.shape[:-1] != self.grid.shape:
            raise ValueError(f"values shape {v.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("field has non-finite values")
        if self.decay_class not in ("compact", "schwartz_like"):
            raise ValueError("decay_class must be 'compact' or 'schwartz_like'")
        if self.decay_class == "compact" and np.any(_boundary_layer(v, self.grid.d) != 0):
            raise ValueError("compact field must vanish on the outermost grid layer")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def M(self) -> int:
        return self.values.shape[-1]

    def with_values(self, values, **meta) -> "BoundaryField":
        return BoundaryField(self.grid, values, "schwartz_like", dict(meta))

    def __add__(self, other: "BoundaryField") -> "BoundaryField":
        return self.with_values(self.values + other.values)

    def __sub__(self, other: "BoundaryField") -> "BoundaryField":
        return self.with_values(self.values - other.values)

    def scale(self, c) -> "BoundaryField":
        return self.with_values(c * self.values)


def _boundary_layer(v: np.ndarray, d: int) -> np.ndarray:
    if d == 1:
        return np.concatenate((v[0], v[-1]))
    return np.concatenate((v[0].ravel(), v[-1].ravel(), v[:, 0].ravel(), v[:, -1].ravel()))


def l2_norm(f) -> float:
    v = f.values if isinstance(f, BoundaryField) else np.asarray(f)
    h = f.grid.h if isinstance(f, BoundaryField) else 1.0
    d = f.grid.d if isinstance(f, BoundaryField) else 0
    return float(math.sqrt(np.sum(np.abs(v) ** 2) * h**d))


def rel_l2(a, b) -> float:
    """||a - b|| / ||b||."""
    va = a.values if isinstance(a, BoundaryField) else np.asarray(a)
    vb = b.values if isinstance(b, BoundaryField) else np.asarray(b)
    return float(np.linalg.norm((va - vb).ravel()) / np.linalg.norm(vb.ravel()))


# constructors


def gaussian(grid: GridSpec, sigma: float = 1.0, center=None, M: int = 1, component: Optional[int] = None, amplitude=1.0):
    x = grid.coords()
    c = np.zeros(grid.d) if center is None else np.asarray(center, dtype=float)
    g = amplitude * np.exp(-np.sum((x - c) ** 2, axis=-1) / (2.0 * sigma**2))
    return _spread(grid, g, M, component)


def _spread(grid, g, M, component):
    v = np.zeros(grid.shape + (M,), dtype=complex)
    if component is None:
        v[...] = g[..., None]
    else:
        v[..., component] = g
    return BoundaryField(grid, v, "schwartz_like")


def make_field(grid: GridSpec, spec: Mapping, M: int = 1) -> BoundaryField:
    """Preset fields: gaussian(sigma), gaussian_dd (second derivative of a Gaussian,
    zero mean and first moment), windowed_cos(xi, width), cauchy(t0), bump(radius)."""
    kind = spec.get("kind")
    comp = spec.get("component")
    x = grid.coords()
    r2 = np.sum(x**2, axis=-1)
    if kind == "gaussian":
        s = float(spec.get("sigma", 1.0))
        g = np.exp(-r2 / (2 * s**2))
    elif kind == "gaussian_dd":
        s = float(spec.get("sigma", 1.0))
        x1 = x[..., 0]
        g = (x1**2 / s**2 - 1.0) * np.exp(-r2 / (2 * s**2))
    elif kind == "windowed_cos":
        xi = float(spec.get("xi", 1.0))
        w = float(spec.get("width", grid.R / 4))
        g = np.cos(xi * x[..., 0]) * np.exp(-r2 / (2 * w**2))
    elif kind == "cauchy":
        t0 = float(spec.get("t0", 1.0))
        n = grid.d + 1
        omega = 2 * math.pi ** (n / 2) / math.gamma(n / 2)
        g = (2.0 / omega) * t0 / (t0**2 + r2) ** (n / 2)
    elif kind == "bump":
        rad = float(spec.get("radius", 1.0))
        inside = r2 < rad**2
        g = np.zeros_like(r2)
        g[inside] = np.exp(-1.0 / (1.0 - r2[inside] / rad**2))
        v = np.zeros(grid.shape + (M,), dtype=complex)
        if comp is None:
            v[...] = g[..., None]
        else:
            v[..., int(comp)] = g
        return BoundaryField(grid, v, "compact")
    else:
        raise ConfigError(f"unknown field preset {kind!r}", field="field.kind")
    return _spread(grid, g, M, None if comp is None else int(comp))


# convolution with the Poisson kernel


def _offset_points(grid: GridSpec) -> np.ndarray:
    """Offsets j h for j in [-(N-1), N-1]^d, shape (2N-1,)*d + (d,)."""
    j = grid.h * np.arange(-(grid.N - 1), grid.N)
    axes = np.meshgrid(*([j] * grid.d), indexing="ij")
    return np.stack(axes, axis=-1)


def _conv_matrix_kernel(kvals: np.ndarray, f: np.ndarray, d: int) -> np.ndarray:
    """Linear convolution sum_a k[., g, a] * f[., a], cropped to f's grid."""
    N = f.shape[0]
    M = f.shape[-1]
    sl = tuple(slice(N - 1, 2 * N - 1) for _ in range(d))
    out = np.zeros(f.shape, dtype=complex)
    for g in range(kvals.shape[-2]):
        for a in range(M):
            if not np.any(kvals[..., g, a]) or not np.any(f[..., a]):
                continue
            out[..., g] += fftconvolve(kvals[..., g, a], f[..., a], mode="full")[sl]
    return out


def convolve(f: BoundaryField, kernel, t: float, method: str = "fft") -> BoundaryField:
    """u(., t) = P_t * f on f's grid.

    ``method="direct"`` sums the trapezoid rule over the support of f;
    ``method="fft"`` evaluates the same linear convolution with the kernel
    sampled on every grid offset (a 3x padded transform).  The part of the
    kernel mass falling outside the sampled offsets is reported in meta.
    """
    grid = f.grid
    if t == 0:
        return f
    if t < 4 * grid.h:
        raise GridTooCoarse(f"t = {t} < 4h = {4 * grid.h}")
    d, h = grid.d, grid.h
    offs = _offset_points(grid)
    kv = kernel.K_batch(offs.reshape(-1, d), t).reshape(offs.shape[:-1] + (kernel.M, kernel.M))
    if kernel.M != f.M:
        raise ValueError("kernel and field have different component counts")
    if method == "fft":
        out = h**d * _conv_matrix_kernel(kv, np.asarray(f.values), d)
    elif method == "direct":
        out = _direct_sum(kv, np.asarray(f.values), grid)
    else:
        raise ValueError("method must be 'fft' or 'direct'")
    mass = h**d * kv.sum(axis=tuple(range(d)))
    return BoundaryField(grid, out, "schwartz_like", {"t": t, "method": method, "kernel_tail_mass": float(np.max(np.abs(np.eye(kernel.M) - mass)))})


def _direct_sum(kv: np.ndarray, f: np.ndarray, grid: GridSpec) -> np.ndarray:
    N, d, h = grid.N, grid.d, grid.h
    supp = np.argwhere(np.any(f != 0, axis=-1))
    targets = np.argwhere(np.ones(grid.shape, dtype=bool))
    out = np.zeros(f.shape, dtype=complex).reshape(-1, f.shape[-1])
    for start in range(0, len(targets), 4096):
        tg = targets[start : start + 4096]
        idx = tg[:, None, :] - supp[None, :, :] + (N - 1)
        kk = kv[tuple(idx[..., i] for i in range(d))]  # (T, S, M, M)
        fs = f[tuple(supp[:, i] for i in range(d))]  # (S, M)
        out[start : start + 4096] = h**d * np.einsum("tsga,sa->tg", kk, fs)
    return out.reshape(f.shape)


# spectral operators


def _check_spectral(f: BoundaryField, check: bool):
    if not check:
        return
    v = np.asarray(f.values)
    peak = float(np.max(np.abs(v)))
    if peak == 0:
        return
    edge = float(np.max(np.abs(_boundary_layer(v, f.grid.d))))
    if edge > BOUNDARY_TOL * peak:
        raise PeriodizationRisk(f"boundary layer {edge / peak:.2e} of the peak exceeds {BOUNDARY_TOL:g}")
    F = np.fft.fftn(v, axes=tuple(range(f.grid.d)))
    k = np.abs(np.fft.fftfreq(f.grid.N))
    near = k >= 0.45
    mask = np.zeros(f.grid.shape, dtype=bool)
    for ax in range(f.grid.d):
        sel = [slice(None)] * f.grid.d
        sel[ax] = near
        mask[tuple(sel)] = True
    top = float(np.max(np.abs(F[mask]))) / float(np.max(np.abs(F)))
    if top > NYQUIST_TOL:
        raise AliasingRisk(f"relative spectral mass {top:.2e} near Nyquist")


def fourier_multiplier(
    f: BoundaryField,
    m: Callable[[np.ndarray], np.ndarray],
    pad: int = 1,
    check: bool = True,
    matrix: bool = False,
) -> BoundaryField:
    """inverse-DFT(m(xi) DFT f).

    ``m`` maps an array of frequencies (..., d) to scalars (...) or, when
    ``matrix`` is set, to M x M matrices (..., M, M).  ``pad`` zero-pads each axis
    by that factor so the periodic images sit pad*2R apart.
    """
    _check_spectral(f, check)
    d, N = f.grid.d, f.grid.N
    axes = tuple(range(d))
    F = np.fft.fftn(np.asarray(f.values), s=(N * pad,) * d, axes=axes)
    mv = np.asarray(m(f.grid.freqs(pad)))
    if matrix:
        G = np.einsum("...ga,...a->...g", mv, F)
    else:
        G = mv[..., None] * F
    out = np.fft.ifftn(G, axes=axes)[tuple(slice(0, N) for _ in range(d))]
    return BoundaryField(f.grid, out, "schwartz_like", {"pad": pad})


def riesz(f: BoundaryField, s: int, pad: int = 1, check: bool = True) -> BoundaryField:
    """Riesz transform with multiplier -i xi_s/|xi| (0-based s; zero at xi = 0)."""
    if not 0 <= s < f.grid.d:
        raise ValueError(f"s must be in 0..{f.grid.d - 1}")

    def m(xi):
        norm = np.linalg.norm(xi, axis=-1)
        out = np.zeros(norm.shape, dtype=complex)
        nz = norm > 0
        out[nz] = -1j * xi[..., s][nz] / norm[nz]
        return out

    out = fourier_multiplier(f, m, pad, check)
    mean = np.asarray(f.values).reshape(-1, f.M).sum(axis=0) * f.grid.h**f.grid.d
    return BoundaryField(f.grid, out.values, "schwartz_like", {"pad": pad, "dropped_mean": mean.tolist()})


def gradient(f: BoundaryField, route: str = "spectral", pad: int = 1, check: bool = True) -> list:
    """[d_s f for s in range(d)] by spectral differentiation or 4th-order differences."""
    d = f.grid.d
    if route == "spectral":
        return [fourier_multiplier(f, lambda xi, s=s: 1j * xi[..., s], pad, check) for s in range(d)]
    if route != "fd":
        raise ValueError("route must be 'spectral' or 'fd'")
    v = np.asarray(f.values)
    h = f.grid.h
    out = []
    for s in range(d):
        vs = np.moveaxis(v, s, 0)
        der = np.empty_like(vs)
        der[2:-2] = (vs[:-4] - 8 * vs[1:-3] + 8 * vs[3:-1] - vs[4:]) / (12 * h)
        # one-sided 4th-order stencils on the two outer layers (no artificial jump)
        for i, row in ((0, _EDGE_W[0]), (1, _EDGE_W[1])):
            der[i] = np.tensordot(row, vs[:5], axes=(0, 0)) / h
            der[-1 - i] = -np.tensordot(row, vs[::-1][:5], axes=(0, 0)) / h
        der = np.moveaxis(der, 0, s)
        out.append(BoundaryField(f.grid, der, "schwartz_like"))
    return out


_EDGE_W = (
    np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / 12.0,
    np.array([-3.0, -10.0, 18.0, -6.0, 1.0]) / 12.0,
)


# principal-value singular integrals


def _trig_interp(samples: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """Trigonometric interpolation of periodic samples (L, ...) at angles theta."""
    L = samples.shape[0]
    c = np.fft.fft(samples, axis=0) / L
    k = np.fft.fftfreq(L, 1.0 / L)
    if L % 2 == 0:
        c[L // 2] *= 0.5
        c = np.concatenate((c, c[L // 2 : L // 2 + 1]), axis=0)
        k = np.concatenate((k, [L // 2]))
    phase = np.exp(1j * np.outer(theta.ravel(), k))
    out = np.tensordot(phase, c, axes=(1, 0))
    return out.reshape(theta.shape + samples.shape[1:])


@dataclass(frozen=True)
class PVKernel:
    """Odd kernel k(y), homogeneous of degree -d, with M x M values.

    ``evaluator`` maps points (P, d) to (P, M, M).  Oddness and homogeneity are
    checked on sample points at construction.
    """

    evaluator: Callable[[np.ndarray], np.ndarray]
    d: int
    M: int = 1
    name: str = "pv"
    tol: float = 1e-8

    def __post_init__(self):
        rng = np.random.default_rng(7)
        y = rng.standard_normal((32, self.d))
        k1 = self(y)
        km = self(-y)
        k2 = self(2.5 * y)
        scale = float(np.max(np.abs(k1))) or 1.0
        if np.max(np.abs(k1 + km)) > self.tol * scale:
            raise KernelNotOdd(f"kernel {self.name!r} is not odd")
        if np.max(np.abs(k2 * 2.5**self.d - k1)) > self.tol * scale:
            raise KernelNotHomogeneous(f"kernel {self.name!r} is not homogeneous of degree -{self.d}")

    def __call__(self, y) -> np.ndarray:
        y = np.atleast_2d(np.asarray(y, dtype=float))
        return np.asarray(self.evaluator(y), dtype=complex).reshape(len(y), self.M, self.M)

    @classmethod
    def from_profile(cls, evaluator, d: int, M: int = 1, name: str = "pv", samples: int = 256) -> "PVKernel":
        """Tabulate the angular profile once and interpolate (for costly evaluators)."""
        if d == 1:
            plus = np.asarray(evaluator(np.array([[1.0]])), dtype=complex).reshape(M, M)

            def ev(y, plus=plus):
                return np.sign(y[:, 0])[:, None, None] / np.abs(y[:, 0])[:, None, None] * plus

            return cls(ev, d, M, name)
        th = 2 * math.pi * np.arange(samples) / samples
        prof = np.asarray(evaluator(np.column_stack((np.cos(th), np.sin(th)))), dtype=complex).reshape(samples, M, M)

        def ev2(y, prof=prof):
            r = np.linalg.norm(y, axis=1)
            ang = np.arctan2(y[:, 1], y[:, 0])
            return _trig_interp(prof, ang) / (r**2)[:, None, None]

        return cls(ev2, d, M, name, tol=1e-6)


def riesz_kernel(d: int, s: int) -> PVKernel:
    """c_d y_s/|y|^{d+1}, the kernel of the -i xi_s/|xi| multiplier."""
    c = math.gamma((d + 1) / 2) / math.pi ** ((d + 1) / 2)

    def ev(y):
        r = np.linalg.norm(y, axis=1)
        return (c * y[:, s] / r ** (d + 1))[:, None, None]

    return PVKernel(ev, d, 1, f"riesz{s}")


def lattice_correction(k: PVKernel, radii=(64, 128, 256)) -> np.ndarray:
    """Z_l = lim_R [sum'_{|j|<=R} k(j) j_l - int_{[-R-1/2, R+1/2]^d} k(y) y_l dy], shape (d, M, M).

    The punctured trapezoid sum S then satisfies T g = S + h sum_l Z_l d_l g + O(h^3).
    """
    cached = k.__dict__.get("_zeta")
    if cached is not None:
        return cached
    if k.d == 1:
        Z = -k(np.array([[1.0]]))[0][None]
    else:
        g, gw = np.polynomial.legendre.leggauss(32)
        th = np.concatenate([q * math.pi / 4 + (g + 1) * math.pi / 8 for q in range(8)])
        tw = np.tile(gw * math.pi / 8, 8)
        dirs = np.column_stack((np.cos(th), np.sin(th)))
        rho1 = 1.0 / np.maximum(np.abs(dirs[:, 0]), np.abs(dirs[:, 1]))
        kd = k(dirs)  # k(theta), homogeneous degree -2; phi_l = k y_l has degree -1
        ang_int = np.einsum("q,q,ql,qab->lab", tw, rho1, dirs, kd)  # per unit half-width
        Rmax = max(radii)
        j = np.arange(-Rmax, Rmax + 1)
        J1, J2 = np.meshgrid(j, j, indexing="ij")
        pts = np.column_stack((J1.ravel(), J2.ravel())).astype(float)
        cheb = np.max(np.abs(pts), axis=1)
        keep = cheb > 0
        pts, cheb = pts[keep], cheb[keep]
        vals = np.einsum("pl,pab->plab", pts, k(pts))
        zs = []
        for R in radii:
            sel = cheb <= R
            zs.append(vals[sel].sum(axis=0) - (R + 0.5) * ang_int)
        z1, z2, z3 = zs
        # Richardson in 1/R with doubling: remove O(1/R) then O(1/R^2)
        a1, a2 = 2 * z2 - z1, 2 * z3 - z2
        Z = (4 * a2 - a1) / 3
    object.__setattr__(k, "_zeta", Z)
    return Z


def _shift(v: np.ndarray, offset: Sequence[int]) -> np.ndarray:
    """w[x] = v[x - offset] with zeros brought in from outside the box."""
    out = np.zeros_like(v)
    src, dst = [], []
    for o, n in zip(offset, v.shape):
        if o >= 0:
            dst.append(slice(o, n))
            src.append(slice(0, n - o))
        else:
            dst.append(slice(0, n + o))
            src.append(slice(-o, n))
    out[tuple(dst)] = v[tuple(src)]
    return out


def pv_apply(k: PVKernel, g: BoundaryField, near: int = 8, correct: bool = True) -> BoundaryField:
    """T g(x) = p.v. int k(y) g(x - y) dy on the grid.

    Punctured trapezoid sum (near offsets |j|_inf <= near paired as
    k(jh)[g(x - jh) - g(x + jh)], far offsets by FFT convolution) plus the
    lattice-zeta correction h sum_l Z_l d_l g, which removes the O(h) error of
    the punctured rule; the remainder is O(h^3).
    """
    grid = g.grid
    if k.d != grid.d or k.M != g.M:
        raise ValueError("kernel and field dimensions do not match")
    d, N, h = grid.d, grid.N, grid.h
    v = np.asarray(g.values)
    idx = np.arange(-(N - 1), N)
    axes = np.meshgrid(*([idx] * d), indexing="ij")
    J = np.stack(axes, axis=-1)
    cheb = np.max(np.abs(J), axis=-1)
    far_mask = cheb > near
    kv = np.zeros(J.shape[:-1] + (k.M, k.M), dtype=complex)
    kv[far_mask] = k(J[far_mask] * h) * h**d
    out = _conv_matrix_kernel(kv, v, d)
    # near zone: half of the punctured box, each offset paired with its reflection
    rng_near = range(-near, near + 1)
    offs = np.array(np.meshgrid(*([rng_near] * d), indexing="ij")).reshape(d, -1).T
    lead = np.array([o[np.flatnonzero(o)[0]] if np.any(o) else 0 for o in offs])
    offs = offs[lead > 0]
    kvals = k(offs * h) * h**d
    for off, kj in zip(offs, kvals):
        diff = _shift(v, off) - _shift(v, -off)
        out += diff @ kj.T
    meta = {"near": near}
    if correct:
        Z = lattice_correction(k)
        grads = gradient(g, "fd")
        corr = sum(np.einsum("ga,...a->...g", Z[l], np.asarray(grads[l].values)) for l in range(d))
        out = out + h * corr
        meta["correction_norm"] = float(np.max(np.abs(h * corr)))
    return BoundaryField(grid, out, "schwartz_like", meta)


# nontangential maximal function


@dataclass(frozen=True)
class ConeSpec:
    kappa: float
    t_samples: tuple

    @classmethod
    def geometric(cls, grid: GridSpec, kappa: float = 1.0, per_octave: int = 2) -> "ConeSpec":
        # dyadic heights h 2^(k/per_octave): refining per_octave keeps every old height
        tmin = grid.h
        octaves = int(math.ceil(math.log2(10 * grid.R / tmin)))
        k = np.arange(per_octave * octaves + 1)
        return cls(kappa, tuple(tmin * 2.0 ** (k / per_octave)))


def nt_max_sampled(u_eval: Callable, cone: ConeSpec, grid: GridSpec) -> BoundaryField:
    """Sampled nontangential maximal function.

    For each height t, |u(y', t)| on the grid is max-filtered over the disc
    |y' - x'| < kappa t; the result is the max over heights (a lower bound for
    the true maximal function, nondecreasing under sample refinement).
    """
    pts = grid.points()
    best = np.zeros(grid.shape)
    h = grid.h
    for t in cone.t_samples:
        vals = np.asarray(u_eval(pts, t)).reshape(len(pts), -1)
        mag = np.linalg.norm(vals, axis=1).reshape(grid.shape)
        rad = cone.kappa * t / h
        m = int(min(math.ceil(rad), grid.N))
        off = np.arange(-m, m + 1)
        axes = np.meshgrid(*([off] * grid.d), indexing="ij")
        foot = np.sqrt(sum(a.astype(float) ** 2 for a in axes)) < rad
        filt = ndimage.maximum_filter(mag, footprint=foot, mode="constant", cval=0.0)
        np.maximum(best, filt, out=best)
    return BoundaryField(grid, best, "schwartz_like", {"kappa": cone.kappa, "heights": len(cone.t_samples)})


# I/O


def write_field(f: BoundaryField, path) -> tuple:
    """CSV (coordinates, Re/Im per component) plus a JSON header next to it."""
    path = Path(path)
    header = path.with_suffix(".json")
    path.parent.mkdir(parents=True, exist_ok=True)
    pts = f.grid.points()
    vals = np.asarray(f.values).reshape(-1, f.M)
    names = [f"x{i + 1}" for i in range(f.grid.d)]
    for a in range(f.M):
        names += [f"re{a + 1}", f"im{a + 1}"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for p, row in zip(pts, vals):
            cells = [repr(float(c)) for c in p]
            for z in row:
                cells += [repr(float(z.real)), repr(float(z.imag))]
            w.writerow(cells)
    with open(header, "w", encoding="utf-8") as fh:
        json.dump({"grid": f.grid.to_json(), "M": f.M, "decay_class": f.decay_class}, fh, indent=2, sort_keys=True)
    return path, header


def read_field(path) -> BoundaryField:
    path = Path(path)
    try:
        with open(path.with_suffix(".json"), encoding="utf-8") as fh:
            head = json.load(fh)
        grid = GridSpec.from_json(head["grid"])
        M = int(head["M"])
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))[1:]
    except (OSError, KeyError, ValueError) as exc:
        raise ConfigError(f"cannot read field {path}: {exc}", field="field.file")
    data = np.array([[float(c) for c in r] for r in rows])
    if data.shape != (grid.N**grid.d, grid.d + 2 * M):
        raise ConfigError(f"field file {path} has shape {data.shape}", field="field.file")
    comp = data[:, grid.d :: 2] + 1j * data[:, grid.d + 1 :: 2]
    return BoundaryField(grid, comp.reshape(grid.shape + (M,)), head.get("decay_class", "schwartz_like"))
