"""Poisson kernels P^L, their extensions K^L(x', t) and conjugate kernels K_j."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.signal import fftconvolve

from .elliptic import EllipticSystem, conormal_residual, sphere_area, unit_sphere_samples
from .errors import ConormalViolated, NonpositiveTime, UnsupportedRoute
from .fundsol import FundamentalSolution, build_fundsol

__all__ = [
    "PoissonKernel",
    "ConjugateKernel",
    "build_kernel",
    "build_conjugate",
    "eval_K",
    "verify_normalization",
    "verify_annihilation",
    "decay_constant",
    "kernel_semigroup_gap",
    "jump_coefficient",
    "KERNEL_ROUTES",
]

KERNEL_ROUTES = ("closed_harmonic", "closed_scalar", "closed_lame", "from_fundsol")
CONORMAL_GATE = 1e-6


def _boundary_probe(n: int) -> np.ndarray:
    """Deterministic x' samples (with x_n = 0) for the conormal gate."""
    if n == 2:
        pts = np.array([[1.0], [-0.7], [2.5], [-3.0]])
    else:
        dirs = unit_sphere_samples(n - 1, 16) if n > 3 else unit_sphere_samples(2, 12)
        pts = dirs * np.linspace(0.5, 3.0, len(dirs))[:, None]
    return np.hstack((pts, np.zeros((len(pts), 1))))


@dataclass(frozen=True)
class PoissonKernel:
    system: EllipticSystem
    route: str
    fundsol: Optional[FundamentalSolution] = None

    @property
    def n(self) -> int:
        return self.system.n

    @property
    def M(self) -> int:
        return self.system.M

    def P_batch(self, xp) -> np.ndarray:
        """P(x') at each row of ``xp`` (shape (P, n-1)); returns (P, M, M)."""
        xp = np.asarray(xp, dtype=float).reshape(-1, self.n - 1)
        n = self.n
        omega = sphere_area(n)
        if self.route == "closed_harmonic":
            val = (2.0 / omega) * (1.0 + np.sum(xp**2, axis=1)) ** (-n / 2.0)
            return val[:, None, None].astype(complex)
        if self.route == "closed_scalar":
            fs = self.fundsol
            X = np.hstack((xp, np.ones((len(xp), 1))))
            _, q = fs._scalar_q(X)
            val = 2.0 / (omega * fs.info["sqrt_det"]) * q ** (-n / 2.0)
            return val[:, None, None]
        if self.route == "closed_lame":
            mu, lam = self.system.params["mu"], self.system.params["lam"]
            X = np.hstack((xp, np.ones((len(xp), 1))))
            rho2 = 1.0 + np.sum(xp**2, axis=1)
            iso = (4.0 * mu / (3 * mu + lam)) / omega * rho2 ** (-n / 2.0)
            aniso = ((mu + lam) / (3 * mu + lam)) * (2.0 * n / omega) * rho2 ** (-(n + 2) / 2.0)
            out = iso[:, None, None] * np.eye(n) + aniso[:, None, None] * np.einsum("pa,pb->pab", X, X)
            return out.astype(complex)
        X = np.hstack((xp, np.ones((len(xp), 1))))
        return self._two_a_grad(X)

    def _two_a_grad(self, X: np.ndarray) -> np.ndarray:
        """2 a^{ba}_{rn} d_r E_{gb}(X) arranged as [p, gamma, alpha]."""
        a = self.system.tensor.a
        grad = self.fundsol.gradE_batch(X)
        return 2.0 * np.tensordot(grad.transpose(0, 2, 1, 3), a[:, self.n - 1], axes=([2, 3], [0, 1]))

    def eval_P(self, xp) -> np.ndarray:
        return self.P_batch(np.atleast_1d(np.asarray(xp, dtype=float)))[0]

    def K_batch(self, xp, t) -> np.ndarray:
        """K(x', t) = t^{1-n} P(x'/t) for arrays xp (P, n-1) and t (P,) or scalar."""
        xp = np.asarray(xp, dtype=float).reshape(-1, self.n - 1)
        t = np.broadcast_to(np.asarray(t, dtype=float), (len(xp),))
        if np.any(t <= 0):
            raise NonpositiveTime("K(x', t) needs t > 0")
        return (t ** (1 - self.n))[:, None, None] * self.P_batch(xp / t[:, None])

    def P_t(self, xp, t: float) -> np.ndarray:
        return self.K_batch(xp, t)


def build_kernel(
    system: EllipticSystem,
    route: Optional[str] = None,
    fundsol: Optional[FundamentalSolution] = None,
) -> PoissonKernel:
    """Poisson kernel evaluator.

    The ``from_fundsol`` route computes P = 2 a dE(., 1) and is only offered when
    the conormal residual of the tensor is below 1e-6.
    """
    if route is None:
        if system.is_laplacian:
            route = "closed_harmonic"
        elif system.M == 1:
            route = "closed_scalar"
        elif system.kind == "lame":
            route = "closed_lame"
        else:
            route = "from_fundsol"
    if route not in KERNEL_ROUTES:
        raise UnsupportedRoute(f"unknown kernel route {route!r}")
    if route == "closed_harmonic" and not system.is_laplacian:
        raise UnsupportedRoute("closed_harmonic is the Laplacian kernel")
    if route == "closed_scalar":
        if system.M != 1:
            raise UnsupportedRoute("closed_scalar needs M = 1")
        fundsol = build_fundsol(system, "closed_scalar")
    if route == "closed_lame" and system.kind != "lame":
        raise UnsupportedRoute("closed_lame needs a Lame system")
    if route == "from_fundsol":
        if fundsol is None:
            fundsol = build_fundsol(system)
        res = conormal_residual(system, fundsol, _boundary_probe(system.n))
        if res > CONORMAL_GATE:
            raise ConormalViolated(f"conormal residual {res:.3e} exceeds {CONORMAL_GATE:g}")
    return PoissonKernel(system=system, route=route, fundsol=fundsol)


def eval_K(kernel: PoissonKernel, xp, t: float, check: bool = True) -> np.ndarray:
    """K(x', t); on the from_fundsol route also checks t^{1-n}P(x'/t) = 2 a dE(x', t)."""
    if t <= 0:
        raise NonpositiveTime("K(x', t) needs t > 0")
    xp = np.atleast_1d(np.asarray(xp, dtype=float))
    val = kernel.K_batch(xp[None, :], t)[0]
    if check and kernel.route == "from_fundsol":
        direct = kernel._two_a_grad(np.append(xp, t)[None, :])[0]
        gap = np.max(np.abs(direct - val))
        # finite-difference gradients on the quadrature route carry ~1e-8 noise
        tol = 1e-10 if kernel.fundsol.route != "quadrature" else 1e-6
        if gap > tol * max(1.0, float(np.max(np.abs(val)))):
            raise AssertionError(f"dilation and direct gradient forms disagree by {gap:.3e}")
    return val


def _trapezoid_grid(R: float, h: float, d: int):
    m = int(round(2 * R / h))
    x = np.linspace(-R, R, m + 1)
    w = np.full(m + 1, h)
    w[0] = w[-1] = h / 2
    if d == 1:
        return x[:, None], w
    X, Y = np.meshgrid(x, x, indexing="ij")
    return np.column_stack((X.ravel(), Y.ravel())), np.outer(w, w).ravel()


def _tail(kernel: PoissonKernel, R: float):
    """Integral of P over the complement of [-R, R]^{n-1} from the fitted far field.

    Fits C(theta) = P(r theta) r^n at r = R and R/2 and extrapolates
    C_inf = (4 C(R) - C(R/2)) / 3 (next-order decay is r^{-2} relative).
    """
    n = kernel.n
    if n == 2:
        dirs = np.array([[1.0], [-1.0]])
        cR = kernel.P_batch(dirs * R) * R**n
        cH = kernel.P_batch(dirs * R / 2) * (R / 2) ** n
        cinf = (4 * cR - cH) / 3
        tail = cinf.sum(axis=0) / R
        alt = cR.sum(axis=0) / R
        return tail, np.abs(tail - alt)
    if n != 3:
        raise UnsupportedRoute("normalization tail implemented for n in {2, 3}")
    g, gw = np.polynomial.legendre.leggauss(32)
    thetas, weights = [], []
    for k in range(8):
        lo = k * math.pi / 4
        thetas.append(lo + (g + 1) * math.pi / 8)
        weights.append(gw * math.pi / 8)
    th = np.concatenate(thetas)
    w = np.concatenate(weights)
    dirs = np.column_stack((np.cos(th), np.sin(th)))
    inv_rho = np.maximum(np.abs(dirs[:, 0]), np.abs(dirs[:, 1])) / R
    cR = kernel.P_batch(dirs * R) * R**n
    cH = kernel.P_batch(dirs * R / 2) * (R / 2) ** n
    cinf = (4 * cR - cH) / 3
    tail = np.einsum("q,q,qab->ab", w, inv_rho, cinf)
    alt = np.einsum("q,q,qab->ab", w, inv_rho, cR)
    return tail, np.abs(tail - alt)


def verify_normalization(kernel: PoissonKernel, R: float = 40.0, h: float = 0.1, t: float = 1.0) -> dict:
    """Trapezoid integral of P_t over [-R, R]^{n-1} plus fitted far-field tail.

    Returns the integral, the entrywise deviation |integral - I|, and the tail
    uncertainty (difference between the extrapolated and raw tail fits).
    """
    if R < 20 or h > 0.1:
        raise ValueError("need R >= 20 and h <= 0.1")
    d = kernel.n - 1
    pts, w = _trapezoid_grid(R, h, d)
    box = np.zeros((kernel.M, kernel.M), dtype=complex)
    for chunk in range(0, len(pts), 200_000):
        sl = slice(chunk, chunk + 200_000)
        box += np.einsum("p,pab->ab", w[sl], kernel.K_batch(pts[sl], t))
    # P_t(x') = t^{1-n} P(x'/t): the tail outside the box is the tail of P outside R/t
    tail, unc = _tail(kernel, R / t)
    integral = box + tail
    dev = np.abs(integral - np.eye(kernel.M))
    return {
        "integral": integral,
        "box_integral": box,
        "tail": tail,
        "tail_uncertainty": unc,
        "deviation": dev,
        "max_deviation": float(dev.max()),
    }


def verify_annihilation(kernel: PoissonKernel, points, step: float = 1e-3, order: int = 4) -> float:
    """max relative residual of a^{ab}_{rs} d_r d_s K_{b c} at interior points (t >= 0.2)."""
    from .numdiff import central_weights

    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if np.any(pts[:, -1] < 0.2):
        raise ValueError("annihilation points need t >= 0.2")
    n, M = kernel.n, kernel.M
    a = kernel.system.tensor.a
    o1, w1 = central_weights(1, order)
    o2, w2 = central_weights(2, order)
    eye = np.eye(n)

    def K(X):
        return kernel.K_batch(X[:, :-1], X[:, -1])

    worst = 0.0
    for x in pts:
        hess = np.zeros((n, n, M, M), dtype=complex)
        for i in range(n):
            for j in range(i, n):
                if i == j:
                    P = np.array([x + o * step * eye[i] for o in o2])
                    wv = np.asarray(w2)
                else:
                    combos = [(oi, oj, wi * wj) for oi, wi in zip(o1, w1) for oj, wj in zip(o1, w1) if wi * wj]
                    P = np.array([x + step * (oi * eye[i] + oj * eye[j]) for oi, oj, _ in combos])
                    wv = np.array([c[2] for c in combos])
                hess[i, j] = hess[j, i] = np.einsum("s,sab->ab", wv, K(P)) / step**2
        res = np.einsum("rsab,rsbc->ac", a, hess)
        scale = np.max(np.abs(a)) * np.max(np.abs(hess))
        worst = max(worst, float(np.max(np.abs(res)) / scale))
    return worst


def decay_constant(kernel: PoissonKernel, rmax: float = 1e3, samples: int = 400) -> float:
    """sup over |x'| <= rmax of ||P(x')|| (1 + |x'|^2)^{n/2} on a log-radial sample."""
    n = kernel.n
    radii = np.concatenate(([0.0], np.geomspace(1e-2, rmax, samples)))
    if n == 2:
        dirs = np.array([[1.0], [-1.0]])
    else:
        ang = 2 * math.pi * np.arange(16) / 16
        dirs = np.column_stack((np.cos(ang), np.sin(ang)))
        if n > 3:
            dirs = np.hstack((dirs, np.zeros((len(dirs), n - 3))))
    pts = (radii[:, None, None] * dirs[None, :, :]).reshape(-1, n - 1)
    vals = kernel.P_batch(pts)
    norms = np.linalg.norm(vals, ord=2, axis=(1, 2))
    return float(np.max(norms * (1.0 + np.sum(pts**2, axis=1)) ** (n / 2.0)))


def kernel_semigroup_gap(
    kernel: PoissonKernel, t1: float = 1.0, t2: float = 1.0, R: float = 200.0, h: float = 0.01, window: float = 10.0
) -> float:
    """sup over |x'| <= window of |P_{t1} * P_{t2} - P_{t1+t2}| by discrete convolution (n = 2)."""
    if kernel.n != 2:
        raise UnsupportedRoute("kernel-level semigroup gap is implemented for n = 2")
    m = int(round(2 * R / h))
    x = np.linspace(-R, R, m + 1)
    k1 = kernel.K_batch(x[:, None], t1)
    k2 = kernel.K_batch(x[:, None], t2)
    M = kernel.M
    conv = np.zeros((len(x), M, M), dtype=complex)
    for g in range(M):
        for a in range(M):
            for b in range(M):
                conv[:, g, a] += h * fftconvolve(k1[:, g, b], k2[:, b, a], mode="same")
    direct = kernel.K_batch(x[:, None], t1 + t2)
    mask = np.abs(x) <= window
    return float(np.max(np.abs(conv[mask] - direct[mask])))


@dataclass(frozen=True)
class ConjugateKernel:
    """K_j on R^n minus the origin (j is a 0-based tangential index)."""

    j: int
    base: PoissonKernel
    route: str

    @property
    def n(self) -> int:
        return self.base.n

    def eval_batch(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        n = self.n
        omega = sphere_area(n)
        xj = X[:, self.j]
        if self.route == "closed_scalar":
            fs = self.base.fundsol
            if fs is None:
                fs = build_fundsol(self.base.system, "closed_scalar")
            _, q = fs._scalar_q(X)
            val = 2.0 * xj / (omega * fs.info["sqrt_det"] * q ** (n / 2.0))
            return val[:, None, None]
        mu, lam = self.base.system.params["mu"], self.base.system.params["lam"]
        r = np.linalg.norm(X, axis=1)
        iso = (4.0 * mu / (3 * mu + lam)) * xj / (omega * r**n)
        aniso = ((mu + lam) / (3 * mu + lam)) * (2.0 * n / omega) * xj / r ** (n + 2)
        out = iso[:, None, None] * np.eye(n) + aniso[:, None, None] * np.einsum("pa,pb->pab", X, X)
        return out.astype(complex)

    def boundary(self, xp) -> np.ndarray:
        """K_j(x', 0) for rows of xp; the PV kernel of the conjugate generator route."""
        xp = np.atleast_2d(np.asarray(xp, dtype=float))
        return self.eval_batch(np.hstack((xp, np.zeros((len(xp), 1)))))

    def __call__(self, X):
        return self.eval_batch(X)


def build_conjugate(kernel: PoissonKernel, j: int) -> ConjugateKernel:
    if not 0 <= j < kernel.n - 1:
        raise ValueError(f"j must be a tangential index in 0..{kernel.n - 2}")
    if kernel.system.M == 1:
        base = kernel
        if base.fundsol is None or base.fundsol.route != "closed_scalar":
            base = PoissonKernel(kernel.system, kernel.route, build_fundsol(kernel.system, "closed_scalar"))
        return ConjugateKernel(j=j, base=base, route="closed_scalar")
    if kernel.system.kind == "lame":
        return ConjugateKernel(j=j, base=kernel, route="closed_lame")
    raise UnsupportedRoute("no closed conjugate kernel for general systems")


def jump_coefficient(conj: ConjugateKernel, nodes: int = 64) -> np.ndarray:
    """(1/2i) times the Fourier transform of K_j at -e_n, from the kernel itself.

    For an odd kernel homogeneous of degree 1-n this equals
    (1/2) * integral over the upper hemisphere of [K_j(th', th_n) - K_j(th', -th_n)] / th_n,
    evaluated with a Gauss rule in th_n and a trapezoid rule around the axis.
    """
    n = conj.n
    g, gw = np.polynomial.legendre.leggauss(nodes)
    c = 0.5 * (g + 1.0)
    cw = 0.5 * gw
    if n == 2:
        # upper half circle: th = (sin phi, cos phi), phi in (-pi/2, pi/2), weight dphi = dc / sqrt(1-c^2)
        phi = 0.5 * math.pi * g
        w = 0.5 * math.pi * gw
        up = np.column_stack((np.sin(phi), np.cos(phi)))
        dn = up * np.array([1.0, -1.0])
        diff = conj.eval_batch(up) - conj.eval_batch(dn)
        return 0.5 * np.einsum("q,qab->ab", w / up[:, 1], diff)
    if n != 3:
        raise UnsupportedRoute("jump coefficient implemented for n in {2, 3}")
    nphi = 4 * nodes
    phi = 2 * math.pi * np.arange(nphi) / nphi
    C, PHI = np.meshgrid(c, phi, indexing="ij")
    S = np.sqrt(1 - C**2)
    up = np.column_stack(((S * np.cos(PHI)).ravel(), (S * np.sin(PHI)).ravel(), C.ravel()))
    dn = up * np.array([1.0, 1.0, -1.0])
    w = np.outer(cw, np.full(nphi, 2 * math.pi / nphi)).ravel()
    diff = conj.eval_batch(up) - conj.eval_batch(dn)
    return 0.5 * np.einsum("q,qab->ab", w / up[:, 2], diff)
