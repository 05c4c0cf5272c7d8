"""Canonical fundamental solutions: closed forms and the plane-wave quadrature route."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .elliptic import EllipticSystem, make_system, sphere_area, symbol_values
from .errors import BranchAmbiguity, OriginSingularity, UnsupportedRoute
from .numdiff import central_weights

__all__ = [
    "FundamentalSolution",
    "build_fundsol",
    "eval_E",
    "eval_gradE",
    "quadrature_selfcheck",
    "pde_residual",
    "ROUTES",
]

ROUTES = ("closed_scalar", "closed_lame", "quadrature")


def _as_point(x, n: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (n,):
        raise ValueError(f"x must have shape ({n},), got {x.shape}")
    if not np.any(x):
        raise OriginSingularity("fundamental solution is singular at x = 0")
    return x


def _scalar_data(system: EllipticSystem):
    a = system.tensor.a[:, :, 0, 0]
    A_sym = 0.5 * (a + a.T)
    det = complex(np.linalg.det(A_sym))
    branch_flag = det.imag == 0.0 and det.real < 0.0
    return A_sym, np.linalg.inv(A_sym), np.sqrt(det), branch_flag


def _frame(xhat: np.ndarray):
    """Orthonormal u, v completing xhat (3D)."""
    k = int(np.argmin(np.abs(xhat)))
    e = np.zeros(3)
    e[k] = 1.0
    u = np.cross(xhat, e)
    u /= np.linalg.norm(u)
    return u, np.cross(xhat, u)


@dataclass(frozen=True)
class FundamentalSolution:
    system: EllipticSystem
    route: str
    quadrature_nodes: int = 0
    fd_step_scale: float = 0.0
    fd_order: int = 6
    outer: str = "analytic"
    info: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.route not in ROUTES:
            raise UnsupportedRoute(f"unknown route {self.route!r}")
        n = self.system.n
        info = dict(self.info)
        if self.route == "closed_scalar":
            if self.system.M != 1:
                raise UnsupportedRoute("closed_scalar needs M = 1")
            A_sym, A_inv, sqrt_det, flag = _scalar_data(self.system)
            info.update(A_inv=A_inv, sqrt_det=sqrt_det, branch_flag=flag)
        elif self.route == "closed_lame":
            if self.system.kind != "lame":
                raise UnsupportedRoute("closed_lame needs a Lame system")
        else:
            if n not in (2, 3):
                raise UnsupportedRoute("quadrature route is implemented for n in {2, 3}")
            if self.quadrature_nodes <= 0 or self.fd_step_scale <= 0:
                raise ValueError("quadrature route needs quadrature_nodes and fd_step_scale")
            if self.outer not in ("fd", "analytic"):
                raise ValueError("outer must be 'fd' or 'analytic'")
            info["nodes"] = _reference_nodes(n, self.quadrature_nodes)
            info["ring"] = 2.0 * math.pi * np.arange(max(64, self.quadrature_nodes // 8)) / max(
                64, self.quadrature_nodes // 8
            )
        object.__setattr__(self, "info", info)

    @property
    def n(self) -> int:
        return self.system.n

    @property
    def M(self) -> int:
        return self.system.M

    def eval_E(self, x) -> np.ndarray:
        return eval_E(self, x)

    def eval_gradE(self, x) -> np.ndarray:
        return eval_gradE(self, x)

    def E_batch(self, pts: np.ndarray) -> np.ndarray:
        """E at each row of ``pts``; shape (P, M, M)."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        if np.any(~np.any(pts, axis=1)):
            raise OriginSingularity("fundamental solution is singular at x = 0")
        if self.route == "closed_scalar":
            return self._scalar_E(pts)
        if self.route == "closed_lame":
            return self._lame_E(pts)
        return self._quad_E(pts)

    def gradE_batch(self, pts: np.ndarray) -> np.ndarray:
        """grad E at each row of ``pts``; shape (P, n, M, M), index [p, r, gamma, beta]."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        if np.any(~np.any(pts, axis=1)):
            raise OriginSingularity("fundamental solution is singular at x = 0")
        if self.route == "closed_scalar":
            return self._scalar_grad(pts)
        if self.route == "closed_lame":
            return self._lame_grad(pts)
        return self._quad_grad(pts)

    # closed scalar

    def _scalar_q(self, pts):
        A_inv = self.info["A_inv"]
        Ax = pts @ A_inv.T
        q = np.einsum("pr,pr->p", Ax, pts)
        if np.any(q.real <= 0):
            raise BranchAmbiguity("(A_sym^{-1} x).x has nonpositive real part")
        return Ax, q

    def _scalar_E(self, pts):
        n = self.n
        _, q = self._scalar_q(pts)
        omega = sphere_area(n)
        sd = self.info["sqrt_det"]
        if n == 2:
            E = np.log(q) / (4.0 * math.pi * sd)
        else:
            E = -(q ** ((2.0 - n) / 2.0)) / ((n - 2) * omega * sd)
        return E[:, None, None]

    def _scalar_grad(self, pts):
        n = self.n
        Ax, q = self._scalar_q(pts)
        omega = sphere_area(n)
        g = (q ** (-n / 2.0))[:, None] * Ax / (omega * self.info["sqrt_det"])
        return g[:, :, None, None]

    # closed Lame

    def _lame_consts(self):
        mu, lam = self.system.params["mu"], self.system.params["lam"]
        return mu, lam, sphere_area(self.n)

    def _lame_E(self, pts):
        n = self.n
        mu, lam, omega = self._lame_consts()
        r = np.linalg.norm(pts, axis=1)
        eye = np.eye(n)
        outer = np.einsum("pa,pb->pab", pts, pts)
        if n == 2:
            pre = 1.0 / (4.0 * math.pi * mu * (2 * mu + lam))
            E = pre * (
                (3 * mu + lam) * np.log(r)[:, None, None] * eye
                - (mu + lam) * outer / (r**2)[:, None, None]
            )
        else:
            pre = -1.0 / (2.0 * mu * (2 * mu + lam) * omega)
            E = pre * (
                (3 * mu + lam) / (n - 2) * eye / (r ** (n - 2))[:, None, None]
                + (mu + lam) * outer / (r**n)[:, None, None]
            )
        return E.astype(complex)

    def _lame_grad(self, pts):
        n = self.n
        mu, lam, omega = self._lame_consts()
        r = np.linalg.norm(pts, axis=1)
        d = np.eye(n)
        rn = (r**n)[:, None, None, None]
        X = pts[:, :, None, None]  # x_r
        Xg = pts[:, None, :, None]  # x_gamma
        Xb = pts[:, None, None, :]  # x_beta
        t1 = -(3 * mu + lam) * d[None, None, :, :] * X
        t2 = (mu + lam) * d[None, :, :, None] * Xb
        t3 = (mu + lam) * d[None, :, None, :] * Xg
        t4 = -n * (mu + lam) * Xg * X * Xb / (r**2)[:, None, None, None]
        pre = -1.0 / (2.0 * mu * (2 * mu + lam) * omega)
        return (pre * (t1 + t2 + t3 + t4) / rn).astype(complex)

    # quadrature route

    def _chunked(self, fn, pts: np.ndarray, nodes: int) -> np.ndarray:
        """Apply ``fn`` in point blocks so the (points x nodes) work arrays stay small."""
        step = max(1, _CHUNK_BUDGET // max(1, nodes))
        if len(pts) <= step:
            return fn(pts)
        return np.concatenate([fn(pts[i : i + step]) for i in range(0, len(pts), step)])

    def _sphere_integral(self, pts: np.ndarray) -> np.ndarray:
        """F(x) (n=3) or G(x) (n=2) for each point, shape (P, M, M)."""
        return self._chunked(self._sphere_block, pts, len(self.info["nodes"][-1]))

    def _sphere_block(self, pts: np.ndarray) -> np.ndarray:
        n = self.n
        ref = self.info["nodes"]
        radius = np.linalg.norm(pts, axis=1)
        xhat = pts / radius[:, None]
        if n == 3:
            c, s, cphi, sphi, w = ref
            frames = np.array([_frame(xh) for xh in xhat])  # (P, 2, 3)
            u, v = frames[:, 0], frames[:, 1]
            xis = (
                (s * cphi)[None, :, None] * u[:, None, :]
                + (s * sphi)[None, :, None] * v[:, None, :]
                + c[None, :, None] * xhat[:, None, :]
            )
            scal = radius[:, None] * np.abs(c)[None, :]
        else:
            phi, w = ref
            perp = np.column_stack((-xhat[:, 1], xhat[:, 0]))
            xis = np.cos(phi)[None, :, None] * xhat[:, None, :] + np.sin(phi)[None, :, None] * perp[:, None, :]
            proj = radius[:, None] * np.abs(np.cos(phi))[None, :]
            scal = proj**2 * np.log(proj)
        inv = small_inv(-symbol_values(self.system.tensor, xis))
        return np.einsum("q,pq,pqab->pab", w, scal, inv)

    def _ring_E(self, pts):
        return self._chunked(self._ring_block, pts, len(self.info["ring"]))

    def _ring_block(self, pts):
        """Outer Laplacian taken under the integral.

        n=3: the sphere integral collapses to the great circle orthogonal to x.
        n=2: the kernel becomes (2 ln|x.xi| + 3); the ln|cos| weight is
        integrated exactly against the Fourier coefficients of L(xi)^{-1}.
        """
        n = self.n
        phi = self.info["ring"]
        N = len(phi)
        radius = np.linalg.norm(pts, axis=1)
        xhat = pts / radius[:, None]
        if n == 3:
            frames = np.array([_frame(xh) for xh in xhat])
            u, v = frames[:, 0], frames[:, 1]
            xis = np.cos(phi)[None, :, None] * u[:, None, :] + np.sin(phi)[None, :, None] * v[:, None, :]
            inv = small_inv(-symbol_values(self.system.tensor, xis))
            ring = inv.mean(axis=1) * 2.0 * math.pi
            return -ring / (8.0 * math.pi**2 * radius[:, None, None])
        perp = np.column_stack((-xhat[:, 1], xhat[:, 0]))
        xis = np.cos(phi)[None, :, None] * xhat[:, None, :] + np.sin(phi)[None, :, None] * perp[:, None, :]
        inv = small_inv(-symbol_values(self.system.tensor, xis))
        coef = np.fft.fft(inv, axis=1) / N  # g(phi) = sum_k coef_k e^{ik phi}
        # int_0^{2pi} ln|cos phi| e^{ik phi} dphi: -2pi ln2 (k=0), -pi(-1)^m/m (k=+-2m)
        k = np.fft.fftfreq(N, 1.0 / N).astype(int)
        moments = np.zeros(N)
        moments[k == 0] = -2.0 * math.pi * math.log(2.0)
        even = (k % 2 == 0) & (k != 0)
        m = np.abs(k[even]) // 2
        moments[even] = -math.pi * (-1.0) ** m / m
        log_part = np.einsum("k,pkab->pab", moments, coef)
        mean = 2.0 * math.pi * coef[:, 0]
        total = 2.0 * log_part + (2.0 * np.log(radius)[:, None, None] + 3.0) * mean
        return total / (8.0 * math.pi**2)

    def _quad_E(self, pts):
        n = self.n
        if self.outer == "analytic":
            return self._ring_E(pts)
        offsets, weights = central_weights(2, self.fd_order)
        steps = self.fd_step_scale * np.linalg.norm(pts, axis=1)
        stencil = []
        for i in range(n):
            for o in offsets:
                e = np.zeros(n)
                e[i] = o
                stencil.append(e)
        stencil = np.array(stencil)  # (S, n)
        allpts = pts[:, None, :] + steps[:, None, None] * stencil[None, :, :]
        vals = self._sphere_integral(allpts.reshape(-1, n)).reshape(len(pts), len(stencil), self.M, self.M)
        wts = np.tile(np.asarray(weights), n)
        lap = np.einsum("s,psab->pab", wts, vals) / (steps**2)[:, None, None]
        if n == 3:
            return -lap / (16.0 * math.pi**2)
        return lap / (8.0 * math.pi**2)

    def _quad_grad(self, pts):
        n = self.n
        offsets, weights = central_weights(1, 4)
        steps = self.fd_step_scale * np.linalg.norm(pts, axis=1)
        out = np.zeros((len(pts), n, self.M, self.M), dtype=complex)
        for i in range(n):
            for o, w in zip(offsets, weights):
                if w == 0.0:
                    continue
                shifted = pts.copy()
                shifted[:, i] += o * steps
                out[:, i] += w * self._quad_E(shifted)
            out[:, i] /= steps[:, None, None]
        return out


_CHUNK_BUDGET = 1 << 18  # points x nodes per block


def small_inv(m: np.ndarray) -> np.ndarray:
    """Batched inverse; explicit cofactors for M <= 3, LAPACK otherwise."""
    M = m.shape[-1]
    if M == 1:
        return 1.0 / m
    if M == 2:
        a, b, c, d = m[..., 0, 0], m[..., 0, 1], m[..., 1, 0], m[..., 1, 1]
        det = a * d - b * c
        out = np.stack((np.stack((d, -b), -1), np.stack((-c, a), -1)), -2)
        return out / det[..., None, None]
    if M == 3:
        cof = np.empty_like(m)
        for i in range(3):
            for j in range(3):
                i1, i2 = (i + 1) % 3, (i + 2) % 3
                j1, j2 = (j + 1) % 3, (j + 2) % 3
                cof[..., j, i] = m[..., i1, j1] * m[..., i2, j2] - m[..., i1, j2] * m[..., i2, j1]
        det = np.einsum("...j,...j->...", m[..., 0, :], cof[..., :, 0])
        return cof / det[..., None, None]
    return np.linalg.inv(m)


def _reference_nodes(n: int, count: int):
    """Split product rule aligned with the singular set x.xi = 0."""
    if n == 3:
        # count ~ 2 * ng * nphi with nphi = 4 * ng
        ng = max(4, int(round(math.sqrt(count / 8.0))))
        nphi = 4 * ng
        g, gw = np.polynomial.legendre.leggauss(ng)
        c = np.concatenate((0.5 * (g + 1.0), 0.5 * (g - 1.0)))
        cw = np.concatenate((0.5 * gw, 0.5 * gw))
        phi = 2.0 * math.pi * np.arange(nphi) / nphi
        C, PHI = np.meshgrid(c, phi, indexing="ij")
        W = np.outer(cw, np.full(nphi, 2.0 * math.pi / nphi))
        S = np.sqrt(1.0 - C**2)
        return (C.ravel(), S.ravel(), np.cos(PHI).ravel(), np.sin(PHI).ravel(), W.ravel())
    ng = max(8, count // 2)
    g, gw = np.polynomial.legendre.leggauss(ng)
    half = 0.5 * math.pi
    phi = np.concatenate((half * g, math.pi + half * g))
    w = np.concatenate((half * gw, half * gw))
    return phi, w


def build_fundsol(
    system: EllipticSystem,
    route: Optional[str] = None,
    quadrature_nodes: Optional[int] = None,
    fd_step_scale: Optional[float] = None,
    outer: str = "analytic",
) -> FundamentalSolution:
    """Pick a route (closed form when one exists) and build the evaluator.

    On the quadrature route ``outer`` selects how the outer Laplacian of the
    sphere integral is taken: ``"analytic"`` (under the integral sign, the
    default) or ``"fd"`` (central differences of the full sphere integral,
    about 100x slower and accurate to ~1e-9).
    """
    if route is None:
        if system.M == 1:
            route = "closed_scalar"
        elif system.kind == "lame":
            route = "closed_lame"
        else:
            route = "quadrature"
    if route == "quadrature":
        if quadrature_nodes is None:
            quadrature_nodes = 2048 if system.n == 3 else 256
        if fd_step_scale is None:
            fd_step_scale = 1e-2
        return FundamentalSolution(system, route, quadrature_nodes, fd_step_scale, outer=outer)
    return FundamentalSolution(system, route)


def eval_E(fs: FundamentalSolution, x) -> np.ndarray:
    x = _as_point(x, fs.n)
    return fs.E_batch(x[None, :])[0]


def eval_gradE(fs: FundamentalSolution, x) -> np.ndarray:
    """Array of shape (n, M, M): entry [r] is d_r E."""
    x = _as_point(x, fs.n)
    return fs.gradE_batch(x[None, :])[0]


def pde_residual(fs: FundamentalSolution, pts, step_scale: float = 1e-3, order: int = 4) -> float:
    """max relative size of a^{ab}_{rs} d_r d_s E_{.b} (each column) by central differences."""
    a = fs.system.tensor.a
    n, M = fs.n, fs.M
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    o1, w1 = central_weights(1, order)
    o2, w2 = central_weights(2, order)
    worst = 0.0
    for x in pts:
        h = step_scale * np.linalg.norm(x)
        hess = np.zeros((n, n, M, M), dtype=complex)
        for i in range(n):
            for j in range(i, n):
                if i == j:
                    shifts = [(o, w) for o, w in zip(o2, w2) if w != 0.0]
                    P = np.array([x + o * h * np.eye(n)[i] for o, _ in shifts])
                    wv = np.array([w for _, w in shifts])
                else:
                    combos = [(oi, oj, wi * wj) for oi, wi in zip(o1, w1) for oj, wj in zip(o1, w1) if wi * wj != 0.0]
                    P = np.array([x + h * (oi * np.eye(n)[i] + oj * np.eye(n)[j]) for oi, oj, _ in combos])
                    wv = np.array([w for _, _, w in combos])
                val = np.einsum("s,sab->ab", wv, fs.E_batch(P)) / h**2
                hess[i, j] = hess[j, i] = val
        # (L E_{. c})_alpha = a[r,s,alpha,beta] d_r d_s E_{beta c}
        res = np.einsum("rsab,rsbc->ac", a, hess)
        scale = np.max(np.abs(a)) * np.max(np.abs(hess))
        worst = max(worst, float(np.max(np.abs(res)) / scale))
    return worst


def _annulus_points(n: int, count: int = 60, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    dirs = rng.standard_normal((count, n))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    radii = 0.5 * 4.0 ** rng.random(count)
    return dirs * radii[:, None]


def quadrature_selfcheck(
    system: EllipticSystem,
    quadrature_nodes: Optional[int] = None,
    fd_step_scale: Optional[float] = None,
    points: Optional[np.ndarray] = None,
    outer: str = "fd",
) -> dict:
    """Compare the quadrature route with a closed form on 0.5 <= |x| <= 2.

    For systems without a closed form, reports the PDE residual instead.  In
    n = 2 one additive constant per matrix entry is fitted out first.
    """
    fs_q = build_fundsol(system, "quadrature", quadrature_nodes, fd_step_scale, outer)
    pts = _annulus_points(system.n) if points is None else np.atleast_2d(points)
    Eq = fs_q.E_batch(pts)
    closed = None
    if system.M == 1:
        closed = "closed_scalar"
    elif system.kind == "lame":
        closed = "closed_lame"
    report = {
        "route": "quadrature",
        "reference": closed or "pde_residual",
        "quadrature_nodes": fs_q.quadrature_nodes,
        "fd_step_scale": fs_q.fd_step_scale,
        "outer": outer,
        "points": int(len(pts)),
    }
    if closed is None:
        report["max_error"] = pde_residual(fs_q, pts[:8])
        return report
    Ec = build_fundsol(system, closed).E_batch(pts)
    diff = Eq - Ec
    if system.n == 2:
        offset = diff.mean(axis=0)
        diff = diff - offset
        report["constant_offset"] = [[complex(z) for z in row] for row in offset]
        report["max_error"] = float(np.max(np.abs(diff)))
        report["error_kind"] = "deviation_from_constant"
    else:
        rel = np.max(np.abs(diff), axis=(1, 2)) / np.max(np.abs(Ec), axis=(1, 2))
        report["max_error"] = float(rel.max())
        report["error_kind"] = "max_relative"
    return report
