"""Coefficient tensors, symbols and the ellipticity / conormal diagnostics.

Index convention: a tensor is stored as a complex array ``a[r, s, alpha, beta]``
(all 0-based) so that the operator reads

    (L u)_alpha = d_r ( a[r, s, alpha, beta] d_s u_beta ).

The last spatial index ``n - 1`` is the normal direction of the half-space.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Optional, Sequence

import numpy as np

from .errors import BadModuli, ConfigError, NotElliptic, SingularSymbol

__all__ = [
    "CoefficientTensor",
    "BlockSplit",
    "EllipticSystem",
    "SymbolMatrix",
    "SymbolReport",
    "sphere_area",
    "unit_sphere_samples",
    "make_scalar_system",
    "make_lame_system",
    "make_system",
    "laplacian",
    "symbol",
    "symbol_values",
    "ellipticity_constant",
    "conormal_residual",
    "check_symbol_conditions",
    "parse_system",
]


def sphere_area(n: int) -> float:
    """Surface area of the unit sphere S^{n-1} in R^n."""
    return 2.0 * math.pi ** (n / 2.0) / math.gamma(n / 2.0)


def _fibonacci_sphere(count: int) -> np.ndarray:
    i = np.arange(count, dtype=float) + 0.5
    polar = np.arccos(1.0 - 2.0 * i / count)
    azim = math.pi * (1.0 + math.sqrt(5.0)) * i
    return np.column_stack(
        (np.cos(azim) * np.sin(polar), np.sin(azim) * np.sin(polar), np.cos(polar))
    )


def unit_sphere_samples(n: int, count: int, seed: int = 0) -> np.ndarray:
    """Deterministic quasi-uniform points on S^{n-1}, shape (P, n).

    n=2 uses equally spaced angles; n=3 uses the union of Fibonacci lattices of
    sizes count, count/2, ... (>= 50) so that doubling ``count`` always yields a
    superset.  Higher n falls back to seeded Gaussian directions.
    """
    if n == 2:
        ang = 2.0 * math.pi * np.arange(count) / count
        return np.column_stack((np.cos(ang), np.sin(ang)))
    if n == 3:
        blocks = []
        c = count
        while c >= 50:
            blocks.append(_fibonacci_sphere(c))
            if c % 2:
                break
            c //= 2
        if not blocks:
            blocks.append(_fibonacci_sphere(count))
        return np.vstack(blocks)
    rng = np.random.default_rng(seed)
    pts = rng.standard_normal((count, n))
    return pts / np.linalg.norm(pts, axis=1, keepdims=True)


@dataclass(frozen=True)
class CoefficientTensor:
    """Complex coefficient array ``a[r, s, alpha, beta]`` of shape (n, n, M, M)."""

    a: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.a, dtype=complex)
        if a.ndim != 4 or a.shape[0] != a.shape[1] or a.shape[2] != a.shape[3]:
            raise ValueError(f"tensor must have shape (n, n, M, M), got {a.shape}")
        if a.shape[0] < 2 or a.shape[2] < 1:
            raise ValueError("need n >= 2 and M >= 1")
        if not np.all(np.isfinite(a)):
            raise ValueError("tensor has non-finite entries")
        a = a.copy()
        a.setflags(write=False)
        object.__setattr__(self, "a", a)

    @property
    def n(self) -> int:
        return self.a.shape[0]

    @property
    def M(self) -> int:
        return self.a.shape[2]

    def transpose(self) -> "CoefficientTensor":
        """Tensor of the transposed operator: a^T[r,s,al,be] = a[s,r,be,al]."""
        return CoefficientTensor(self.a.transpose(1, 0, 3, 2))

    def normal_block(self) -> np.ndarray:
        """B = (a^{st}_{nn}), the M x M coefficient of d_n^2."""
        return self.a[self.n - 1, self.n - 1]

    def to_json(self) -> dict:
        flat = self.a.reshape(-1)
        return {
            "n": self.n,
            "M": self.M,
            "a": [[float(z.real), float(z.imag)] for z in flat],
        }

    @classmethod
    def from_json(cls, obj: Mapping[str, Any]) -> "CoefficientTensor":
        try:
            n, M, flat = int(obj["n"]), int(obj["M"]), obj["a"]
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed tensor object ({exc})", field="tensor")
        if len(flat) != n * n * M * M:
            raise ConfigError(
                f"expected {n * n * M * M} [re, im] pairs, got {len(flat)}", field="tensor.a"
            )
        vals = np.array([complex(p[0], p[1]) for p in flat])
        return cls(vals.reshape(n, n, M, M))


@dataclass(frozen=True)
class BlockSplit:
    """Block structure L = I d_n^2 + sum_{r,s<n} B_rs d_r d_s."""

    tangential: np.ndarray  # shape (n-1, n-1, M, M)

    @property
    def scalar_symbol(self) -> Optional[np.ndarray]:
        """(n-1, n-1) matrix b_rs when every B_rs is a multiple of I_M, else None."""
        B = self.tangential
        M = B.shape[2]
        b = B[:, :, 0, 0]
        if np.allclose(B, b[:, :, None, None] * np.eye(M), atol=1e-14, rtol=0):
            return b
        return None


@dataclass(frozen=True)
class EllipticSystem:
    tensor: CoefficientTensor
    kappa_lower: float
    block_split: Optional[BlockSplit] = None
    kind: str = "general"  # "scalar" | "lame" | "general"
    params: Mapping[str, Any] = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.tensor.n

    @property
    def M(self) -> int:
        return self.tensor.M

    @property
    def is_laplacian(self) -> bool:
        if self.M != 1:
            return False
        return np.array_equal(self.tensor.a[:, :, 0, 0], np.eye(self.n))

    def transpose(self) -> "EllipticSystem":
        return make_system(self.tensor.transpose(), kind=self.kind, params=dict(self.params))


@dataclass(frozen=True)
class SymbolMatrix:
    xi: np.ndarray
    value: np.ndarray
    inverse: np.ndarray


def symbol_values(tensor: CoefficientTensor, xi: np.ndarray) -> np.ndarray:
    """Symb_L(xi) = -(xi_r xi_s a^{ab}_{rs}) for a batch of frequencies, shape (..., M, M)."""
    xi = np.asarray(xi, dtype=float)
    n, M = tensor.n, tensor.M
    outer = (xi[..., :, None] * xi[..., None, :]).reshape(xi.shape[:-1] + (n * n,))
    return -(outer @ tensor.a.reshape(n * n, M * M)).reshape(xi.shape[:-1] + (M, M))


def symbol(system: EllipticSystem, xi: Sequence[float]) -> SymbolMatrix:
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (system.n,):
        raise ValueError(f"xi must have shape ({system.n},)")
    if not np.any(xi):
        raise ValueError("symbol undefined at xi = 0")
    value = symbol_values(system.tensor, xi)
    try:
        inverse = np.linalg.solve(value, np.eye(system.M))
    except np.linalg.LinAlgError as exc:
        raise SingularSymbol(f"symbol is singular at xi={xi}") from exc
    return SymbolMatrix(xi=xi, value=value, inverse=inverse)


def _min_rayleigh(tensor: CoefficientTensor, xis: np.ndarray) -> float:
    lsym = -symbol_values(tensor, xis)
    herm = 0.5 * (lsym + np.conj(np.swapaxes(lsym, -1, -2)))
    return float(np.min(np.linalg.eigvalsh(herm)))


def ellipticity_constant(system_or_tensor, sphere_samples: int = 1000) -> float:
    """Sampled lower estimate of the strong-ellipticity constant.

    Minimises Re <L(xi) eta, eta> over unit xi in a quasi-uniform sphere set and
    over unit eta (the smallest eigenvalue of the Hermitian part).
    """
    if sphere_samples < 100:
        raise ValueError("sphere_samples must be >= 100")
    tensor = getattr(system_or_tensor, "tensor", system_or_tensor)
    kappa = _min_rayleigh(tensor, unit_sphere_samples(tensor.n, sphere_samples))
    if kappa <= 0:
        raise NotElliptic(f"sampled ellipticity constant {kappa:.3e} <= 0")
    return kappa


def _detect_block(tensor: CoefficientTensor) -> Optional[BlockSplit]:
    a, n, M = tensor.a, tensor.n, tensor.M
    if not np.array_equal(a[n - 1, n - 1], np.eye(M)):
        return None
    if np.any(a[: n - 1, n - 1]) or np.any(a[n - 1, : n - 1]):
        return None
    return BlockSplit(tangential=np.array(a[: n - 1, : n - 1]))


def make_system(
    tensor,
    kind: str = "general",
    params: Optional[Mapping[str, Any]] = None,
    sphere_samples: int = 1000,
) -> EllipticSystem:
    if not isinstance(tensor, CoefficientTensor):
        tensor = CoefficientTensor(tensor)
    kappa = ellipticity_constant(tensor, sphere_samples)
    return EllipticSystem(
        tensor=tensor,
        kappa_lower=kappa,
        block_split=_detect_block(tensor),
        kind=kind,
        params=dict(params or {}),
    )


def make_scalar_system(A_matrix, representative: str = "sym") -> EllipticSystem:
    """Scalar operator div(A grad).

    The tensor stores the symmetric part A_sym by default; pass
    ``representative="raw"`` to keep A itself (same operator, different
    conormal derivative).
    """
    A = np.asarray(A_matrix, dtype=complex)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] < 2:
        raise ValueError("A must be a square n x n matrix with n >= 2")
    n = A.shape[0]
    A_sym = 0.5 * (A + A.T)
    # Re[a_rs xi_r xi_s] only sees the real part of A_sym
    xis = unit_sphere_samples(n, 1000)
    worst = float(np.min(np.einsum("pr,rs,ps->p", xis, A_sym.real, xis)))
    if worst <= 0:
        raise NotElliptic(f"Re[A xi.xi] = {worst:.3e} <= 0 on the unit sphere")
    if representative == "sym":
        rep = A_sym
    elif representative == "raw":
        rep = A
    else:
        raise ValueError("representative must be 'sym' or 'raw'")
    params = {"A_raw": A, "A_sym": A_sym, "representative": representative}
    return make_system(rep[:, :, None, None], kind="scalar", params=params)


def laplacian(n: int) -> EllipticSystem:
    return make_scalar_system(np.eye(n))


def lame_tensor(mu: float, lam: float, n: int) -> np.ndarray:
    """Lame tensor with the vanishing-conormal representative, as a[r, s, alpha, beta]."""
    d = np.eye(n)
    c1 = (lam + mu) * (2 * mu + lam) / (3 * mu + lam)
    c2 = mu * (lam + mu) / (3 * mu + lam)
    # stated as a^{beta alpha}_{rs}; build that array then swap the component axes
    b = (
        mu * np.einsum("rs,ab->rsab", d, d)
        + c1 * np.einsum("rb,sa->rsab", d, d)
        + c2 * np.einsum("ra,sb->rsab", d, d)
    )  # b[r, s, alpha, beta] = a^{beta alpha}_{rs}
    return b.transpose(0, 1, 3, 2)


def make_lame_system(mu: float, lam: float, n: int) -> EllipticSystem:
    """Lame system mu*Lap u + (lam+mu) grad div u with the conormal-vanishing tensor."""
    if not (mu > 0 and 2 * mu + lam > 0):
        raise BadModuli(f"need mu > 0 and 2mu+lam > 0, got mu={mu}, lam={lam}")
    if n < 2:
        raise ValueError("n must be >= 2")
    return make_system(lame_tensor(mu, lam, n), kind="lame", params={"mu": mu, "lam": lam})


def conormal_residual(system: EllipticSystem, fundsol, samples) -> float:
    """max |a^{ba}_{rn} d_r E_{gb}(x', 0)| * |x'|^{n-1} over boundary samples x'."""
    pts = np.atleast_2d(np.asarray(samples, dtype=float))
    n = system.n
    if pts.shape[1] == n - 1:
        pts = np.hstack((pts, np.zeros((pts.shape[0], 1))))
    a_rn = system.tensor.a[:, n - 1]  # [r, beta, alpha]
    worst = 0.0
    for x in pts:
        radius = np.linalg.norm(x)
        grad = np.asarray(fundsol.eval_gradE(x))  # [r, gamma, beta]
        res = np.einsum("rba,rgb->ag", a_rn, grad)
        worst = max(worst, float(np.max(np.abs(res))) * radius ** (n - 1))
    return worst


@dataclass(frozen=True)
class SymbolReport:
    interior_residual: float
    circle_residual: Optional[float]
    tol: float
    worst_index: tuple
    passed: bool

    def to_dict(self) -> dict:
        return {
            "interior_residual": self.interior_residual,
            "circle_residual": self.circle_residual,
            "tol": self.tol,
            "worst_index": list(self.worst_index),
            "pass": self.passed,
        }


def _inverse_and_derivative(tensor: CoefficientTensor, xis: np.ndarray):
    """S = Symb^{-1} and dS/dxi_j = -S (dSymb/dxi_j) S, shapes (P,M,M), (P,n,M,M)."""
    a = tensor.a
    S = np.linalg.inv(symbol_values(tensor, xis))
    dsymb = -(np.einsum("jsab,ps->pjab", a, xis) + np.einsum("rjab,pr->pjab", a, xis))
    dS = -np.einsum("pab,pjbc,pcd->pjad", S, dsymb, S)
    return S, dS


def check_symbol_conditions(
    system: EllipticSystem,
    tol: float = 1e-8,
    sphere_samples: int = 1000,
    circle_nodes: int = 512,
) -> SymbolReport:
    """Residuals of the two symbol-level sufficient conditions for conormal vanishing.

    Derivatives of S are exact (matrix-inverse identity with the polynomial
    derivative of the symbol); the n=2 circle integral uses the trapezoid rule.
    Residuals are scaled by max|a| * max|S| on the sample.
    """
    if circle_nodes < 512:
        raise ValueError("circle_nodes must be >= 512")
    a = system.tensor.a
    n = system.n
    xis = unit_sphere_samples(n, sphere_samples)
    S, dS = _inverse_and_derivative(system.tensor, xis)
    scale = float(np.max(np.abs(a)) * np.max(np.abs(S)))
    # jump[s, s2, b, al] = a[s2, s, b, al] - a[s, s2, b, al]; the tensor is used as a^{b al}
    jump = a.transpose(1, 0, 2, 3) - a
    W = np.einsum("pr,rsbl->psbl", xis, a)
    term1 = np.einsum("xybl,pgb->pxylg", jump, S)
    term2 = np.einsum("psbl,pygb->psylg", W, dS)
    term3 = np.einsum("pybl,psgb->psylg", W, dS)
    res = np.abs(term1 + term2 - term3) / scale
    flat = int(np.argmax(res))
    worst_index = tuple(int(i) for i in np.unravel_index(flat, res.shape)[1:])
    interior = float(res.max())

    circle = None
    if n == 2:
        ang = 2.0 * math.pi * np.arange(circle_nodes) / circle_nodes
        cxi = np.column_stack((np.cos(ang), np.sin(ang)))
        cS = np.linalg.inv(symbol_values(system.tensor, cxi))
        cW = np.einsum("pr,rsbl->psbl", cxi, a)
        w = 2.0 * math.pi / circle_nodes
        integral = w * (
            np.einsum("psbl,py,pgb->sylg", cW, cxi, cS)
            - np.einsum("pybl,ps,pgb->sylg", cW, cxi, cS)
        )
        circle = float(np.max(np.abs(integral))) / scale

    worst = max(interior, circle or 0.0)
    return SymbolReport(
        interior_residual=interior,
        circle_residual=circle,
        tol=tol,
        worst_index=worst_index,
        passed=bool(worst <= tol),
    )


def _floats(text: str) -> list:
    parts = [p for p in text.replace(",", ":").split(":") if p.strip()]
    try:
        return [float(p) for p in parts]
    except ValueError as exc:
        raise ConfigError(f"cannot parse numbers in {text!r}", field="system") from exc


def parse_system(spec, n: Optional[int] = None) -> EllipticSystem:
    """Build a system from a preset string, a tensor JSON object, or a JSON file path.

    Presets: ``laplacian``, ``scalar:<floats>`` (4 floats: 2x2 row-major;
    6 floats: upper triangle of a symmetric 3x3; 9 floats: 3x3 row-major),
    ``lame:<mu>:<lambda>``.
    """
    if isinstance(spec, Mapping):
        if "a" in spec:
            return make_system(CoefficientTensor.from_json(spec))
        if "file" in spec:
            return parse_system(str(spec["file"]), n)
        raise ConfigError("system object needs 'a' or 'file'", field="system")
    if not isinstance(spec, str):
        raise ConfigError(f"unsupported system spec {spec!r}", field="system")
    text = spec.strip()
    if text == "laplacian":
        if n is None:
            raise ConfigError("preset 'laplacian' needs n", field="system")
        return laplacian(n)
    if text.startswith("scalar:"):
        vals = _floats(text[len("scalar:"):])
        if len(vals) == 4:
            A = np.array(vals).reshape(2, 2)
        elif len(vals) == 6:
            a11, a12, a13, a22, a23, a33 = vals
            A = np.array([[a11, a12, a13], [a12, a22, a23], [a13, a23, a33]])
        elif len(vals) == 9:
            A = np.array(vals).reshape(3, 3)
        else:
            raise ConfigError("scalar preset takes 4, 6 or 9 numbers", field="system")
        if n is not None and A.shape[0] != n:
            raise ConfigError(f"scalar preset is {A.shape[0]}-dimensional, n={n}", field="system")
        return make_scalar_system(A)
    if text.startswith("lame:"):
        vals = _floats(text[len("lame:"):])
        if len(vals) != 2:
            raise ConfigError("lame preset is lame:<mu>:<lambda>", field="system")
        if n is None:
            raise ConfigError("preset 'lame' needs n", field="system")
        return make_lame_system(vals[0], vals[1], n)
    if text.endswith(".json"):
        try:
            with open(text, encoding="utf-8") as fh:
                obj = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read tensor file {text!r}: {exc}", field="system")
        return make_system(CoefficientTensor.from_json(obj))
    raise ConfigError(f"unknown system preset {text!r}", field="system")
