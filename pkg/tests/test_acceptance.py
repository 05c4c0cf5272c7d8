"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The lines are also collected and repeated in the pytest terminal summary
(see conftest.py).  Run ``python3 tests/test_acceptance.py`` for the lines alone.
"""
import numpy as np

from poissondtn.elliptic import (
    check_symbol_conditions,
    conormal_residual,
    laplacian,
    make_lame_system,
    make_scalar_system,
)
from poissondtn.fields import (
    BoundaryField,
    GridSpec,
    gaussian,
    l2_norm,
    make_field,
    pv_apply,
    rel_l2,
    riesz,
    riesz_kernel,
)
from poissondtn.fundsol import build_fundsol, quadrature_selfcheck
from poissondtn.generator import (
    check_block_identity,
    check_semigroup,
    dtn,
    first_order_coefficients,
    generator_power,
    make_context,
    operator_norm,
    route_agreement,
    semigroup_apply,
)
from poissondtn.poisson import (
    _boundary_probe,
    build_kernel,
    decay_constant,
    eval_K,
    kernel_semigroup_gap,
    verify_normalization,
)

LAME3 = make_lame_system(1.0, 1.0, 3)
RESULTS = []


def report(number, title, measured):
    """measured: list of (label, value, tolerance, sense) with sense '<=' or '>='."""
    ok = all(v <= tol if sense == "<=" else v >= tol for _, v, tol, sense in measured)
    detail = ", ".join(f"{lab} {v:.2e} {sense} {tol:.0e}" for lab, v, tol, sense in measured)
    line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    RESULTS.append(line)
    print(line)
    bad = [m for m in measured if not (m[1] <= m[2] if m[3] == "<=" else m[1] >= m[2])]
    assert ok, f"criterion {number} failed: {bad}"


def _max_rel(a, b):
    return float(np.max(np.abs(a - b)) / np.max(np.abs(b)))


def test_criterion_01_fundamental_solution_oracle():
    lap3 = quadrature_selfcheck(laplacian(3))
    assert lap3["quadrature_nodes"] == 2048
    lame = quadrature_selfcheck(LAME3)
    lap2 = quadrature_selfcheck(laplacian(2))
    assert lap2["error_kind"] == "deviation_from_constant"
    report(1, "fundamental solution by quadrature", [
        ("laplacian n=3", lap3["max_error"], 1e-6, "<="),
        ("lame n=3", lame["max_error"], 1e-5, "<="),
        ("laplacian n=2 mod const", lap2["max_error"], 1e-6, "<="),
    ])


def test_criterion_02_poisson_kernel_construction():
    out = []
    for n in (2, 3):
        closed = build_kernel(laplacian(n))
        quad = build_kernel(laplacian(n), "from_fundsol", build_fundsol(laplacian(n), "quadrature"))
        xp = np.random.default_rng(n).uniform(-5, 5, (40, n - 1))
        xp = xp[np.linalg.norm(xp, axis=1) <= 5]
        out.append((f"laplacian n={n}", _max_rel(quad.P_batch(xp), closed.P_batch(xp)), 1e-5, "<="))
    xp = np.random.default_rng(0).uniform(-3.5, 3.5, (40, 2))
    lame = build_kernel(LAME3, "from_fundsol", build_fundsol(LAME3, "closed_lame"))
    out.append(("lame n=3", _max_rel(lame.P_batch(xp), build_kernel(LAME3).P_batch(xp)), 1e-6, "<="))
    report(2, "kernel from fundamental solution", out)


def test_criterion_03_normalization():
    out = []
    for name, k, R, h in (
        ("laplacian n=2", build_kernel(laplacian(2)), 50.0, 0.05),
        ("laplacian n=3", build_kernel(laplacian(3)), 40.0, 0.1),
        ("lame n=3", build_kernel(LAME3), 40.0, 0.1),
    ):
        out.append((name, verify_normalization(k, R=R, h=h)["max_deviation"], 1e-3, "<="))
    report(3, "normalization", out)


def test_criterion_04_semigroup_law():
    closed = kernel_semigroup_gap(build_kernel(laplacian(2)))
    g = GridSpec(1, 32.0, 1024)
    discrete = check_semigroup(make_context(laplacian(2), g), gaussian(g), 1.0, 1.0, extend=4)
    gl = GridSpec(2, 8.0, 256)
    x = gl.coords()
    b = np.exp(-np.sum(x**2, axis=-1) / 2)
    fl = BoundaryField(gl, np.stack([b, 0.5 * b, -b], axis=-1))
    lame = check_semigroup(make_context(LAME3, gl), fl, 1.0, 1.0, extend=2)
    report(4, "semigroup law", [
        ("kernel sup", closed, 1e-4, "<="),
        ("discrete rel L2", discrete, 1e-5, "<="),
        ("lame", lame, 1e-3, "<="),
    ])


def test_criterion_05_route_agreement():
    g1 = GridSpec(1, 16.0, 2048)
    gaps1 = route_agreement(make_context(laplacian(2), g1), gaussian(g1))["gaps"]
    g2 = GridSpec(2, 8.0, 512)
    gaps2 = route_agreement(
        make_context(laplacian(3), g2), gaussian(g2), quotient={"h_ladder": (0.5, 0.25, 0.125)}
    )["gaps"]
    gp = GridSpec(1, 32.0, 1024)
    ctx = make_context(laplacian(2), gp)
    f = gaussian(gp)
    pv_spec = rel_l2(dtn(ctx, f, "pv").value, dtn(ctx, f, "spectral").value)
    assert len(gaps1) == len(gaps2) == 6
    report(5, "generator route agreement", [
        ("d=1 worst pair", max(gaps1.values()), 1e-2, "<="),
        ("d=2 worst pair", max(gaps2.values()), 1e-2, "<="),
        ("pv-spectral N=1024", pv_spec, 1e-3, "<="),
    ])


def test_criterion_06_lame_generator():
    C = first_order_coefficients(LAME3)
    e = np.eye(3)
    expected = np.stack([0.5 * (np.outer(e[2], e[s]) + np.outer(e[s], e[2])) for s in range(2)])
    coeff_gap = float(np.max(np.abs(C - expected)))
    g = GridSpec(2, 8.0, 256)
    x = g.coords()
    b = np.exp(-np.sum(x**2, axis=-1) / 2)
    f = BoundaryField(g, np.stack([b, 0.5 * b, -b], axis=-1))
    gaps = route_agreement(make_context(LAME3, g), f, quotient={"h_ladder": (2.0, 1.0, 0.5, 0.25)})["gaps"]
    report(6, "lame generator", [
        ("first-order coefficients", coeff_gap, 1e-14, "<="),
        ("pv-quotient", gaps["pv-quotient"], 2e-2, "<="),
        ("conjugate-quotient", gaps["quotient-conjugate"], 2e-2, "<="),
    ])


def test_criterion_07_conormal_vanishing():
    scalar = make_scalar_system([[2.0, 0.4, 0.1], [0.0, 1.5, -0.2], [0.3, 0.0, 1.0]])
    out = []
    for name, sysm in (("scalar A_sym", scalar), ("lame", LAME3)):
        out.append((name + " analytic", conormal_residual(sysm, build_fundsol(sysm), _boundary_probe(3)), 1e-10, "<="))
    for name, sysm in (("laplacian", laplacian(3)), ("lame", LAME3)):
        fs = build_fundsol(sysm, "quadrature")
        out.append((name + " quadrature", conormal_residual(sysm, fs, _boundary_probe(3)), 1e-6, "<="))
    raw = make_scalar_system([[1.0, 1.0], [0.0, 1.0]], representative="raw")
    out.append(("raw representative", conormal_residual(raw, build_fundsol(raw), _boundary_probe(2)), 1e-2, ">="))
    report(7, "conormal vanishing", out)


def test_criterion_08_symbol_conditions():
    out = []
    for name, sysm in (
        ("laplacian n=2", laplacian(2)),
        ("laplacian n=3", laplacian(3)),
        ("lame n=2", make_lame_system(1.0, 1.0, 2)),
        ("lame n=3", LAME3),
    ):
        rep = check_symbol_conditions(sysm)
        assert rep.passed
        out.append((name, max(rep.interior_residual, rep.circle_residual or 0.0), 1e-8, "<="))
    raw2 = check_symbol_conditions(make_scalar_system([[2.0, 1.0], [0.0, 1.0]], representative="raw"))
    raw3 = check_symbol_conditions(
        make_scalar_system([[2.0, 1.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]], representative="raw")
    )
    assert not raw2.passed and not raw3.passed
    out.append(("raw n=2 circle", raw2.circle_residual, 1e-2, ">="))
    out.append(("raw n=3 interior", raw3.interior_residual, 1e-2, ">="))
    report(8, "symbol conditions", out)


def test_criterion_09_block_identity_and_powers():
    g = GridSpec(1, 16.0, 2048)
    ctx = make_context(laplacian(2), g)
    f = gaussian(g)
    g2 = GridSpec(2, 8.0, 256)
    ctx2 = make_context(laplacian(3), g2)
    out = [
        ("pv d=1", check_block_identity(ctx, f, "pv"), 2e-2, "<="),
        ("quotient d=1", check_block_identity(ctx, f, "quotient"), 2e-2, "<="),
        ("spectral d=1", check_block_identity(ctx, f, "spectral"), 1e-8, "<="),
        ("pv d=2", check_block_identity(ctx2, gaussian(g2), "pv"), 2e-2, "<="),
    ]
    for k in (2, 3):
        res = generator_power(ctx, f, k, route="spectral")
        out.append((f"power k={k} trace vs multiplier", res["gap"], 5e-2, "<="))
    report(9, "block identity and generator powers", out)


def test_criterion_10_pv_engine():
    g1 = GridSpec(1, 32.0, 1024)
    f1 = gaussian(g1)
    pv1 = rel_l2(pv_apply(riesz_kernel(1, 0), f1), riesz(f1, 0, pad=16))
    g2 = GridSpec(2, 16.0, 256)
    f2 = gaussian(g2)
    pv2 = max(rel_l2(pv_apply(riesz_kernel(2, s), f2), riesz(f2, s, pad=4)) for s in (0, 1))
    gr = GridSpec(2, 16.0, 128)
    x = gr.coords()
    r2 = np.sum(x**2, axis=-1)
    fr = BoundaryField(gr, (r2 - 2.0) * np.exp(-r2 / 2))
    total = sum(riesz(riesz(fr, s), s, check=False).values for s in (0, 1))
    riesz_sq = float(np.max(np.abs(total + fr.values)))
    # trace of the convolution solution: quadratic extrapolation of T(t) f to t = 0
    gj = GridSpec(1, 8.0, 2048)
    cj = make_context(laplacian(2), gj)
    fj = gaussian(gj)
    ts = [4 * gj.h, 8 * gj.h, 16 * gj.h]
    weights = [np.prod([-ts[m] / (ts[l] - ts[m]) for m in range(3) if m != l]) for l in range(3)]
    trace = sum(w * semigroup_apply(cj, fj, t).values for w, t in zip(weights, ts))
    jump = rel_l2(BoundaryField(gj, trace), fj)
    report(10, "pv engine", [
        ("riesz d=1", pv1, 1e-3, "<="),
        ("riesz d=2", pv2, 1e-3, "<="),
        ("sum of squares + I", riesz_sq, 1e-10, "<="),
        ("trace returns f", jump, 1e-3, "<="),
    ])


def test_criterion_11_invariants():
    out = []
    rng = np.random.default_rng(11)
    worst_even, worst_hom = 0.0, 0.0
    for sysm in (laplacian(2), laplacian(3), make_scalar_system([[2.0, 0.3], [0.3, 1.0]]), LAME3):
        for route in ("closed", "quadrature"):
            fs = build_fundsol(sysm) if route == "closed" else build_fundsol(sysm, "quadrature")
            X = rng.standard_normal((100, sysm.n))
            worst_even = max(worst_even, _max_rel(fs.E_batch(-X), fs.E_batch(X)))
            G = fs.gradE_batch(X[:20])
            worst_hom = max(worst_hom, _max_rel(fs.gradE_batch(2 * X[:20]), 2.0 ** (1 - sysm.n) * G))
    out.append(("E evenness", worst_even, 1e-10, "<="))
    out.append(("grad E homogeneity", worst_hom, 1e-10, "<="))

    worst_k = 0.0
    for sysm in (laplacian(2), laplacian(3), LAME3):
        k = build_kernel(sysm)
        for x in rng.standard_normal((5, sysm.n - 1)):
            t = rng.uniform(0.3, 2.0)
            worst_k = max(worst_k, _max_rel(eval_K(k, 2 * x, 2 * t), 2.0 ** (1 - sysm.n) * eval_K(k, x, t)))
    out.append(("K homogeneity", worst_k, 1e-12, "<="))

    drift = 0.0
    for k in (build_kernel(laplacian(2)), build_kernel(LAME3)):
        c1, c2 = decay_constant(k, 1e3, samples=400), decay_constant(k, 1e3, samples=800)
        drift = max(drift, abs(c2 - c1) / c1)
    out.append(("decay constant drift", drift, 1e-6, "<="))

    ctx = make_context(laplacian(2), GridSpec(1, 128.0, 2048))
    norms = [operator_norm(ctx, t, iterations=40) for t in (0.5, 1.0, 2.0, 4.0, 8.0)]
    spread = (max(norms) - min(norms)) / norms[0]
    out.append(("norm spread over t", spread, 0.1, "<="))
    out.append(("norm excess over t=0.5", max(norms) / norms[0] - 1.0, 0.1, "<="))

    gs = GridSpec(1, 8.0, 4096)
    cs = make_context(laplacian(2), gs)
    fb = make_field(gs, {"kind": "bump", "radius": 3.0})
    dists = [l2_norm(semigroup_apply(cs, fb, 2.0**-k) - fb) for k in range(1, 7)]
    increases = max(b - a for a, b in zip(dists, dists[1:]))
    out.append(("continuity: largest step increase", max(increases, 0.0), 0.0, "<="))
    out.append(("continuity: final distance", dists[-1], 1e-2, "<="))

    # dilation: f_lam sampled on the box shrunk by lam has the samples of f
    worst_s = 0.0
    for lam in (2.0, 0.5):
        g1, g2 = GridSpec(1, 16.0, 2048), GridSpec(1, 16.0 / lam, 2048)
        f1 = gaussian(g1)
        f2 = BoundaryField(g2, f1.values)
        for route in ("pv", "spectral"):
            a = dtn(make_context(laplacian(2), g1), f1, route).value.values
            b = dtn(make_context(laplacian(2), g2), f2, route).value.values
            worst_s = max(worst_s, _max_rel(b, lam * a))
    # and on one fixed grid, with f_2 sampled directly
    g = GridSpec(1, 16.0, 2048)
    xg = g.axis
    c = make_context(laplacian(2), g)
    a = dtn(c, BoundaryField(g, np.exp(-(xg**2) / 2)), "pv").value.values[:, 0]
    b = dtn(c, BoundaryField(g, np.exp(-((2 * xg) ** 2) / 2)), "pv").value.values[:, 0]
    o = g.origin_index[0]
    idx = np.where(np.abs(xg) <= 4)[0]
    worst_s = max(worst_s, float(np.max(np.abs(b[idx] - 2 * a[o + 2 * (idx - o)])) / np.max(np.abs(a))))
    out.append(("scaling covariance", worst_s, 1e-6, "<="))
    report(11, "invariant suite", out)


if __name__ == "__main__":
    import sys

    failed = 0
    for name, fn in sorted((k, v) for k, v in globals().items() if k.startswith("test_criterion_")):
        try:
            fn()
        except AssertionError:
            failed += 1
    sys.exit(1 if failed else 0)
