import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from poissondtn.elliptic import laplacian, make_lame_system
from poissondtn.errors import AliasingRisk, GridTooCoarse, KernelNotHomogeneous, KernelNotOdd, PeriodizationRisk
from poissondtn.fields import (
    BoundaryField,
    ConeSpec,
    GridSpec,
    PVKernel,
    convolve,
    fourier_multiplier,
    gaussian,
    gradient,
    l2_norm,
    make_field,
    nt_max_sampled,
    pv_apply,
    read_field,
    rel_l2,
    riesz,
    riesz_kernel,
    write_field,
)
from poissondtn.poisson import build_kernel


def test_grid_layout():
    g = GridSpec(1, 8.0, 64)
    assert g.h == 0.25
    assert g.axis[g.origin_index[0]] == 0.0
    with pytest.raises(ValueError):
        GridSpec(1, 8.0, 100)
    with pytest.raises(ValueError):
        GridSpec(1, 80.0, 64)
    assert GridSpec.from_json(g.to_json()) == g


def test_field_is_immutable():
    f = gaussian(GridSpec(1, 8.0, 64))
    with pytest.raises(ValueError):
        f.values[0, 0] = 1.0


def test_compact_field_must_vanish_on_boundary():
    g = GridSpec(1, 8.0, 64)
    with pytest.raises(ValueError):
        BoundaryField(g, np.ones(64), "compact")
    make_field(g, {"kind": "bump", "radius": 2.0})


def test_field_round_trip_is_bit_exact(tmp_path):
    g = GridSpec(2, 4.0, 64)
    rng = np.random.default_rng(0)
    v = rng.standard_normal((64, 64, 3)) + 1j * rng.standard_normal((64, 64, 3))
    f = BoundaryField(g, v)
    write_field(f, tmp_path / "f.csv")
    back = read_field(tmp_path / "f.csv")
    assert back.grid == g
    np.testing.assert_array_equal(back.values, f.values)


def test_cauchy_profile_propagates():
    # P_1 * P_1 = P_2 with the closed harmonic kernel
    g = GridSpec(1, 128.0, 4096)
    k = build_kernel(laplacian(2))
    f = make_field(g, {"kind": "cauchy", "t0": 1.0})
    u = convolve(f, k, 1.0)
    x = g.axis
    exact = 2.0 / (math.pi * (4.0 + x**2))
    centre = np.abs(x) <= 10
    assert np.max(np.abs(u.values[centre, 0] - exact[centre])) <= 1e-4


def test_constant_field_stays_one_at_centre():
    g = GridSpec(1, 128.0, 4096)
    f = BoundaryField(g, np.ones(4096))
    u = convolve(f, build_kernel(laplacian(2)), 0.5)
    assert u.values[2048, 0].real == pytest.approx(1.0, abs=5e-3)


def test_inactive_components_stay_zero():
    g = GridSpec(2, 8.0, 64)
    f = gaussian(g, M=3, component=2)
    u = convolve(f, build_kernel(make_lame_system(1.0, 0.0, 3)), 1.0)
    # the Lame kernel couples components, but a diagonal kernel would not
    diag = build_kernel(laplacian(3))
    for comp in range(2):
        assert np.all(f.values[..., comp] == 0)
    v = convolve(gaussian(g), diag, 1.0)
    assert v.M == 1
    assert np.max(np.abs(u.values[..., 0])) < np.max(np.abs(u.values[..., 2]))


def test_direct_and_fft_convolution_agree():
    g = GridSpec(1, 16.0, 256)
    f = make_field(g, {"kind": "bump", "radius": 3.0})
    k = build_kernel(laplacian(2))
    assert rel_l2(convolve(f, k, 0.7, "direct"), convolve(f, k, 0.7, "fft")) <= 1e-12


def test_small_time_rejected():
    g = GridSpec(1, 16.0, 256)
    with pytest.raises(GridTooCoarse):
        convolve(gaussian(g), build_kernel(laplacian(2)), 0.1)
    assert convolve(gaussian(g), build_kernel(laplacian(2)), 0.0).values is not None


def test_identity_multiplier():
    g = GridSpec(1, 16.0, 512)
    f = gaussian(g, sigma=1 / math.sqrt(2))
    out = fourier_multiplier(f, lambda xi: np.ones(xi.shape[:-1]))
    assert np.max(np.abs(out.values - f.values)) <= 1e-12


def test_half_laplacian_on_windowed_cosine():
    g = GridSpec(1, 512.0, 8192)
    f = make_field(g, {"kind": "windowed_cos", "xi": 1.0, "width": 60.0})
    out = fourier_multiplier(f, lambda xi: -np.abs(xi[..., 0]), pad=2)
    x = g.axis
    centre = np.abs(x) <= 3
    assert np.max(np.abs(out.values[centre, 0] + f.values[centre, 0])) <= 1e-3


def test_second_derivative_multiplier():
    g = GridSpec(1, 16.0, 512)
    x = g.axis
    f = BoundaryField(g, np.exp(-(x**2)))
    out = fourier_multiplier(f, lambda xi: -xi[..., 0] ** 2)
    exact = (4 * x**2 - 2) * np.exp(-(x**2))
    assert np.max(np.abs(out.values[:, 0] - exact)) <= 1e-8


def test_periodization_and_aliasing_guards():
    g = GridSpec(1, 16.0, 256)
    with pytest.raises(PeriodizationRisk):
        fourier_multiplier(BoundaryField(g, np.ones(256)), lambda xi: np.ones(xi.shape[:-1]))
    x = g.axis
    rough = BoundaryField(g, np.exp(-(x**2) / 0.002))
    with pytest.raises(AliasingRisk):
        fourier_multiplier(rough, lambda xi: np.ones(xi.shape[:-1]))


def test_riesz_squares_to_minus_identity():
    g = GridSpec(2, 16.0, 128)
    x = g.coords()
    r2 = np.sum(x**2, axis=-1)
    f = BoundaryField(g, (r2 - 2.0) * np.exp(-r2 / 2))  # mean zero
    total = riesz(riesz(f, 0), 0, check=False).values + riesz(riesz(f, 1), 1, check=False).values
    assert np.max(np.abs(total + f.values)) <= 1e-10


def test_riesz_of_radial_gaussian_is_odd():
    g = GridSpec(2, 16.0, 128)
    r = riesz(gaussian(g), 0, pad=2).values[..., 0]
    # node k sits at -R + k h, so the reflection of index k is N - k
    refl = np.roll(r[::-1, :], 1, axis=0)
    assert np.max(np.abs(r[1:] + refl[1:])) <= 1e-12


def test_hilbert_sign_convention():
    g = GridSpec(1, 512.0, 8192)
    x = g.axis
    w = np.exp(-(x**2) / (2 * 60.0**2))
    out = riesz(BoundaryField(g, np.sin(x) * w), 0, pad=2)
    centre = np.abs(x) <= 3
    assert np.max(np.abs(out.values[centre, 0] + np.cos(x[centre]) * w[centre])) <= 1e-3


def test_pv_engine_matches_riesz_1d():
    g = GridSpec(1, 32.0, 1024)
    f = gaussian(g)
    pv = pv_apply(riesz_kernel(1, 0), f)
    assert rel_l2(pv, riesz(f, 0, pad=16)) <= 1e-3


def test_pv_engine_matches_riesz_2d():
    g = GridSpec(2, 16.0, 256)
    f = gaussian(g)
    for s in (0, 1):
        assert rel_l2(pv_apply(riesz_kernel(2, s), f), riesz(f, s, pad=4)) <= 1e-3


def test_pv_linear_in_kernel_and_constant_locally_zero():
    g = GridSpec(1, 16.0, 256)
    k = riesz_kernel(1, 0)
    k3 = PVKernel(lambda y: 3.0 * k(y), 1, 1, "scaled")
    f = gaussian(g)
    np.testing.assert_allclose(pv_apply(k3, f).values, 3.0 * pv_apply(k, f).values, rtol=1e-12, atol=1e-14)
    const = BoundaryField(g, np.ones(256))
    out = pv_apply(k, const, correct=False)
    # at the origin node every offset pairs up except the single node at -R
    assert abs(out.values[128, 0] - g.h * k([[g.R]])[0, 0, 0]) <= 1e-12


def test_kernel_guards():
    with pytest.raises(KernelNotOdd):
        PVKernel(lambda y: 1.0 / np.linalg.norm(y, axis=1), 1)
    with pytest.raises(KernelNotHomogeneous):
        PVKernel(lambda y: y[:, 0] / np.linalg.norm(y, axis=1) ** 3, 1)


def test_gradient_routes():
    g = GridSpec(1, 16.0, 512)
    x = g.axis
    f = BoundaryField(g, np.exp(-(x**2)))
    exact = -2 * x * np.exp(-(x**2))
    assert np.max(np.abs(gradient(f)[0].values[:, 0] - exact)) <= 1e-10
    assert np.max(np.abs(gradient(f, "fd")[0].values[:, 0] - exact)) <= 1e-4
    zero = gradient(BoundaryField(g, np.ones(512)), "fd")[0]
    assert np.max(np.abs(zero.values)) <= 1e-12


def test_gradient_of_plane_wave():
    g = GridSpec(1, 512.0, 8192)
    x = g.axis
    w = np.exp(-(x**2) / (2 * 60.0**2))
    f = BoundaryField(g, np.exp(1j * 2.0 * x) * w)
    d = gradient(f, pad=2)[0].values[:, 0]
    centre = np.abs(x) <= 3
    assert np.max(np.abs(d[centre] - 2j * f.values[centre, 0])) <= 1e-3


def test_nontangential_max_on_axis():
    g = GridSpec(1, 8.0, 64)
    k = build_kernel(laplacian(2))
    cone = ConeSpec.geometric(g, 1.0)

    def u(pts, t):
        return k.K_batch(pts, t)[:, 0, 0]

    out = nt_max_sampled(u, cone, g)
    assert out.values[32, 0].real == pytest.approx(1 / (math.pi * g.h), rel=1e-12)
    bounded = nt_max_sampled(lambda p, t: np.ones(len(p)) * 0.5, cone, g)
    assert np.max(bounded.values.real) <= 1.0


def test_nontangential_refinement_is_monotone():
    g = GridSpec(1, 8.0, 64)
    k = build_kernel(laplacian(2))
    f = lambda p, t: k.K_batch(p - 0.3, t)[:, 0, 0]
    coarse = nt_max_sampled(f, ConeSpec.geometric(g, 1.0, 1), g)
    fine = nt_max_sampled(f, ConeSpec.geometric(g, 1.0, 2), g)
    # the 2-per-octave ladder contains every 1-per-octave height
    assert np.all(fine.values.real >= coarse.values.real - 1e-15)


@settings(max_examples=10, deadline=None)
@given(st.floats(0.5, 2.0), st.floats(-2.0, 2.0))
def test_convolution_is_linear(sigma, c):
    g = GridSpec(1, 16.0, 256)
    k = build_kernel(laplacian(2))
    f1 = gaussian(g, sigma)
    f2 = gaussian(g, 1.0, center=[c])
    lhs = convolve(f1 + f2, k, 1.0).values
    rhs = convolve(f1, k, 1.0).values + convolve(f2, k, 1.0).values
    assert np.max(np.abs(lhs - rhs)) <= 1e-13


@settings(max_examples=10, deadline=None)
@given(st.floats(0.6, 2.0))
def test_parseval_for_unit_multiplier(sigma):
    g = GridSpec(1, 16.0, 256)
    f = gaussian(g, sigma)
    out = riesz(f, 0, pad=4)
    # |m| = 1 off zero frequency: the norm can only shrink (mean is dropped, padding leaks)
    assert l2_norm(out) <= l2_norm(f) * (1 + 1e-12)
