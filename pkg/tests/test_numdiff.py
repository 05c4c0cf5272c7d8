import numpy as np

from poissondtn.numdiff import fornberg_weights, partial


def test_standard_second_difference_stencils():
    np.testing.assert_allclose(fornberg_weights(0.0, [-1, 0, 1], 2)[2], [1, -2, 1], atol=1e-14)
    np.testing.assert_allclose(fornberg_weights(0.0, [-2, -1, 0, 1, 2], 2)[2] * 12, [-1, 16, -30, 16, -1], atol=1e-12)


def test_one_sided_first_derivative():
    np.testing.assert_allclose(fornberg_weights(0.0, [0, 1, 2], 1)[1], [-1.5, 2.0, -0.5], atol=1e-14)


def test_weights_differentiate_polynomials_exactly():
    nodes = np.array([-1.5, -0.2, 0.4, 1.0, 2.3])
    w = fornberg_weights(0.3, nodes, 2)
    p = lambda x: 2 * x**4 - x**3 + 5 * x - 1
    assert abs(w[1] @ p(nodes) - (8 * 0.3**3 - 3 * 0.3**2 + 5)) <= 1e-10
    assert abs(w[2] @ p(nodes) - (24 * 0.3**2 - 6 * 0.3)) <= 1e-10


def test_partial_of_smooth_function():
    f = lambda x: np.sin(x[..., 0]) * np.exp(x[..., 1])
    x = np.array([0.3, -0.2])
    assert abs(partial(f, x, 0, 1e-2, order=6) - np.cos(0.3) * np.exp(-0.2)) <= 1e-10
