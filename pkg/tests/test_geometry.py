import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from higgslab.bundle import random_band_limited
from higgslab.geometry import TorusGeometry, make_torus


def test_make_torus_volumes():
    assert make_torus(1, [1, 1], [16, 16]).volume == 1.0
    g4 = make_torus(2, [1] * 4, [8] * 4)
    assert g4.volume == 1.0
    assert np.allclose(g4.lambda_omega(g4.omega_field()), 2.0)
    g = make_torus(1, [2 * np.pi] * 2, [32, 32])
    assert abs(g.volume - 4 * np.pi**2) < 1e-12


@pytest.mark.parametrize("n, grid", [(1, (15, 16)), (1, (6, 6)), (3, (8,) * 6), (0, ())])
def test_make_torus_rejects_bad_input(n, grid):
    with pytest.raises(ValueError):
        make_torus(n, [1.0] * len(grid), grid)


def test_metric_and_kahler_form_are_compatible():
    g = make_torus(2, [1, 2, 1, 3], [8] * 4)
    assert np.array_equal(g.metric, g.metric.T)
    assert np.all(np.linalg.eigvalsh(g.metric) > 0)
    # omega(u, v) = g(J u, v) with J e_{2k} = e_{2k+1}
    J = np.zeros((4, 4))
    for k in range(2):
        J[2 * k + 1, 2 * k] = 1.0
        J[2 * k, 2 * k + 1] = -1.0
    assert np.allclose(g.kahler_form, J.T @ g.metric)
    assert np.allclose(g.lambda_omega(g.omega_field()), g.complex_dim)


def test_integration_examples(t2_32):
    g = t2_32
    x, y = g.coords
    assert abs(g.integrate(np.ones(g.grid)) - 1.0) < 1e-14
    assert abs(g.integrate(np.broadcast_to(np.sin(2 * np.pi * x), g.grid))) < 1e-14
    assert abs(g.integrate(np.broadcast_to(np.sin(2 * np.pi * x) ** 2, g.grid)) - 0.5) < 1e-12
    g2 = make_torus(1, [2.0, 3.0], [16, 16])
    assert abs(g2.integrate(np.ones(g2.grid)) - 6.0) < 1e-12


def test_derivative_of_sine_and_constant():
    L = 2.0
    g = make_torus(1, [L, 1.0], [16, 16])
    x, _ = g.coords
    f = np.broadcast_to(np.sin(2 * np.pi * x / L), g.grid)
    df = g.derivative(f, 0)
    exact = np.broadcast_to((2 * np.pi / L) * np.cos(2 * np.pi * x / L), g.grid)
    assert np.max(np.abs(df - exact)) < 1e-12
    assert np.max(np.abs(g.derivative(np.full(g.grid, 3.0), 1))) == 0.0


@pytest.mark.parametrize("n", [1, 2])
def test_d_squared_vanishes(n):
    g = make_torus(n, [1.0] * (2 * n), [16] * (2 * n) if n == 1 else [8] * 4)
    rng = np.random.default_rng(0)
    f = random_band_limited(g, rng, (), 2)
    ddf = g.exterior_derivative(g.exterior_derivative(f, 0), 1)
    assert np.sqrt(g.integrate(np.sum(np.abs(ddf) ** 2, axis=(0, 1)))) < 1e-12


def test_lambda_contract_examples(t2_16):
    g = t2_16
    H = np.array([[1.0, 2 - 1j], [2 + 1j, -0.5]])
    # F = H dz ^ dzbar, and dz ^ dzbar = -2i dx ^ dy
    F = np.zeros((2, 2, *g.grid, 2, 2), dtype=complex)
    F[0, 1] = -2j * H
    F[1, 0] = 2j * H
    assert np.allclose(g.lambda_contract(F), 2 * H)
    assert np.allclose(g.lambda_contract(np.zeros_like(F)), 0)
    F_omega = g.omega_field(np.broadcast_to(np.eye(2), (*g.grid, 2, 2)))
    assert np.allclose(g.lambda_omega(F_omega), np.eye(2))
    with pytest.raises(ValueError):
        g.lambda_contract(np.zeros((3, 2, *g.grid)))


def test_lambda_is_adjoint_of_wedge_omega(t4_8):
    g = t4_8
    rng = np.random.default_rng(4)
    F = rng.standard_normal((4, 4, *g.grid))
    F = F - np.swapaxes(F, 0, 1)
    phi = rng.standard_normal(g.grid)
    lhs = g.lambda_omega(F) * phi
    # <F, phi omega> pointwise with the weight 1/2 of the full antisymmetric storage
    rhs = 0.5 * np.sum(F * g.omega_field(phi), axis=(0, 1))
    assert np.max(np.abs(lhs - rhs)) < 1e-12


def test_integration_by_parts(t2_32):
    g = t2_32
    rng = np.random.default_rng(1)
    f = random_band_limited(g, rng, (), 3)
    w = np.stack([random_band_limited(g, rng, (), 3) for _ in range(g.dim)])
    lhs = g.integrate(np.sum(g.exterior_derivative(f, 0) * np.conj(w), axis=0))
    rhs = g.integrate(f * np.conj(g.codifferential(w, 1)))
    assert abs(lhs - rhs) < 1e-10


def test_dealias_mask_keeps_two_thirds(t2_32):
    g = t2_32
    m = g.dealias_mask
    assert m[0, 0] and m[10, 0] and not m[11, 0] and not m[16, 16]


@settings(max_examples=20, deadline=None)
@given(shift=st.tuples(st.integers(0, 15), st.integers(0, 15)), seed=st.integers(0, 2**16))
def test_derivative_commutes_with_grid_translation(shift, seed):
    g = make_torus(1, [1.0, 1.0], [16, 16])
    f = random_band_limited(g, np.random.default_rng(seed), (2, 2), 3)
    for a in range(2):
        lhs = g.derivative(np.roll(f, shift, axis=(0, 1)), a)
        rhs = np.roll(g.derivative(f, a), shift, axis=(0, 1))
        assert np.max(np.abs(lhs - rhs)) < 1e-12


def test_geometry_is_hashable_value_object():
    a = TorusGeometry(1, (1, 1), (8, 8))
    b = TorusGeometry(1, (1.0, 1.0), (8, 8))
    assert a == b and hash(a) == hash(b)
