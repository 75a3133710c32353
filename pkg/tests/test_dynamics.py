"""Seeded SDE integration: gradients, reproducibility, invariant statistics."""

import numpy as np
import pytest

from ttransfer.dynamics import (
    SdeSystem,
    SeededRng,
    analytic_invariant_density,
    em_step,
    flow_map,
    flow_map_batch,
    normals,
    potential_by_name,
    quadratic_potential,
    rotated_double_well,
    triple_well_3d,
)
from ttransfer.errors import DivergenceError


def fd_gradient(pot, x, h=1e-6):
    """Central finite differences, the oracle for the analytic gradients."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    for mu in range(x.size):
        e = np.zeros_like(x)
        e[mu] = h
        g[mu] = (pot(x + e) - pot(x - e)) / (2 * h)
    return g


@pytest.mark.parametrize(
    "pot",
    [
        quadratic_potential(3),
        rotated_double_well(0.0),
        rotated_double_well(np.pi / 4),
        rotated_double_well(0.37),
        triple_well_3d(),
    ],
    ids=lambda p: f"{p.name}-{p.params}",
)
def test_gradient_matches_finite_differences(pot):
    rng = np.random.default_rng(0)
    for _ in range(20):
        x = rng.uniform(-1.8, 1.8, size=pot.dim)
        np.testing.assert_allclose(
            pot.gradient(x), fd_gradient(pot, x), atol=1e-6
        )


def test_double_well_rotation_equivariance():
    """V_alpha(R^T x) = V_0(x): the landscape is V_0 in rotated coordinates."""
    alpha = np.pi / 6
    c, s = np.cos(alpha), np.sin(alpha)
    rot = np.array([[c, -s], [s, c]])
    v0 = rotated_double_well(0.0)
    va = rotated_double_well(alpha)
    rng = np.random.default_rng(1)
    x = rng.uniform(-2, 2, size=(100, 2))
    np.testing.assert_allclose(va(x @ rot), v0(x), atol=1e-12)


def test_double_well_minima():
    v0 = rotated_double_well(0.0)
    assert v0(np.array([1.0, 0.0])) == pytest.approx(0.0, abs=1e-12)
    assert v0(np.array([-1.0, 0.0])) == pytest.approx(0.0, abs=1e-12)
    assert v0(np.array([0.0, 0.0])) == pytest.approx(1.0, abs=1e-12)


def test_triple_well_well_ordering():
    """The two wells near (+-1, 0) are deeper than the one near (0, 5/3)."""
    pot = triple_well_3d()
    deep1 = pot(np.array([1.0, 0.0, 0.0]))
    deep2 = pot(np.array([-1.0, 0.0, 0.0]))
    shallow = pot(np.array([0.0, 5.0 / 3.0, 0.0]))
    assert deep1 < shallow and deep2 < shallow
    assert abs(deep1 - deep2) < 1e-10


def test_potential_registry():
    assert potential_by_name("double_well", alpha=0.1).params["alpha"] == 0.1
    assert potential_by_name("triple_well3d").dim == 3
    with pytest.raises(KeyError):
        potential_by_name("harmonic_oscillator")


def test_streams_are_reproducible_and_disjoint():
    rng = SeededRng(123)
    a1 = rng.uniform(100, 1, 7)
    a2 = rng.uniform(100, 1, 7)
    b = rng.uniform(100, 1, 8)
    assert np.array_equal(a1, a2)
    assert not np.array_equal(a1, b)
    assert not np.array_equal(a1, SeededRng(124).uniform(100, 1, 7))


def test_normals_have_no_infinities():
    # inverse CDF must not map u=0 to -inf
    gen = np.random.default_rng(0)
    z = normals(gen, 10000)
    assert np.all(np.isfinite(z))
    assert abs(np.mean(z)) < 0.05
    assert abs(np.std(z) - 1.0) < 0.05


def test_em_step_zero_noise_limit():
    pot = quadratic_potential(2)
    sys = SdeSystem(pot, sigma=0.0, h=0.01, n_steps=1)
    x = np.array([1.0, -2.0])
    out = em_step(sys, x, np.random.default_rng(0))
    np.testing.assert_allclose(out, x - 0.01 * x, atol=1e-14)


def test_flow_map_batch_deterministic_in_seed():
    sys = SdeSystem(rotated_double_well(0.2), sigma=0.7, h=1e-3, n_steps=50)
    pts = np.array([[0.5, 0.5], [-1.0, 0.3], [0.0, 0.0]])
    out1 = flow_map_batch(sys, pts, SeededRng(7), batch_tag=3)
    out2 = flow_map_batch(sys, pts, SeededRng(7), batch_tag=3)
    out3 = flow_map_batch(sys, pts, SeededRng(8), batch_tag=3)
    assert np.array_equal(out1, out2)
    assert not np.array_equal(out1, out3)


def test_flow_map_composes_em_steps():
    sys = SdeSystem(quadratic_potential(1), sigma=0.3, h=1e-2, n_steps=5)
    gen1 = SeededRng(0).stream(1)
    gen2 = SeededRng(0).stream(1)
    x = np.array([1.0])
    via_flow = flow_map(sys, x, gen1)
    manual = x
    for _ in range(5):
        manual = em_step(sys, manual, gen2)
    np.testing.assert_allclose(via_flow, manual, atol=1e-15)


def test_divergence_detected():
    # explosive drift: V = -x^4 pushes mass to infinity under -grad V
    from ttransfer.dynamics import Potential

    pot = Potential(
        name="explosive",
        dim=1,
        value=lambda x: -np.sum(x**4, axis=-1),
        gradient=lambda x: -4.0 * x**3,
    )
    sys = SdeSystem(pot, sigma=0.0, h=0.5, n_steps=5000)
    with np.errstate(over="ignore", invalid="ignore"):
        with pytest.raises(DivergenceError):
            flow_map_batch(sys, np.array([[2.0]]), SeededRng(0))


def test_analytic_density_shape():
    pot = rotated_double_well(0.0)
    mu = analytic_invariant_density(pot, sigma=0.7)
    # maxima at the wells, lower at the saddle
    assert mu(np.array([1.0, 0.0])) > mu(np.array([0.0, 0.0]))
    assert mu(np.array([1.0, 0.0])) == pytest.approx(
        mu(np.array([-1.0, 0.0])), rel=1e-12
    )


@pytest.mark.slow
def test_long_run_histogram_matches_boltzmann():
    """Occupation statistics of a long trajectory vs. exp(-2V/sigma^2).

    One-dimensional double-well section so 2e6 steps give usable statistics;
    total-variation distance on a coarse histogram should be small.
    """
    from ttransfer.dynamics import Potential

    pot = Potential(
        name="dw1d",
        dim=1,
        value=lambda x: (x[..., 0] ** 2 - 1) ** 2,
        gradient=lambda x: (4.0 * x[..., 0] * (x[..., 0] ** 2 - 1))[..., None],
    )
    sigma = 1.0
    sys = SdeSystem(pot, sigma=sigma, h=1e-3, n_steps=1)
    rng = SeededRng(2024)
    n_chains = 200
    n_steps = 10_000
    x = np.linspace(-1.5, 1.5, n_chains)[:, None]
    samples = []
    gen = rng.stream(1)
    for t in range(n_steps):
        x = em_step(sys, x, gen)
        if t > 2000:
            samples.append(x[:, 0].copy())
    samples = np.concatenate(samples)
    edges = np.linspace(-2.0, 2.0, 21)
    hist, _ = np.histogram(samples, bins=edges, density=False)
    hist = hist / hist.sum()
    centers = 0.5 * (edges[:-1] + edges[1:])
    target = np.exp(-(2.0 / sigma**2) * (centers**2 - 1) ** 2)
    target = target / target.sum()
    tv = 0.5 * np.sum(np.abs(hist - target))
    assert tv < 0.03
