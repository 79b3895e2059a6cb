import numpy as np
import pytest

from hspde.spectral import SpectralDomain
from hspde.noise import (
    CameronMartinSpec,
    GProcess,
    make_cameron_martin,
    sample_wiener_increments,
    apply_G,
    validate_noise_hypotheses,
    g_preset,
)


@pytest.fixture(scope="module")
def dom():
    return SpectralDomain(1, 63, 32)


# ---------------------------------------------------------------------------
# increment law
# ---------------------------------------------------------------------------

def test_increment_variance_and_cross_mode_independence(dom):
    spec = make_cameron_martin(dom, theta=0.0, truncation=4)
    tg = np.linspace(0.0, 1.0, 4)
    dt = tg[1] - tg[0]
    reps = 4000
    draws = np.stack(
        [sample_wiener_increments(spec, tg, seed=42, replica=r)[:, 0] for r in range(reps)]
    )  # (reps, modes), first increment of each stream
    cov = draws.T @ draws / reps
    se = dt * np.sqrt(2.0 / reps)
    assert np.abs(np.diag(cov) - dt).max() < 3 * se
    off = cov - np.diag(np.diag(cov))
    assert np.abs(off).max() < 3 * dt / np.sqrt(reps) * 2


def test_process_variance_grows_linearly(dom):
    spec = make_cameron_martin(dom, theta=0.0, truncation=2)
    tg = np.linspace(0.0, 2.0, 9)
    reps = 4000
    w_end = np.array(
        [sample_wiener_increments(spec, tg, seed=7, replica=r).sum(axis=1) for r in range(reps)]
    )
    var = w_end.var(axis=0)
    se = 2.0 * np.sqrt(2.0 / reps)
    assert np.abs(var - 2.0).max() < 3 * se


def test_disjoint_increments_uncorrelated(dom):
    spec = make_cameron_martin(dom, theta=0.0, truncation=1)
    tg = np.linspace(0.0, 1.0, 3)
    reps = 10_000
    pairs = np.array(
        [sample_wiener_increments(spec, tg, seed=3, replica=r)[0] for r in range(reps)]
    )
    corr = np.corrcoef(pairs[:, 0], pairs[:, 1])[0, 1]
    assert abs(corr) <= 3e-2


def test_increments_deterministic_per_key(dom):
    spec = make_cameron_martin(dom, theta=0.3, truncation=5)
    tg = np.linspace(0.0, 1.0, 17)
    a = sample_wiener_increments(spec, tg, seed=11, replica=2)
    b = sample_wiener_increments(spec, tg, seed=11, replica=2)
    c = sample_wiener_increments(spec, tg, seed=11, replica=3)
    d_ = sample_wiener_increments(spec, tg, seed=12, replica=2)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert not np.array_equal(a, d_)


def test_nonuniform_grid_rejected(dom):
    spec = make_cameron_martin(dom, theta=0.0, truncation=2)
    with pytest.raises(ValueError, match="uniform"):
        sample_wiener_increments(spec, np.array([0.0, 0.1, 0.3]), seed=0, replica=0)


# ---------------------------------------------------------------------------
# Cameron-Martin scale and the structure map
# ---------------------------------------------------------------------------

def test_parseval_at_theta_zero(dom):
    spec = make_cameron_martin(dom, theta=0.0, truncation=16)
    rng = np.random.default_rng(0)
    y = rng.normal(size=16)
    vals = apply_G(GProcess.identity(), spec, 0, y)
    l2 = np.sqrt(dom.weight * np.sum(vals**2))
    assert abs(l2 - np.linalg.norm(y)) < 1e-8


def test_embedding_norm_nonincreasing_in_theta(dom):
    rng = np.random.default_rng(1)
    y = rng.normal(size=12)
    norms = []
    for theta in (0.0, 0.2, 0.4, 0.8):
        spec = make_cameron_martin(dom, theta=theta, truncation=12)
        vals = apply_G(GProcess.identity(), spec, 0, y)
        norms.append(np.sqrt(dom.weight * np.sum(vals**2)))
    assert all(b <= a + 1e-12 for a, b in zip(norms, norms[1:]))


def test_weights_formula(dom):
    spec = make_cameron_martin(dom, theta=0.5, truncation=3)
    lam = np.pi**2 * np.arange(1, 4) ** 2
    assert np.allclose(spec.lap_eigenvalues, lam, rtol=1e-13)
    assert np.allclose(spec.weights, (1 + lam) ** (-0.25), rtol=1e-13)


def test_apply_g_identity_on_basis_vector(dom):
    spec = make_cameron_martin(dom, theta=0.0, truncation=8)
    e3 = np.zeros(8)
    e3[2] = 1.0
    vals = apply_G(GProcess.identity(), spec, 0, e3)
    assert np.allclose(vals, spec.basis_functions[2], atol=1e-14)


def test_apply_g_zero_multiplier(dom):
    spec = make_cameron_martin(dom, theta=0.2, truncation=8)
    G = GProcess.multiplication(0.0, m=8, q=16)
    vals = apply_G(G, spec, 0, np.ones(8))
    assert np.allclose(vals, 0.0)


def test_apply_g_multiplication_bound(dom):
    # |g . f|_p <= sup|g| |f|_p on a sweep of random unit coefficient vectors
    spec = make_cameron_martin(dom, theta=0.3, truncation=16)
    G = g_preset("bump", m=8, q=16)
    ident = GProcess.identity()
    rng = np.random.default_rng(2)
    p, w = 4.0, dom.weight
    gsup = G.values_at(dom, 0, 0.0).max()
    for _ in range(200):
        y = rng.normal(size=16)
        y /= np.linalg.norm(y)
        f = apply_G(ident, spec, 0, y)
        gf = apply_G(G, spec, 0, y)
        lhs = (w * np.sum(np.abs(gf) ** p)) ** (1 / p)
        rhs = gsup * (w * np.sum(np.abs(f) ** p)) ** (1 / p)
        assert lhs <= rhs * (1 + 1e-12)


def test_g_preset_time_dependence(dom):
    G = g_preset("separable:sin", m=8, q=16)
    assert G.time_dependent
    v0 = G.values_at(dom, 0, 0.0)
    v1 = G.values_at(dom, 1, 0.25)
    assert not np.allclose(v0, v1)
    const = g_preset("const", m=8, q=16)
    assert not const.time_dependent
    assert np.allclose(const.values_at(dom, 0, 0.0), 1.0)


def test_g_table_lookup(dom):
    table = np.vstack([np.full(dom.n_points, 1.0), np.full(dom.n_points, 2.0)])
    G = GProcess.from_table(table, m=8, q=16)
    assert np.allclose(G.values_at(dom, 0, 0.0), 1.0)
    assert np.allclose(G.values_at(dom, 1, 0.5), 2.0)
    # past the table end the last row holds (time-constant tail)
    assert np.allclose(G.values_at(dom, 9, 0.9), 2.0)


def test_truncation_beyond_grid_rejected():
    with pytest.raises(ValueError, match="truncation"):
        make_cameron_martin(SpectralDomain(1, 8, 8), theta=0.0, truncation=9)


# ---------------------------------------------------------------------------
# hypothesis bookkeeping
# ---------------------------------------------------------------------------

def test_validate_worked_example(dom):
    spec = make_cameron_martin(dom, theta=0.4, truncation=8)
    G = g_preset("bump", m=8, q=16)
    rep = validate_noise_hypotheses(G, spec, p=4.0, d=1)
    assert rep["ok"]
    # theta window (0.1875, 0.5) contains 0.4
    window = [c for c in rep["clauses"] if c["name"].startswith("theta")][0]
    assert window["ok"]
    assert "0.1875" in window["detail"]
    # p=4 is inconsistent with the implied p = 1/(1/2 - 0.4 + 1/8) = 4.444...
    assert rep["warnings"]
    assert rep["derived"]["implied_p"] == pytest.approx(1.0 / 0.225, rel=1e-12)


def test_validate_m_too_small(dom):
    spec = make_cameron_martin(dom, theta=0.4, truncation=8)
    G = GProcess.multiplication(1.0, m=2, q=16)
    rep = validate_noise_hypotheses(G, spec, p=2.0, d=1)
    assert not rep["ok"]
    assert not rep["clauses"][0]["ok"]


def test_validate_p_equal_m_endpoint(dom):
    spec = make_cameron_martin(dom, theta=0.4, truncation=8)
    G = GProcess.multiplication(1.0, m=8, q=16)
    rep = validate_noise_hypotheses(G, spec, p=8.0, d=1)
    assert [c for c in rep["clauses"] if "p in" in c["name"]][0]["ok"]


def test_validate_embedding_exponent(dom):
    spec = make_cameron_martin(dom, theta=0.4, truncation=8)
    G = g_preset("const", m=8, q=16)
    rep = validate_noise_hypotheses(G, spec, p=4.0, d=1)
    # 1/r = 1/2 - theta/d = 0.1
    assert rep["derived"]["embedding_r"] == pytest.approx(10.0, rel=1e-12)
