"""Stochastic convolution scheme tests.

Oracles: the closed-form Ornstein-Uhlenbeck variance
(1 - e^(-2 mu t)) / (2 mu), an independent Euler-Maruyama integrator
written here, and exact structural identities (linearity in the gain,
semigroup decay once the noise switches off, adaptedness to the
increment stream).
"""

import numpy as np
import pytest

from hspde.spectral import (
    SpectralDomain,
    EllipticOperatorSpec,
    build_laplacian_system,
    build_variable_coefficient_system,
)
from hspde.noise import GProcess, make_cameron_martin, g_preset
from hspde.convolve import (
    RecordSpec,
    SimulationPlan,
    simulate,
    simulate_exact_diagonal,
    simulate_frozen_exponential,
    simulate_from_increments,
    mean_mq_norm,
    predicted_second_moment,
)
from hspde.noise import sample_wiener_increments


# ----- independent Euler-Maruyama oracle ------------------------------------


def em_ou_endpoints(mu, T, n_steps, n_paths, seed):
    """dX = -mu X dt + dW integrated by explicit Euler; returns X(T) draws."""
    rng = np.random.default_rng(seed)
    dt = T / n_steps
    x = np.zeros(n_paths)
    for _ in range(n_steps):
        x = x * (1.0 - mu * dt) + np.sqrt(dt) * rng.standard_normal(n_paths)
    return x


def ou_variance(mu, t):
    return (1.0 - np.exp(-2.0 * mu * t)) / (2.0 * mu)


# ----- fixtures --------------------------------------------------------------


def single_mode_plan(replicas, steps=16, seed=1108, alpha=2.0):
    dom = SpectralDomain(1, 64, 1)
    system = build_laplacian_system(dom)
    noise = make_cameron_martin(dom, theta=0.0, truncation=1)
    return SimulationPlan(
        system=system,
        noise=noise,
        G=GProcess.identity(),
        seed=seed,
        alpha=alpha,
        T=1.0,
        steps=steps,
        replicas=replicas,
        record=RecordSpec(time_stride=steps, space_count=64),
    )


def small_plan(g, replicas=4, steps=32, seed=91, theta=0.5, modes=8, grid=32,
               scheme="auto", stride=None, space=None):
    dom = SpectralDomain(1, grid, modes)
    system = build_laplacian_system(dom)
    noise = make_cameron_martin(dom, theta=theta, truncation=modes)
    return SimulationPlan(
        system=system,
        noise=noise,
        G=g,
        seed=seed,
        T=1.0,
        steps=steps,
        replicas=replicas,
        record=RecordSpec(time_stride=stride or 1, space_count=space or grid),
        scheme=scheme,
    )


def mode_coefficients(ens, system):
    """Project recorded full-grid values back onto the eigenmodes."""
    assert len(ens.space_indices) == system.domain.n_points
    return system.weight * np.einsum(
        "rts,ks->rtk", ens.values, system.modes[:, ens.space_indices]
    )


# ----- law of the solution ---------------------------------------------------


def test_single_mode_variance_matches_ou_formula():
    # exact-in-law sampling: coarse steps must still hit the OU variance
    plan = single_mode_plan(replicas=6000, steps=8)
    ens = simulate_exact_diagonal(plan)
    mu = np.pi**2
    c_end = mode_coefficients(ens, plan.system)[:, -1, 0]
    var_hat = c_end.var(ddof=1)
    want = ou_variance(mu, 1.0)
    se = want * np.sqrt(2.0 / (len(c_end) - 1))
    assert abs(var_hat - want) < 3 * se


def test_em_oracle_agrees_with_scheme():
    mu = np.pi**2
    plan = single_mode_plan(replicas=4000, steps=8, seed=5)
    ens = simulate_exact_diagonal(plan)
    c_end = mode_coefficients(ens, plan.system)[:, -1, 0]
    em_end = em_ou_endpoints(mu, 1.0, 5000, 4000, seed=1234)
    v_scheme = c_end.var(ddof=1)
    v_em = em_end.var(ddof=1)
    se = np.hypot(
        v_scheme * np.sqrt(2.0 / 3999), v_em * np.sqrt(2.0 / 3999)
    )
    assert abs(v_scheme - v_em) < 3 * se


def test_covariance_decays_at_semigroup_rate():
    mu = np.pi**2
    plan = single_mode_plan(replicas=8000, steps=16, seed=21)
    plan = SimulationPlan(
        system=plan.system, noise=plan.noise, G=plan.G, seed=plan.seed,
        T=1.0, steps=16, replicas=8000,
        record=RecordSpec(time_stride=1, space_count=64),
    )
    coeffs = mode_coefficients(simulate_exact_diagonal(plan), plan.system)
    x, y = coeffs[:, 8, 0], coeffs[:, 16, 0]  # t = 0.5 and t = 1.0
    prods = x * y
    want = np.exp(-mu * 0.5) * ou_variance(mu, 0.5)
    se = prods.std(ddof=1) / np.sqrt(len(prods))
    assert abs(prods.mean() - want) < 3 * se


def test_fractional_drift_slows_decay():
    # alpha = 1 drift sqrt(lambda): variance follows the OU law with mu = pi
    plan = single_mode_plan(replicas=6000, steps=8, seed=77, alpha=1.0)
    ens = simulate(plan)
    c_end = mode_coefficients(ens, plan.system)[:, -1, 0]
    want = ou_variance(np.pi, 1.0)
    se = want * np.sqrt(2.0 / (len(c_end) - 1))
    assert abs(c_end.var(ddof=1) - want) < 3 * se
    assert want > ou_variance(np.pi**2, 1.0)  # slower decay, more variance


def test_endpoint_values_look_gaussian():
    plan = small_plan(GProcess.identity(), replicas=6000, steps=64,
                      modes=4, grid=16, seed=3)
    ens = simulate(plan)
    sample = ens.values[:, -1, 8]
    z = (sample - sample.mean()) / sample.std(ddof=1)
    n = len(z)
    skew = np.mean(z**3)
    exkurt = np.mean(z**4) - 3.0
    assert abs(skew) < 5 * np.sqrt(6.0 / n)
    assert abs(exkurt) < 5 * np.sqrt(24.0 / n)


# ----- structural identities -------------------------------------------------


def test_zero_multiplier_gives_zero_paths():
    g = GProcess.multiplication(0.0, m=8.0, q=16.0)
    ens = simulate_frozen_exponential(small_plan(g, replicas=3))
    assert np.all(ens.values == 0.0)


def test_frozen_matches_exact_bitwise_for_identity():
    plan = small_plan(GProcess.identity(), replicas=3)
    a = simulate_exact_diagonal(plan)
    b = simulate_frozen_exponential(plan)
    assert np.array_equal(a.values, b.values)


def test_frozen_matches_exact_bitwise_for_constant_multiplier():
    g = GProcess.multiplication(1.7, m=8.0, q=16.0)
    plan = small_plan(g, replicas=3)
    a = simulate_exact_diagonal(plan)
    b = simulate_frozen_exponential(plan)
    assert np.array_equal(a.values, b.values)


def test_identity_and_unit_multiplier_agree():
    # identity takes the diagonal shortcut, g == 1 the projection path
    plan_id = small_plan(GProcess.identity(), replicas=2, seed=6)
    plan_g1 = small_plan(GProcess.multiplication(1.0, m=8.0, q=16.0),
                         replicas=2, seed=6)
    a = simulate(plan_id)
    b = simulate(plan_g1)
    scale = np.abs(a.values).max()
    assert np.abs(a.values - b.values).max() < 1e-12 * max(scale, 1.0)


def test_trajectories_exactly_linear_in_gain():
    g1 = GProcess.multiplication(0.75, m=8.0, q=16.0)
    g2 = GProcess.multiplication(1.5, m=8.0, q=16.0)
    a = simulate(small_plan(g1, replicas=3, seed=17))
    b = simulate(small_plan(g2, replicas=3, seed=17))
    assert np.array_equal(2.0 * a.values, b.values)


def test_semigroup_decay_after_noise_stops():
    def gate(t, pts):
        return np.full(len(pts), 1.0 if t < 0.5 else 0.0)

    g = GProcess.multiplication(gate, m=8.0, q=16.0, time_dependent=True)
    plan = small_plan(g, replicas=2, steps=64, modes=6, grid=24)
    ens = simulate_frozen_exponential(plan)
    coeffs = mode_coefficients(ens, plan.system)
    lam = np.real(plan.system.eigenvalues)
    c_half = coeffs[:, 32, :]
    for row in (40, 48, 64):
        t_gap = ens.time_grid[row] - ens.time_grid[32]
        want = c_half * np.exp(-lam * t_gap)[None, :]
        assert np.abs(coeffs[:, row, :] - want).max() < 1e-10


def test_splice_preserves_past_values():
    plan = small_plan(GProcess.identity(), replicas=2, steps=32, modes=6,
                      grid=24, seed=40)
    tg = plan.time_grid
    incs = np.stack(
        [sample_wiener_increments(plan.noise, tg, plan.seed, r) for r in range(2)]
    )
    other = np.stack(
        [sample_wiener_increments(plan.noise, tg, 999, r) for r in range(2)]
    )
    spliced = incs.copy()
    spliced[:, :, 20:] = other[:, :, 20:]
    a = simulate_from_increments(plan, incs)
    b = simulate_from_increments(plan, spliced)
    assert np.array_equal(a.values[:, : 20 + 1, :], b.values[:, : 20 + 1, :])
    assert not np.array_equal(a.values[:, 21:, :], b.values[:, 21:, :])


def test_same_plan_reproduces_bitwise():
    plan = small_plan(g_preset("bump", 8.0, 16.0), replicas=3, seed=52)
    a = simulate(plan)
    b = simulate(plan)
    assert np.array_equal(a.values, b.values)
    c = simulate(small_plan(g_preset("bump", 8.0, 16.0), replicas=3, seed=53))
    assert not np.array_equal(a.values, c.values)


def test_auto_scheme_dispatch():
    ens_id = simulate(small_plan(GProcess.identity(), replicas=1, steps=8))
    assert ens_id.provenance["scheme"] == "exact-diagonal"
    ens_bump = simulate(small_plan(g_preset("bump", 8.0, 16.0), replicas=1, steps=8))
    assert ens_bump.provenance["scheme"] == "frozen-exponential"


def test_exact_scheme_rejects_nondiagonal_g():
    plan = small_plan(g_preset("bump", 8.0, 16.0), replicas=1, steps=8)
    with pytest.raises(ValueError, match="frozen"):
        simulate_exact_diagonal(plan)


# ----- predicted second moment ----------------------------------------------


def test_predicted_second_moment_matches_closed_form():
    plan = small_plan(GProcess.identity(), replicas=1, steps=16, theta=0.3,
                      modes=5, grid=20)
    lam = plan.system.eigenvalues.real
    w2 = plan.noise.weights**2
    want = np.sum(w2 * (1.0 - np.exp(-2.0 * lam)) / (2.0 * lam))
    got = predicted_second_moment(plan)
    assert abs(got - want) < 1e-12 * want


def test_predicted_second_moment_matches_ensemble():
    plan = small_plan(g_preset("bump", 8.0, 16.0), replicas=3000, steps=32,
                      modes=8, grid=32, seed=9)
    ens = simulate(plan)
    coeffs = mode_coefficients(ens, plan.system)
    sq = np.sum(coeffs[:, -1, :] ** 2, axis=1)
    want = predicted_second_moment(plan)
    se = sq.std(ddof=1) / np.sqrt(len(sq))
    assert abs(sq.mean() - want) < 3 * se


def test_refinement_shrinks_freezing_bias():
    g = g_preset("separable:sin", 8.0, 16.0)

    def predicted(steps):
        return predicted_second_moment(small_plan(g, replicas=1, steps=steps))

    p = {n: predicted(n) for n in (64, 128, 256, 512)}
    # freezing bias is first order in dt: consecutive gaps halve
    gap1, gap2, gap3 = p[128] - p[64], p[256] - p[128], p[512] - p[256]
    assert 1.7 < gap1 / gap2 < 2.3
    assert 1.7 < gap2 / gap3 < 2.3
    assert abs(gap3) / p[512] < 0.01


# ----- norms over the ensemble ----------------------------------------------


def test_mean_mq_norm_zero_ensemble():
    g = GProcess.multiplication(0.0, m=8.0, q=16.0)
    est = mean_mq_norm(simulate(small_plan(g, replicas=2)), p=2.0, q=2.0)
    assert est.value == 0.0


def test_mean_mq_norm_exact_doubling():
    a = mean_mq_norm(
        simulate(small_plan(GProcess.multiplication(1.0, 8.0, 16.0), seed=31)),
        p=2.0, q=2.0,
    )
    b = mean_mq_norm(
        simulate(small_plan(GProcess.multiplication(2.0, 8.0, 16.0), seed=31)),
        p=2.0, q=2.0,
    )
    assert b.value == 2.0 * a.value


def test_mean_mq_norm_matches_closed_form():
    # p = q = 2 reduces to the integrated OU variance, single mode
    plan = single_mode_plan(replicas=5000, steps=64, seed=63)
    plan = SimulationPlan(
        system=plan.system, noise=plan.noise, G=plan.G, seed=plan.seed,
        T=1.0, steps=64, replicas=5000,
        record=RecordSpec(time_stride=1, space_count=64),
    )
    est = mean_mq_norm(simulate(plan), p=2.0, q=2.0)
    mu = np.pi**2
    want_integral = (1.0 - ou_variance(mu, 1.0)) / (2.0 * mu)
    assert abs(est.value**2 - want_integral) < 3 * est.std_error


# ----- non-self-adjoint drift ------------------------------------------------


def nonnormal_system():
    # cell Peclet above 1 turns the FD spectrum complex while the
    # eigenbasis stays well conditioned on a small grid
    dom = SpectralDomain(1, 8, 8)
    spec = EllipticOperatorSpec(a=1.0, b=30.0, ellipticity=0.5)
    return dom, build_variable_coefficient_system(dom, spec)


def test_nonselfadjoint_paths_are_real():
    dom, system = nonnormal_system()
    assert np.iscomplexobj(system.eigenvalues)
    assert np.abs(system.eigenvalues.imag).max() > 1.0
    noise = make_cameron_martin(dom, theta=0.5, truncation=6)
    plan = SimulationPlan(
        system=system, noise=noise, G=GProcess.identity(), seed=8,
        T=0.5, steps=32, replicas=2,
        record=RecordSpec(time_stride=4, space_count=8),
    )
    ens = simulate(plan)
    assert ens.provenance["scheme"] == "frozen-exponential"
    assert np.isrealobj(ens.values)
    assert np.isfinite(ens.values).all()
    with pytest.raises(ValueError):
        simulate_exact_diagonal(plan)
    with pytest.raises(ValueError):
        predicted_second_moment(plan)


# ----- plan validation and layout --------------------------------------------


def test_plan_validation():
    dom = SpectralDomain(1, 16, 4)
    system = build_laplacian_system(dom)
    noise = make_cameron_martin(dom, 0.5, 4)
    good = dict(system=system, noise=noise, G=GProcess.identity(), seed=1)
    with pytest.raises(ValueError, match="alpha"):
        SimulationPlan(**good, alpha=2.5)
    with pytest.raises(ValueError, match="divide"):
        SimulationPlan(**good, steps=10, record=RecordSpec(time_stride=3))
    with pytest.raises(ValueError, match="scheme"):
        SimulationPlan(**good, scheme="magic")
    other = make_cameron_martin(SpectralDomain(1, 8, 4), 0.5, 4)
    with pytest.raises(ValueError, match="grid"):
        SimulationPlan(system=system, noise=other, G=GProcess.identity(), seed=1)


def test_record_layout_2d():
    dom = SpectralDomain(2, 15, 3)
    system = build_laplacian_system(dom)
    noise = make_cameron_martin(dom, theta=1.5, truncation=9)
    plan = SimulationPlan(
        system=system, noise=noise, G=GProcess.identity(), seed=2,
        T=0.25, steps=8, replicas=2,
        record=RecordSpec(time_stride=2, space_count=8),
    )
    ens = simulate(plan)
    assert ens.values.shape == (2, 5, 49)
    assert ens.space_shape == (7, 7)
    assert ens.space_points.shape == (49, 2)
    assert abs(ens.space_weight - (2.0 / 16.0) ** 2) < 1e-15
    # recorded points form the odd sublattice of the 15x15 raster
    assert np.allclose(ens.space_points[0], [2.0 / 16.0, 2.0 / 16.0])
    assert len(ens.time_grid) == 5
