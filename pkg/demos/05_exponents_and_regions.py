"""Holder exponents: predicted admissible regions vs measured paths.

The regularity theory predicts an admissible set of (time, space) Holder
exponent pairs cut out by a strict budget inequality; the package
computes those regions in exact rational arithmetic, estimates the
exponents of simulated paths from dyadic max-increments, and confronts
one against the other.
"""
from fractions import Fraction

import numpy as np

from hspde import (
    GProcess,
    RecordSpec,
    RegularityQuery,
    SimulationPlan,
    SpectralDomain,
    admissible,
    build_laplacian_system,
    estimate_spatial_exponent,
    estimate_temporal_exponent,
    exponent_budget,
    make_cameron_martin,
    region_boundary,
    select_sigma_delta,
    simulate,
    verify_region,
)

# exact region arithmetic
query = RegularityQuery("prop32", d=1, q=8, p=4)
print("white-noise region, d=1, q=8, p=4:")
print("  exponent budget:", exponent_budget(query), "=",
      float(exponent_budget(query)))
rows = region_boundary(query, n_points=6)
print("  boundary (beta, gamma_max):",
      [(float(b), float(g)) for b, g in rows])
print("  (0.05, 0.10) admissible:", admissible(query, 0.05, 0.10))
print("  (0.10, 0.20) admissible:", admissible(query, 0.10, 0.20))

# the proof's free parameters: an interior pair fixes a (sigma, delta) window
sel = select_sigma_delta(query, Fraction(1, 20), Fraction(1, 10))
print("  selected sigma:", sel.sigma, "in", sel.sigma_interval)
print("  selected delta:", sel.delta, "in", sel.delta_interval)

# simulate a small white-noise ensemble and measure its exponents
dom = SpectralDomain(1, 64, 64)
plan = SimulationPlan(
    system=build_laplacian_system(dom),
    noise=make_cameron_martin(dom, theta=0.0, truncation=64),
    G=GProcess.identity(), seed=777, T=1.0, steps=2048, replicas=12,
    record=RecordSpec(space_count=64),
)
ens = simulate(plan)
beta = estimate_temporal_exponent(ens, mode="sup-space")
gamma = estimate_spatial_exponent(ens)
print(f"\nmeasured exponents: beta_hat={beta.beta_hat:.3f} "
      f"(fit r2 {beta.fit_r2:.3f}), gamma_hat={gamma.gamma_hat:.3f}")

# every admissible vertex must sit below the measured exponents + tolerance
verdict = verify_region(ens, query)
print(f"region verdict: {'PASS' if verdict.passed else 'FAIL'} over "
      f"{len(verdict.vertices)} grid vertices, "
      f"min margin {float(np.min(verdict.margins)):.3f}")

# an inflated claim must fail on the same paths
greedy = RegularityQuery("prop32", d=1, q=400, p=400)
bad = verify_region(ens, greedy)
print(f"inflated-budget verdict: {'PASS' if bad.passed else 'FAIL'} "
      f"({len(bad.failures)} failing vertices)")
