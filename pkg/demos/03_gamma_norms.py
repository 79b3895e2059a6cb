"""Gamma-radonifying norms by Monte Carlo.

For a finite-rank operator R the gamma-norm is (E |sum_k g_k R e_k|^2)^(1/2)
with iid standard Gaussians g_k.  Into a Hilbert target this is the
Hilbert-Schmidt norm, which gives sharp test values; into L^p targets it
is the quantity the noise hypotheses actually control.
"""
import numpy as np

from hspde import (
    FiniteRankOperator,
    SpectralDomain,
    check_ideal_property,
    make_cameron_martin,
    mc_gamma_norm,
)
from hspde.gamma_radon import check_domination_bound

# Hilbert-target identity: |I_n|_gamma = sqrt(n)
print("identity operators, p=2 target (exact value sqrt(n)):")
for n in (4, 16):
    est = mc_gamma_norm(FiniteRankOperator.identity(n), p=2.0,
                        samples=50_000, seed=n)
    print(f"  n={n:>2}: estimate {est.value:.4f} vs {np.sqrt(n):.4f} "
          f"(std error of squared mean {est.std_error:.4f})")

# the norm ignores rotations of the Gaussian coordinates
rng = np.random.default_rng(5)
mat = rng.normal(size=(6, 6))
q, _ = np.linalg.qr(rng.normal(size=(6, 6)))
a = mc_gamma_norm(FiniteRankOperator.from_matrix(mat), 4.0, 50_000, seed=1)
b = mc_gamma_norm(FiniteRankOperator.from_matrix(mat @ q), 4.0, 50_000, seed=2)
print(f"\nrotation invariance (p=4): {a.value:.4f} vs {b.value:.4f}")

# ideal property: |S2 R S1|_gamma <= |S2| |R|_gamma |S1|
rep = check_ideal_property(np.diag(rng.uniform(0, 1, 6)),
                           FiniteRankOperator.from_matrix(mat),
                           np.diag(rng.uniform(0, 1, 6)),
                           p=2.0, samples=20_000, seed=9)
print(f"\nideal property: left {rep['left']:.4f} <= right {rep['right']:.4f} "
      f"-> {rep['ok']}")

# domination: a multiplication operator pointwise-bounded by g has
# gamma-norm controlled by |g|_p; the ratio is stable under doubling the
# noise truncation when the noise is smooth enough (theta > d/2)
spec = make_cameron_martin(SpectralDomain(1, 63, 48), theta=1.2, truncation=8)
R = FiniteRankOperator.multiplication(lambda pts: 1.0 + pts[:, 0], spec)
bound = check_domination_bound(R, R.envelope(), p=4.0, samples=20_000, seed=3)
print(f"domination ratio |R|_gamma / |g|_p = {bound['ratio']:.4f}, "
      f"doubled truncation {bound['ratio_doubled']:.4f}")
