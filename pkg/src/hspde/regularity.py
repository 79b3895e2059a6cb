"""Admissible Hölder-exponent regions and pathwise exponent estimation.

The temporal/spatial regularity theory consumed here takes the form of a
linear budget in the (beta, gamma) plane: a pair of Hölder exponents
(beta in time, gamma in space) is admissible when

    beta + gamma / slope < budget,

with slope and budget depending on the setting:

* ``prop32``     white noise, plain second-order drift: slope 2,
                 budget 1/2 - 1/q - d/p.
* ``remark33``   time-interpolation refinement with smoothing parameter
                 theta: slope 2, budget (1 + theta)/2 - 1/q - d/4.
* ``colored``    smoothed noise with Cameron-Martin exponent theta and
                 integrability m: slope 2,
                 budget theta + 1/2 - d(1/2 + 1/m) - 1/q.
* ``fractional`` drift exponent alpha in (0, 2]: slope alpha, budget
                 1/2 - 1/q - 2d/(alpha p); alpha = 2 coincides with
                 prop32.

All region arithmetic is exact over rationals (inputs pass through
``Fraction``), and the inequalities stay strict: boundary points are
never admissible.

Exponent estimation uses dyadic max-increment log-log regression:
M(h) = max_n |u(t_n + h) - u(t_n)| over lags h = 2^j steps, slope fitted
by least squares with the two smallest and two largest dyadic levels
dropped, medianed across replicas.  The max pools whatever sections are
available (recorded points for the sup-space temporal mode, selected
time sections for the spatial fit) so the extreme-value sample count
stays comparable across lags.  Estimates are one-sided evidence: the
theory promises membership for every admissible exponent pair, so a
verification passes when no admissible vertex exceeds the estimate by
more than the calibrated tolerance (0.10).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence, Union

import numpy as np

from .convolve import TrajectoryEnsemble

__all__ = [
    "RegularityQuery",
    "ParameterSelection",
    "ExponentEstimate",
    "RegionVerdict",
    "admissible",
    "exponent_budget",
    "gamma_ceiling",
    "region_boundary",
    "select_sigma_delta",
    "estimate_temporal_exponent",
    "estimate_spatial_exponent",
    "verify_region",
]

THEOREMS = ("prop32", "remark33", "colored", "fractional")
EXPONENT_CAP = 1.5
DROP_LOW = 2
DROP_HIGH = 2
VERIFY_TOLERANCE = 0.10

Rational = Union[int, float, Fraction]


def _frac(x: Rational) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, np.integer)):
        return Fraction(int(x))
    # str() keeps the decimal literal the caller wrote, so 0.4 -> 2/5
    return Fraction(str(float(x)))


@dataclass(frozen=True)
class RegularityQuery:
    """Which regularity statement to query, with its exponents.

    ``p`` is required for the white-noise and fractional settings; the
    smoothed-noise budgets do not involve it (the selection step derives
    its own working integrability from theta and m).
    """

    theorem: str
    d: int
    q: Rational
    p: Optional[Rational] = None
    alpha: Rational = 2
    theta: Optional[Rational] = None
    m: Optional[Rational] = None

    def __post_init__(self):
        if self.theorem not in THEOREMS:
            raise ValueError(f"unknown theorem key {self.theorem!r}")
        if self.d < 1:
            raise ValueError("d must be a positive integer")
        if _frac(self.q) < 2:
            raise ValueError("q must be at least 2")
        if self.theorem in ("prop32", "fractional"):
            if self.p is None:
                raise ValueError(f"{self.theorem} needs p")
            if _frac(self.p) <= max(2, self.d):
                raise ValueError("p must exceed max(2, d)")
        if self.theorem == "fractional":
            a = _frac(self.alpha)
            if not (0 < a <= 2):
                raise ValueError("alpha must lie in (0, 2]")
        if self.theorem in ("remark33", "colored"):
            if self.theta is None:
                raise ValueError(f"{self.theorem} needs theta")
            if _frac(self.theta) < 0:
                raise ValueError("theta must be nonnegative")
        if self.theorem == "colored":
            if self.m is None:
                raise ValueError("colored needs m")
            if _frac(self.m) <= 2:
                raise ValueError("m must exceed 2")


def _slope(query: RegularityQuery) -> Fraction:
    return _frac(query.alpha) if query.theorem == "fractional" else Fraction(2)


def exponent_budget(query: RegularityQuery) -> Fraction:
    """Largest beta on the region's beta axis (exact rational)."""
    d, q = Fraction(query.d), _frac(query.q)
    half = Fraction(1, 2)
    if query.theorem == "prop32":
        return half - 1 / q - d / _frac(query.p)
    if query.theorem == "remark33":
        return half * (1 + _frac(query.theta)) - 1 / q - d / 4
    if query.theorem == "colored":
        return _frac(query.theta) + half - d * (half + 1 / _frac(query.m)) - 1 / q
    # fractional
    a = _frac(query.alpha)
    return half - 1 / q - 2 * d / (a * _frac(query.p))


def gamma_ceiling(query: RegularityQuery, beta: Rational) -> Fraction:
    """Supremum of admissible gamma at the given beta (can be <= 0)."""
    return _slope(query) * (exponent_budget(query) - _frac(beta))


def admissible(query: RegularityQuery, beta: Rational, gamma: Rational) -> bool:
    """Strict membership of (beta, gamma) in the admissible region."""
    b, g = _frac(beta), _frac(gamma)
    if b < 0 or g < 0:
        return False
    return g < gamma_ceiling(query, b)


def region_boundary(query: RegularityQuery, n_points: int = 33) -> np.ndarray:
    """(beta, gamma_max) samples along the budget line, clipped to >= 0.

    Empty region (budget <= 0) gives a (0, 2) array, not an error.
    """
    if n_points < 2:
        raise ValueError("need at least 2 boundary points")
    budget = exponent_budget(query)
    if budget <= 0:
        return np.empty((0, 2))
    betas = [budget * i / (n_points - 1) for i in range(n_points)]
    return np.array(
        [[float(b), float(gamma_ceiling(query, b))] for b in betas]
    )


@dataclass(frozen=True)
class ParameterSelection:
    """Midpoint pick of the proof-recipe exponents (exact rationals)."""

    sigma: Fraction
    delta: Fraction
    sigma_interval: tuple
    delta_interval: tuple
    beta: Fraction
    gamma: Fraction
    theorem: str


def _interval_midpoint(lo: Fraction, hi: Fraction, what: str) -> Fraction:
    if not lo < hi:
        raise RuntimeError(
            f"internal inconsistency: empty {what} interval ({lo}, {hi}) "
            "for an admissible query"
        )
    return (lo + hi) / 2


def _derived_integrability(query: RegularityQuery) -> Fraction:
    # working integrability exponent implied by the smoothing theta:
    # 1/p = 1/2 - theta/d + 1/m
    inv = Fraction(1, 2) - _frac(query.theta) / query.d + 1 / _frac(query.m)
    if inv <= 0:
        raise ValueError("theta too large for the derived integrability")
    return 1 / inv


def select_sigma_delta(query: RegularityQuery, beta: Rational,
                       gamma: Rational) -> ParameterSelection:
    """Midpoints of the open (sigma, delta) windows behind the estimate.

    sigma is picked first, then delta given sigma.  Every selection
    satisfies beta + delta + sigma + 1/q < 1/2.
    """
    if not admissible(query, beta, gamma):
        raise ValueError("(beta, gamma) is not admissible for this query")
    b, g = _frac(beta), _frac(gamma)
    d, q = Fraction(query.d), _frac(query.q)
    half = Fraction(1, 2)
    if query.theorem == "remark33":
        raise ValueError(
            "parameter selection is defined for the prop32, colored and "
            "fractional settings only"
        )
    if query.theorem == "fractional":
        a, p = _frac(query.alpha), _frac(query.p)
        sig_lo = d / (a * p)
        sig_hi = half - (d / p + g) / a - 1 / q - b
        sigma = _interval_midpoint(sig_lo, sig_hi, "sigma")
        del_lo = (d / p + g) / a
        del_hi = half - 1 / q - b - sigma
        delta = _interval_midpoint(del_lo, del_hi, "delta")
    else:
        p = _frac(query.p) if query.theorem == "prop32" \
            else _derived_integrability(query)
        sig_lo = d / (2 * p)
        sig_hi = half - 1 / q - d / (2 * p) - g / 2 - b
        sigma = _interval_midpoint(sig_lo, sig_hi, "sigma")
        del_lo = d / (2 * p) + g / 2
        del_hi = half - 1 / q - b - sigma
        delta = _interval_midpoint(del_lo, del_hi, "delta")
    if not b + delta + sigma + 1 / q < half:
        raise RuntimeError("internal inconsistency: selection broke the budget")
    return ParameterSelection(
        sigma=sigma,
        delta=delta,
        sigma_interval=(sig_lo, sig_hi),
        delta_interval=(del_lo, del_hi),
        beta=b,
        gamma=g,
        theorem=query.theorem,
    )


# ----- exponent estimation ----------------------------------------------------


@dataclass(frozen=True)
class ExponentEstimate:
    """Fitted Hölder exponent; exactly one of beta_hat/gamma_hat is set."""

    beta_hat: Optional[float]
    gamma_hat: Optional[float]
    per_replica: np.ndarray = field(repr=False)
    lag_range: tuple = (0.0, 0.0)
    fit_r2: float = 0.0
    kind: str = "temporal"

    @property
    def value(self) -> float:
        return self.beta_hat if self.beta_hat is not None else self.gamma_hat


def _dyadic_lags(n_samples: int) -> list:
    top = int(math.floor(math.log2(n_samples - 1)))
    return [1 << j for j in range(top + 1)]


def _kept_lags(n_samples: int) -> list:
    lags = _dyadic_lags(n_samples)
    kept = lags[DROP_LOW: len(lags) - DROP_HIGH]
    if len(kept) < 2:
        raise ValueError(
            f"{n_samples} samples give {len(lags)} dyadic levels; "
            f"at least {DROP_LOW + DROP_HIGH + 2} are needed"
        )
    return kept


def _max_increments(series: np.ndarray, lags: Sequence[int]) -> np.ndarray:
    """M(lag) = max over start (and any trailing axes) of |x(.+lag) - x(.)|."""
    return np.array(
        [np.abs(series[lag:] - series[:-lag]).max() for lag in lags]
    )


def _fit_loglog(lags_phys: np.ndarray, profile: np.ndarray):
    """Least-squares slope of log M vs log h; returns (slope, r2) or None."""
    if np.any(profile <= 0.0) or not np.all(np.isfinite(profile)):
        return None
    x = np.log(lags_phys)
    y = np.log(profile)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    total = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 if total == 0.0 else 1.0 - float(np.sum(resid**2)) / float(total)
    return float(slope), min(max(r2, 0.0), 1.0)


def _aggregate(slopes, r2s, excluded, what):
    if excluded:
        warnings.warn(
            f"excluded {excluded} degenerate (flat or zero) path(s) from "
            f"the {what} exponent fit",
            RuntimeWarning,
        )
    if not slopes:
        raise ValueError(f"all paths degenerate; cannot estimate {what} exponent")
    value = float(np.median(np.clip(slopes, 0.0, EXPONENT_CAP)))
    return value, float(np.median(r2s))


def estimate_temporal_exponent(
    ens: TrajectoryEnsemble,
    mode: str = "pointwise",
    point_index: Optional[int] = None,
) -> ExponentEstimate:
    """Dyadic max-increment fit of the time Hölder exponent.

    ``pointwise`` watches a single recorded spatial point (the middle one
    unless ``point_index`` says otherwise); ``sup-space`` takes the sup
    over all recorded points inside each increment.
    """
    if mode not in ("pointwise", "sup-space"):
        raise ValueError(f"unknown mode {mode!r}")
    n_times = ens.values.shape[1]
    if n_times < 64:
        raise ValueError("need at least 64 recorded times")
    dt = np.diff(ens.time_grid)
    if dt.size and not np.allclose(dt, dt[0], rtol=1e-9, atol=0.0):
        raise ValueError("recorded time grid must be uniform")
    kept = _kept_lags(n_times)
    lags_phys = np.asarray(kept, dtype=float) * float(dt[0])
    idx = ens.values.shape[2] // 2 if point_index is None else point_index
    slopes, r2s = [], []
    per_replica = np.full(ens.replicas, np.nan)
    excluded = 0
    for r in range(ens.replicas):
        series = ens.values[r, :, idx] if mode == "pointwise" else ens.values[r]
        fit = _fit_loglog(lags_phys, _max_increments(series, kept))
        if fit is None:
            excluded += 1
            continue
        slope = min(max(fit[0], 0.0), EXPONENT_CAP)
        per_replica[r] = slope
        slopes.append(slope)
        r2s.append(fit[1])
    value, r2 = _aggregate(slopes, r2s, excluded, "temporal")
    return ExponentEstimate(
        beta_hat=value,
        gamma_hat=None,
        per_replica=per_replica,
        lag_range=(float(lags_phys[0]), float(lags_phys[-1])),
        fit_r2=r2,
        kind="temporal",
    )


def _spatial_line(ens: TrajectoryEnsemble) -> np.ndarray:
    """Values along the first recorded axis, other axes held at midpoints."""
    shape = tuple(ens.space_shape)
    full = ens.values.reshape(ens.values.shape[:2] + shape)
    for _ in range(len(shape) - 1):
        full = full[..., full.shape[-1] // 2]
    return full  # (R, T, S_axis0)


def _spacing_along_axis(ens: TrajectoryEnsemble) -> float:
    shape = tuple(ens.space_shape)
    pts = ens.space_points.reshape(shape + (len(shape),))
    line = pts[(slice(None),) + (0,) * (len(shape) - 1) + (0,)]
    gaps = np.diff(line)
    if gaps.size == 0 or not np.allclose(gaps, gaps[0], rtol=1e-9, atol=0.0):
        raise ValueError("recorded spatial axis must be uniform")
    return float(gaps[0])


def _default_times(n_times: int, times) -> np.ndarray:
    if times is None:
        times = 32
    if np.isscalar(times):
        lo = n_times // 2
        return np.unique(np.linspace(lo, n_times - 1, int(times)).astype(int))
    return np.asarray(times, dtype=int)


def estimate_spatial_exponent(
    ens: TrajectoryEnsemble, times=None
) -> ExponentEstimate:
    """Dyadic max-increment fit of the space Hölder exponent.

    ``times`` selects recorded time indices (default: 32 from the upper
    half of the horizon, where the law is closest to stationary).  Each
    replica contributes a single fit: the max-increment statistic pools
    every selected time section, mirroring how the sup-space temporal
    mode pools recorded points, and the estimate is the median over
    replicas.  Pooling keeps the extreme-value sample count roughly flat
    across lags, which per-section fits do not.
    """
    n_space = ens.space_shape[0]
    if n_space < 33:
        raise ValueError("need at least 33 recorded points per spatial axis")
    kept = _kept_lags(n_space)
    lags_phys = np.asarray(kept, dtype=float) * _spacing_along_axis(ens)
    line = _spatial_line(ens)
    t_idx = _default_times(ens.values.shape[1], times)
    slopes, r2s = [], []
    per_rep = np.full(ens.replicas, np.nan)
    excluded = 0
    for r in range(ens.replicas):
        sections = line[r][t_idx].T  # (S_axis0, n_times), lags run down axis 0
        fit = _fit_loglog(lags_phys, _max_increments(sections, kept))
        if fit is None:
            excluded += 1
            continue
        slope = min(max(fit[0], 0.0), EXPONENT_CAP)
        per_rep[r] = slope
        slopes.append(slope)
        r2s.append(fit[1])
    value, r2 = _aggregate(slopes, r2s, excluded, "spatial")
    return ExponentEstimate(
        beta_hat=None,
        gamma_hat=value,
        per_replica=per_rep,
        lag_range=(float(lags_phys[0]), float(lags_phys[-1])),
        fit_r2=r2,
        kind="spatial",
    )


# ----- confrontation ----------------------------------------------------------


@dataclass(frozen=True)
class RegionVerdict:
    """Grid confrontation of an admissible region with fitted exponents."""

    passed: bool
    vacuous: bool
    tolerance: float
    beta_hat: Optional[float]
    gamma_hat: Optional[float]
    vertices: np.ndarray = field(repr=False)   # (n, 2) beta, gamma
    margins: np.ndarray = field(repr=False)    # (n, 2) slack per exponent
    failures: np.ndarray = field(repr=False)   # vertex indices that fail
    note: str = ""
    diagnostics: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "passed": bool(self.passed),
            "vacuous": bool(self.vacuous),
            "tolerance": self.tolerance,
            "beta_hat": self.beta_hat,
            "gamma_hat": self.gamma_hat,
            "vertices": np.asarray(self.vertices).tolist(),
            "margins": np.asarray(self.margins).tolist(),
            "failures": np.asarray(self.failures).tolist(),
            "note": self.note,
            "diagnostics": self.diagnostics,
        }


def _check_provenance(ens: TrajectoryEnsemble, query: RegularityQuery,
                      strict: bool) -> None:
    prov = ens.provenance or {}
    d = prov.get("dimension")
    if d is not None and d != query.d:
        raise ValueError(f"ensemble is {d}-dimensional, query says d={query.d}")
    if query.theorem == "fractional":
        a = prov.get("alpha")
        if a is not None and abs(a - float(_frac(query.alpha))) > 1e-12:
            raise ValueError(
                f"ensemble was driven with alpha={a}, query says {query.alpha}"
            )
    if strict and query.theta is not None:
        t = prov.get("theta")
        if t is not None and abs(t - float(_frac(query.theta))) > 1e-12:
            raise ValueError(
                f"ensemble noise has theta={t}, query claims {query.theta}"
            )


def verify_region(
    ens: TrajectoryEnsemble,
    query: RegularityQuery,
    tolerance: float = VERIFY_TOLERANCE,
    grid_size: int = 5,
    strict_provenance: bool = False,
) -> RegionVerdict:
    """PASS iff every vertex of a grid over the admissible region sits
    below the fitted exponents plus tolerance.

    The structural provenance of the ensemble (dimension, drift exponent)
    must match the query; the smoothing parameters are the theory side
    being confronted, so they are only checked when ``strict_provenance``
    is set.
    """
    if grid_size < 2:
        raise ValueError("grid_size must be at least 2")
    _check_provenance(ens, query, strict_provenance)
    budget = exponent_budget(query)
    if budget <= 0:
        return RegionVerdict(
            passed=True,
            vacuous=True,
            tolerance=tolerance,
            beta_hat=None,
            gamma_hat=None,
            vertices=np.empty((0, 2)),
            margins=np.empty((0, 2)),
            failures=np.empty(0, dtype=int),
            note="empty region: budget <= 0, nothing to verify",
        )
    t_est = estimate_temporal_exponent(ens, mode="sup-space")
    s_est = estimate_spatial_exponent(ens)
    beta_hat, gamma_hat = t_est.beta_hat, s_est.gamma_hat
    verts = []
    for i in range(grid_size):
        b = budget * i / (grid_size - 1)
        ceil = gamma_ceiling(query, b)
        for j in range(grid_size):
            verts.append((float(b), float(ceil * j / (grid_size - 1))))
    vertices = np.array(verts)
    margins = np.column_stack(
        [
            beta_hat + tolerance - vertices[:, 0],
            gamma_hat + tolerance - vertices[:, 1],
        ]
    )
    failures = np.nonzero((margins < 0).any(axis=1))[0]
    return RegionVerdict(
        passed=failures.size == 0,
        vacuous=False,
        tolerance=tolerance,
        beta_hat=beta_hat,
        gamma_hat=gamma_hat,
        vertices=vertices,
        margins=margins,
        failures=failures,
        note="",
        diagnostics={
            "beta_fit_r2": t_est.fit_r2,
            "gamma_fit_r2": s_est.fit_r2,
            "beta_lag_range": list(t_est.lag_range),
            "gamma_lag_range": list(s_est.lag_range),
        },
    )
