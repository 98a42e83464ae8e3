"""Exact and Monte-Carlo checks of the sampler.

Two independent routes give the optimal expected distortion:

* :func:`expected_distortion_closed_form` evaluates ``E||Q' - diag(d)||^2``
  directly from the inclusion probabilities, and
* :func:`lower_bound` evaluates the duality bound: subtract the shift matrix
  ``B`` whose removal flattens the light spectrum to ``c``, then take the best
  fixed rank-r approximation of what is left.

:func:`enumerate_outcomes` gives the exact distribution of index sets by
splitting ``[0, 1)`` at every fractional segment boundary.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .linalg import DEFAULT_RANK_TOL, SvdFactors, svd, truncate_rank
from .sampler import LowRankSampler, SamplingPlan, build_plan, make_rng, systematic_select

MAX_ENUM_LIGHT = 24
MERGE_EPS = 1e-12
N_SIGMA = 4.0
CHUNK = 1024


class VerificationError(AssertionError):
    """An optimality or consistency check failed."""


@dataclass(frozen=True)
class OutcomeTable:
    outcomes: list[tuple[tuple[int, ...], float]]
    breakpoints: np.ndarray

    @property
    def total_mass(self) -> float:
        return math.fsum(m for _, m in self.outcomes)

    def marginals(self, n: int) -> np.ndarray:
        """Inclusion probability of every index ``0 .. n-1``."""
        out = np.zeros(n)
        for index_set, mass in self.outcomes:
            for i in index_set:
                out[i] += mass
        return out


def enumerate_outcomes(plan: SamplingPlan) -> OutcomeTable:
    """Exact outcome distribution of :func:`systematic_select` over ``S ~ U[0, 1)``."""
    if plan.is_deterministic:
        return OutcomeTable(outcomes=[((), 1.0)], breakpoints=np.zeros(1))
    if plan.n_light > MAX_ENUM_LIGHT:
        raise ValueError(f"{plan.n_light} light components; enumeration capped at {MAX_ENUM_LIGHT}")
    frac = plan.boundaries - np.floor(plan.boundaries)
    points = np.sort(np.concatenate([[0.0, 1.0], frac]))
    cuts = [points[0]]
    for x in points[1:]:
        if x - cuts[-1] > MERGE_EPS:
            cuts.append(x)
    cuts[-1] = 1.0
    cuts = np.array(cuts)
    # The selection is constant on each open cell; probe at the midpoint.
    masses: dict[tuple[int, ...], float] = {}
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        key = systematic_select(plan, 0.5 * (lo + hi))
        masses[key] = masses.get(key, 0.0) + float(hi - lo)
    outcomes = sorted(masses.items())
    return OutcomeTable(outcomes=outcomes, breakpoints=cuts[:-1])


def outcome_error(plan: SamplingPlan, index_set) -> float:
    """``||Q'(I) - diag(d)||_F^2`` for one outcome."""
    return float(np.sum((plan.values(index_set) - plan.d) ** 2))


def expected_distortion_closed_form(d, r: int) -> float:
    """Optimal expected squared Frobenius error: ``(r-k) c^2 - sum_{i>k} d_i^2``."""
    plan = build_plan(d, r)
    if plan.is_deterministic:
        return 0.0
    light = plan.d[plan.k:]
    return float((r - plan.k) * plan.c**2 - math.fsum(light**2))


def truncation_baseline(d, r: int) -> float:
    """Error of the best deterministic rank-``r`` approximation."""
    d = np.asarray(d, dtype=np.float64)
    return math.fsum(d[r:] ** 2)


def shifted_spectrum(plan: SamplingPlan) -> np.ndarray:
    """Diagonal of ``Lambda - B``: heavy values kept, light values flattened to ``c``."""
    out = plan.d.copy()
    if not plan.is_deterministic:
        out[plan.k:] = plan.c
    return out


def lower_bound(d, r: int, *, dense: bool = False) -> float:
    """Duality lower bound ``min_X ||X - (Lambda - B)||^2 - ||B||^2`` over rank-r ``X``.

    With ``dense=True`` the Eckart-Young minimum is obtained by actually
    building ``Lambda - B``, factorising it and truncating it.
    """
    d = np.asarray(d, dtype=np.float64)
    k = _heavy_count(d, r)
    n = d.size
    if k >= n:
        return 0.0
    c = math.fsum(d[k:]) / (r - k)
    if k >= 1 and d[k - 1] < c * (1 - 1e-12):
        raise VerificationError(f"heavy value d[{k - 1}]={d[k - 1]!r} below fill value {c!r}")
    shifted = np.concatenate([d[:k], np.full(n - k, c)])
    b_norm_sq = math.fsum((d[k:] - c) ** 2)
    if dense:
        target = np.diag(shifted)
        x = truncate_rank(svd(target), r)
        best = float(np.sum((x - target) ** 2))
    else:
        # Singular values of a non-negative diagonal are its entries, sorted.
        tail = np.sort(shifted)[::-1][r:]
        best = math.fsum(tail**2)
    return best - b_norm_sq


def _heavy_count(d: np.ndarray, r: int) -> int:
    # Independent of sampler.heavy_split: heavy while r - k components of size
    # d[k] would not fit under the remaining mass.
    k = 0
    remaining = math.fsum(d)
    while k < min(r, d.size) and (r - k) * d[k] >= remaining:
        remaining = math.fsum(d[k + 1:])
        k += 1
    return k


@dataclass(frozen=True)
class OptimalityReport:
    expected_distortion: float
    lower_bound: float
    truncation_baseline: float

    @property
    def matched(self) -> bool:
        scale = max(1.0, abs(self.expected_distortion))
        return abs(self.expected_distortion - self.lower_bound) <= 1e-10 * scale


def verify_optimality(d, r: int) -> OptimalityReport:
    """Check that the sampler's expected error meets the lower bound.

    Raises :class:`VerificationError` if the two routes disagree beyond
    ``1e-10`` relative, or either falls below the truncation baseline.
    """
    rep = OptimalityReport(
        expected_distortion=expected_distortion_closed_form(d, r),
        lower_bound=lower_bound(d, r),
        truncation_baseline=truncation_baseline(d, r),
    )
    if not rep.matched:
        raise VerificationError(
            f"expected distortion {rep.expected_distortion!r} != lower bound {rep.lower_bound!r}"
        )
    slack = 1e-10 * max(1.0, rep.truncation_baseline)
    if min(rep.expected_distortion, rep.lower_bound) < rep.truncation_baseline - slack:
        raise VerificationError("optimum fell below the truncation baseline")
    return rep


# -- Monte-Carlo -------------------------------------------------------------


@dataclass
class Welford:
    """Running mean and sum of squared deviations; works elementwise on arrays."""

    count: int = 0
    mean: np.ndarray | float = 0.0
    m2: np.ndarray | float = 0.0

    def push_batch(self, x: np.ndarray) -> None:
        """Fold in ``x`` along its first axis."""
        other = Welford.from_batch(x)
        self.merge(other)

    @classmethod
    def from_batch(cls, x: np.ndarray) -> "Welford":
        x = np.asarray(x)
        n = x.shape[0]
        # Shift by the first row: constant batches then give an exact mean.
        mean = x[0] + (x - x[0]).mean(axis=0)
        dev = x - mean
        m2 = np.sum(dev.real**2 + dev.imag**2, axis=0) if np.iscomplexobj(dev) else np.sum(dev**2, axis=0)
        return cls(count=n, mean=mean, m2=m2)

    def merge(self, other: "Welford") -> None:
        if other.count == 0:
            return
        if self.count == 0:
            self.count, self.mean, self.m2 = other.count, other.mean, other.m2
            return
        n = self.count + other.count
        delta = other.mean - self.mean
        sq = delta.real**2 + delta.imag**2 if np.iscomplexobj(delta) else delta**2
        self.mean = self.mean + delta * (other.count / n)
        self.m2 = self.m2 + other.m2 + sq * (self.count * other.count / n)
        self.count = n

    @property
    def variance(self):
        if self.count < 2:
            return np.zeros_like(self.m2) if isinstance(self.m2, np.ndarray) else 0.0
        return self.m2 / (self.count - 1)

    @property
    def std_error(self):
        return np.sqrt(self.variance / max(self.count, 1))


def _chunks(total: int) -> list[tuple[int, int]]:
    return [(i, min(CHUNK, total - i * CHUNK)) for i in range((total + CHUNK - 1) // CHUNK)]


def _run_chunks(sampler: LowRankSampler, samples: int, seed: int, threads: int, fn):
    # Chunk j always uses child stream j of the master seed, and results are
    # merged in chunk order, so the outcome does not depend on ``threads``.
    def work(job):
        idx, size = job
        q, values = sampler.draw_many(make_rng(seed, idx), size)
        return fn(q, values)

    jobs = _chunks(samples)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, jobs))
    else:
        parts = [work(j) for j in jobs]
    acc = Welford()
    for part in parts:
        acc.merge(part)
    return acc


@dataclass(frozen=True)
class UnbiasednessReport:
    mean: np.ndarray
    deviation: np.ndarray
    std_error: np.ndarray
    radius: np.ndarray
    samples: int

    @property
    def max_deviation(self) -> float:
        return float(self.deviation.max())

    @property
    def exceedances(self) -> int:
        return int(np.count_nonzero(self.deviation > self.radius))


def empirical_unbiasedness(p, r: int, samples: int, seed: int, *, threads: int = 1,
                           factors: SvdFactors | None = None,
                           rank_tol: float = DEFAULT_RANK_TOL) -> UnbiasednessReport:
    """Monte-Carlo mean of ``Q`` compared entrywise with ``p``.

    The acceptance radius per entry is ``4`` standard errors plus a rounding
    floor of ``1e-12 * max|p|`` for entries whose sample variance is zero.
    """
    if samples < 100:
        raise ValueError("need at least 100 samples")
    sampler = LowRankSampler(p, r, factors=factors, rank_tol=rank_tol)
    acc = _run_chunks(sampler, samples, seed, threads, lambda q, _: Welford.from_batch(q))
    target = sampler.p
    dev = np.abs(acc.mean - target)
    se = acc.std_error
    floor = 1e-12 * max(float(np.max(np.abs(target))), np.finfo(float).tiny)
    return UnbiasednessReport(mean=acc.mean, deviation=dev, std_error=se,
                              radius=N_SIGMA * se + floor, samples=samples)


@dataclass(frozen=True)
class DistortionEstimate:
    mean: float
    std_error: float
    samples: int

    @property
    def radius(self) -> float:
        return N_SIGMA * self.std_error


def empirical_distortion(p, r: int, samples: int, seed: int, *, threads: int = 1,
                         factors: SvdFactors | None = None,
                         rank_tol: float = DEFAULT_RANK_TOL) -> DistortionEstimate:
    """Monte-Carlo estimate of ``E||p - Q||_F^2`` with its standard error."""
    sampler = LowRankSampler(p, r, factors=factors, rank_tol=rank_tol)
    target = sampler.p

    def errors(q, _):
        diff = q - target
        sq = diff.real**2 + diff.imag**2 if np.iscomplexobj(diff) else diff**2
        return Welford.from_batch(sq.sum(axis=(1, 2)))

    acc = _run_chunks(sampler, samples, seed, threads, errors)
    return DistortionEstimate(mean=float(acc.mean), std_error=float(acc.std_error), samples=samples)


@dataclass(frozen=True)
class DistortionReport:
    rank: int
    heavy: int
    fill_value: float | None
    expected_distortion: float
    lower_bound: float
    truncation_baseline: float
    empirical_mean_distortion: float
    confidence_radius: float
    samples: int

    @property
    def bound_matched(self) -> bool:
        scale = max(1.0, abs(self.expected_distortion))
        return abs(self.expected_distortion - self.lower_bound) <= 1e-10 * scale

    @property
    def empirical_ok(self) -> bool:
        return abs(self.empirical_mean_distortion - self.expected_distortion) <= self.confidence_radius + 1e-12 * max(1.0, self.expected_distortion)


def distortion_report(p, r: int, samples: int, seed: int, *, threads: int = 1,
                      factors: SvdFactors | None = None,
                      rank_tol: float = DEFAULT_RANK_TOL) -> DistortionReport:
    factors = svd(p, rank_tol) if factors is None else factors
    d = factors.nonzero
    plan = build_plan(d, r)
    est = empirical_distortion(p, r, samples, seed, threads=threads, factors=factors)
    return DistortionReport(
        rank=int(d.size),
        heavy=plan.k,
        fill_value=plan.c,
        expected_distortion=expected_distortion_closed_form(d, r),
        lower_bound=lower_bound(d, r),
        truncation_baseline=truncation_baseline(d, r),
        empirical_mean_distortion=est.mean,
        confidence_radius=est.radius,
        samples=samples,
    )
