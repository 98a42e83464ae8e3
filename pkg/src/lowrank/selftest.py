"""Seeded property sweeps behind ``lowrank selftest``."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .linalg import frobenius_norm_sq, reconstruct, svd
from .oracle import (
    enumerate_outcomes,
    expected_distortion_closed_form,
    lower_bound,
    outcome_error,
    shifted_spectrum,
    truncation_baseline,
)
from .sampler import build_plan


def random_spectrum(rng: np.random.Generator, max_n: int = 12) -> np.ndarray:
    """Descending positive spectrum; every fourth draw has ties."""
    n = int(rng.integers(1, max_n + 1))
    if rng.random() < 0.25:
        d = rng.integers(1, 5, size=n).astype(np.float64)
    else:
        d = np.exp(rng.normal(scale=1.5, size=n))
    return np.sort(d)[::-1]


def random_matrix(rng: np.random.Generator, n: int, m: int, complex_: bool) -> np.ndarray:
    a = rng.standard_normal((n, m))
    if complex_:
        a = a + 1j * rng.standard_normal((n, m))
    return a


@dataclass
class SuiteResult:
    name: str
    cases: int
    failures: int
    seconds: float
    detail: str = ""

    @property
    def ok(self) -> bool:
        return self.failures == 0


def bound_match(rng, instances: int) -> tuple[int, int, str]:
    cases = fails = 0
    detail = ""
    for _ in range(instances):
        d = random_spectrum(rng)
        for r in range(1, d.size + 1):
            cases += 1
            e = expected_distortion_closed_form(d, r)
            lb = lower_bound(d, r)
            base = truncation_baseline(d, r)
            tol = 1e-10 * max(1.0, abs(e))
            if abs(e - lb) > tol or min(e, lb) < base - tol:
                fails += 1
                detail = f"d={d.tolist()} r={r}: {e} vs {lb} (baseline {base})"
    return cases, fails, detail


def random_plan(rng, max_light: int = 10):
    while True:
        d = random_spectrum(rng)
        r = int(rng.integers(1, d.size + 1))
        plan = build_plan(d, r)
        if plan.n_light <= max_light:
            return plan


def oracle_equivalence(rng, instances: int) -> tuple[int, int, str]:
    fails = 0
    detail = ""
    for _ in range(instances):
        plan = random_plan(rng)
        table = enumerate_outcomes(plan)
        exp = math.fsum(mass * outcome_error(plan, I) for I, mass in table.outcomes)
        closed = expected_distortion_closed_form(plan.d, plan.r)
        marg = table.marginals(plan.n)[plan.k:]
        sizes_ok = all(len(I) == plan.n_pick for I, _ in table.outcomes)
        if (abs(exp - closed) > 1e-10 * max(1.0, closed)
                or np.max(np.abs(marg - plan.p), initial=0.0) > 1e-12 or not sizes_ok):
            fails += 1
            detail = f"d={plan.d.tolist()} r={plan.r}: enum {exp} closed {closed}"
    return instances, fails, detail


def realization_identity(rng, instances: int) -> tuple[int, int, str]:
    cases = fails = 0
    detail = ""
    for _ in range(instances):
        plan = random_plan(rng)
        target = shifted_spectrum(plan)
        expect = (plan.n - plan.r) * plan.c**2 if not plan.is_deterministic else 0.0
        for I, _ in enumerate_outcomes(plan).outcomes:
            cases += 1
            got = float(np.sum((plan.values(I) - target) ** 2))
            if abs(got - expect) > 1e-10 * max(1.0, expect):
                fails += 1
                detail = f"d={plan.d.tolist()} r={plan.r} I={I}: {got} vs {expect}"
    return cases, fails, detail


def svd_roundtrip(rng, instances: int) -> tuple[int, int, str]:
    fails = 0
    detail = ""
    for i in range(instances):
        n, m = (int(x) for x in rng.integers(1, 33, size=2))
        a = random_matrix(rng, n, m, complex_=bool(i % 2))
        f = svd(a)
        norm = math.sqrt(frobenius_norm_sq(a))
        rec = math.sqrt(frobenius_norm_sq(reconstruct(f) - a))
        p = f.s.size
        unit = max(np.linalg.norm(f.u.conj().T @ f.u - np.eye(p)),
                   np.linalg.norm(f.v.conj().T @ f.v - np.eye(p)))
        energy = abs(math.fsum(f.s**2) - norm**2)
        if rec > 1e-10 * norm or unit > 1e-11 or energy > 1e-10 * norm**2:
            fails += 1
            detail = f"{n}x{m}: recon {rec / norm:.2e} unitarity {unit:.2e}"
    return instances, fails, detail


SUITES = {
    "svd-roundtrip": (svd_roundtrip, 100, 10),
    "bound-match": (bound_match, 1000, 100),
    "oracle-equivalence": (oracle_equivalence, 1000, 100),
    "realization-identity": (realization_identity, 200, 40),
}


def run(seed: int = 0, quick: bool = False) -> list[SuiteResult]:
    results = []
    for idx, (name, (fn, full, short)) in enumerate(SUITES.items()):
        rng = np.random.default_rng([seed, idx])
        t0 = time.perf_counter()
        cases, fails, detail = fn(rng, short if quick else full)
        results.append(SuiteResult(name, cases, fails, time.perf_counter() - t0, detail))
    return results
