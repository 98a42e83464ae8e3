import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lowrank.oracle import (
    VerificationError,
    Welford,
    distortion_report,
    empirical_distortion,
    empirical_unbiasedness,
    enumerate_outcomes,
    expected_distortion_closed_form,
    lower_bound,
    outcome_error,
    shifted_spectrum,
    truncation_baseline,
    verify_optimality,
)
from lowrank.sampler import build_plan, systematic_select
from lowrank.selftest import random_plan, random_spectrum

from conftest import random_unitary


def grid_distribution(plan, cells=200_000):
    """Outcome masses by evaluating the selector on a fine midpoint grid."""
    out = {}
    for s in (np.arange(cells) + 0.5) / cells:
        key = systematic_select(plan, s)
        out[key] = out.get(key, 0) + 1 / cells
    return out


def test_enumerate_golden():
    table = enumerate_outcomes(build_plan([4, 1], 1))
    assert [I for I, _ in table.outcomes] == [(0,), (1,)]
    np.testing.assert_allclose([m for _, m in table.outcomes], [0.8, 0.2], atol=1e-15)


def test_enumerate_three_values():
    table = enumerate_outcomes(build_plan([3, 2, 1], 2))
    assert dict(table.outcomes).keys() == {(1,), (2,)}
    assert dict(table.outcomes)[(1,)] == pytest.approx(2 / 3, abs=1e-15)
    assert dict(table.outcomes)[(2,)] == pytest.approx(1 / 3, abs=1e-15)


def test_enumerate_deterministic():
    table = enumerate_outcomes(build_plan([5, 5, 5], 3))
    assert table.outcomes == [((), 1.0)]


def test_enumerate_size_guard():
    with pytest.raises(ValueError):
        enumerate_outcomes(build_plan(np.linspace(30, 1, 30), 2))


def test_enumerate_matches_grid_oracle():
    plan = build_plan([7.0, 5.0, 4.0, 2.5, 1.0, 0.5], 3)
    exact = dict(enumerate_outcomes(plan).outcomes)
    approx = grid_distribution(plan, 100_000)
    assert exact.keys() == approx.keys()
    for key in exact:
        assert exact[key] == pytest.approx(approx[key], abs=5e-5)


@pytest.mark.parametrize(
    "d, r, value",
    [
        ((4, 1), 1, 8.0),
        ((3, 2, 1), 2, 4.0),  # (2/3)*2 + (1/3)*8
        ((1, 1), 1, 2.0),
        ((3, 2, 1), 3, 0.0),
        ((3, 2, 1), 7, 0.0),
    ],
)
def test_closed_form_and_bound_examples(d, r, value):
    assert expected_distortion_closed_form(d, r) == pytest.approx(value, abs=1e-12)
    assert lower_bound(d, r) == pytest.approx(value, abs=1e-12)
    assert lower_bound(d, r, dense=True) == pytest.approx(value, abs=1e-12)


def test_outcome_errors_golden():
    plan = build_plan([4, 1], 1)
    assert outcome_error(plan, (0,)) == 2.0
    assert outcome_error(plan, (1,)) == 32.0
    plan = build_plan([3, 2, 1], 2)
    assert outcome_error(plan, (1,)) == 2.0
    assert outcome_error(plan, (2,)) == 8.0


def test_closed_form_validated_by_enumeration():
    # The closed form is only trusted after it agrees with brute-force
    # expectation over the exact outcome table on many random plans.
    rng = np.random.default_rng(1)
    for _ in range(1000):
        plan = random_plan(rng)
        table = enumerate_outcomes(plan)
        brute = math.fsum(m * outcome_error(plan, I) for I, m in table.outcomes)
        closed = expected_distortion_closed_form(plan.d, plan.r)
        assert abs(brute - closed) <= 1e-10 * max(1.0, closed)


def test_marginals_equal_probabilities():
    rng = np.random.default_rng(2)
    for _ in range(300):
        plan = random_plan(rng)
        table = enumerate_outcomes(plan)
        assert table.total_mass == pytest.approx(1.0, abs=1e-12)
        np.testing.assert_allclose(table.marginals(plan.n)[plan.k:], plan.p, atol=1e-12)
        np.testing.assert_array_equal(table.marginals(plan.n)[: plan.k], 0.0)
        assert all(len(I) == plan.n_pick for I, _ in table.outcomes)


def test_per_realization_identity():
    rng = np.random.default_rng(3)
    for _ in range(200):
        plan = random_plan(rng)
        if plan.is_deterministic:
            continue
        target = shifted_spectrum(plan)
        for I, _ in enumerate_outcomes(plan).outcomes:
            got = np.sum((plan.values(I) - target) ** 2)
            assert got == pytest.approx((plan.n - plan.r) * plan.c**2, rel=1e-10, abs=1e-12)


def test_verify_optimality_golden():
    rep = verify_optimality([4, 1], 1)
    assert rep.expected_distortion == rep.lower_bound == 8.0
    assert rep.truncation_baseline == 1.0
    rep = verify_optimality([3, 2, 1], 3)
    assert (rep.expected_distortion, rep.lower_bound, rep.truncation_baseline) == (0.0, 0.0, 0.0)


def test_verify_optimality_sweep():
    rng = np.random.default_rng(4)
    for _ in range(1000):
        d = random_spectrum(rng)
        for r in range(1, d.size + 1):
            verify_optimality(d, r)


@settings(max_examples=100, deadline=None)
@given(d=st.lists(st.floats(1e-2, 1e2), min_size=1, max_size=12).map(lambda xs: np.sort(xs)[::-1]))
def test_distortion_monotone_in_rank(d):
    values = [expected_distortion_closed_form(d, r) for r in range(1, d.size + 1)]
    scale = max(1.0, values[0])
    assert all(b <= a + 1e-12 * scale for a, b in zip(values, values[1:]))
    assert values[-1] == 0.0
    for r, v in enumerate(values, start=1):
        plan = build_plan(d, r)
        base = truncation_baseline(d, r)
        assert v >= base - 1e-12 * scale
        if not plan.is_deterministic and plan.p.max() < 1 - 1e-9:
            assert v > base


def test_welford_merge_matches_two_pass(rng):
    x = rng.standard_normal((1000, 3)) * 5 + 2
    acc = Welford()
    for chunk in np.array_split(x, 7):
        acc.push_batch(chunk)
    np.testing.assert_allclose(acc.mean, x.mean(axis=0), rtol=1e-13)
    np.testing.assert_allclose(acc.variance, x.var(axis=0, ddof=1), rtol=1e-12)
    single = Welford.from_batch(np.array([17.0, 19.0, 24.0]))
    assert single.mean == pytest.approx(20.0)
    assert single.variance == pytest.approx(13.0)


def test_empirical_distortion_golden():
    est = empirical_distortion(np.diag([4.0, 1.0]), 1, 100_000, seed=42)
    # outcomes 2 and 32 with masses 0.8/0.2 give sigma = 12
    assert abs(est.mean - 8.0) <= 4 * 12 / math.sqrt(100_000)
    assert est.std_error == pytest.approx(12 / math.sqrt(100_000), rel=0.02)


def test_empirical_distortion_three_values():
    # outcomes 2 and 8 with masses 2/3, 1/3: sigma = sqrt(8)
    est = empirical_distortion(np.diag([3.0, 2.0, 1.0]), 2, 100_000, seed=1)
    assert abs(est.mean - 4.0) <= 4 * math.sqrt(8) / math.sqrt(100_000)


def test_empirical_full_rank_is_exact(rng):
    p = rng.standard_normal((4, 3))
    assert empirical_distortion(p, 3, 500, seed=0).mean == 0.0
    rep = empirical_unbiasedness(p, 5, 500, seed=0)
    assert rep.max_deviation == 0.0


def test_empirical_unbiasedness_golden():
    rep = empirical_unbiasedness(np.diag([4.0, 1.0]), 1, 100_000, seed=5)
    assert rep.mean[0, 1] == 0.0 and rep.mean[1, 0] == 0.0
    # entry (0,0) is 5*Bernoulli(0.8): variance 4
    assert rep.std_error[0, 0] == pytest.approx(2 / math.sqrt(100_000), rel=0.02)
    assert rep.exceedances == 0


def test_empirical_unbiasedness_rotated(rng):
    w = random_unitary(rng, 2)
    p = w @ np.diag([4.0, 1.0]) @ w.conj().T
    rep = empirical_unbiasedness(p, 1, 50_000, seed=6)
    assert rep.exceedances == 0


def test_threads_do_not_change_results(rng):
    p = rng.standard_normal((7, 7)) + 1j * rng.standard_normal((7, 7))
    a = empirical_distortion(p, 3, 5000, seed=9, threads=1)
    b = empirical_distortion(p, 3, 5000, seed=9, threads=4)
    assert a == b
    ua = empirical_unbiasedness(p, 3, 5000, seed=9, threads=1)
    ub = empirical_unbiasedness(p, 3, 5000, seed=9, threads=3)
    np.testing.assert_array_equal(ua.mean, ub.mean)


def test_distortion_report_golden():
    rep = distortion_report(np.diag([4.0, 1.0]), 1, 20_000, seed=0)
    assert (rep.expected_distortion, rep.lower_bound, rep.truncation_baseline) == (8.0, 8.0, 1.0)
    assert rep.bound_matched and rep.empirical_ok
    assert rep.confidence_radius == pytest.approx(4 * 12 / math.sqrt(20_000), rel=0.05)


def test_lower_bound_rejects_inconsistent_heavy_split(monkeypatch):
    import lowrank.oracle as oracle

    monkeypatch.setattr(oracle, "_heavy_count", lambda d, r: 1)
    with pytest.raises(VerificationError):
        # d[0] = 1 < c = (1 + 1) / 1
        oracle.lower_bound(np.array([1.0, 1.0, 1.0]), 2)
