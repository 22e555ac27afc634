import math

import numpy as np
import pytest

from brwre.stats import (ConcentrationParams, EstimateWithCI, concentration_bound,
                         paired_order_test, proportion, slope_fit, tail_frequencies)


def test_ci_coverage():
    rng = np.random.default_rng(0)
    hits = sum(EstimateWithCI.from_samples(rng.exponential(2.0, 200)).contains(2.0)
               for _ in range(1000))
    assert 975 <= hits <= 1000


def test_estimate_requires_two_samples():
    with pytest.raises(ValueError):
        EstimateWithCI.from_samples([1.0])


def test_proportion():
    e = proportion(30, 100)
    assert e.mean == 0.3 and e.std_err == pytest.approx(math.sqrt(0.21 / 100))


def test_concentration_constants():
    A = 1.5 + 1 / 1.5
    p = ConcentrationParams(A=A, delta=1.0, n=10)
    assert A == pytest.approx(13 / 6)
    assert p.B == pytest.approx(2 * math.sqrt(6) * (13 / 6) ** 2)
    assert concentration_bound(p, 0.0) == 2.0
    assert concentration_bound(p, 0.0, "stated") == 2.0
    eps = 0.5
    assert concentration_bound(p, eps) == pytest.approx(2 * math.exp(-eps**2 * 10 / (4 * p.B)))
    assert concentration_bound(p, eps, "stated") == pytest.approx(2 * math.exp(-p.B * eps**2 * 10 / 4))
    with pytest.raises(ValueError):
        concentration_bound(p, p.B * 1.01)
    with pytest.raises(ValueError):
        ConcentrationParams(A=0.5)


def test_paired_order_test():
    rng = np.random.default_rng(1)
    a = rng.normal(size=50)
    assert paired_order_test(a, a) == 0.0
    assert paired_order_test(a + 1, a) == math.inf
    b = rng.normal(size=400)
    noise = rng.normal(size=400)
    noise = (noise - noise.mean()) / noise.std(ddof=1)
    # differences have mean 0.5 and sd 1 exactly, so z = 0.5 * sqrt(400) / 1
    assert paired_order_test(b + 0.5 + noise, b) == pytest.approx(10.0, rel=1e-12)
    with pytest.raises(ValueError):
        paired_order_test([1, 2], [1])


def test_slope_fit():
    t = np.arange(20.0)
    exact = slope_fit(t, 2 * t)
    assert exact.slope == pytest.approx(2.0) and exact.std_err == pytest.approx(0.0, abs=1e-12)
    assert slope_fit(t, np.full(20, 3.0)).slope == pytest.approx(0.0, abs=1e-14)
    rng = np.random.default_rng(2)
    t = np.arange(50.0)
    fit = slope_fit(t, math.log(1.5) * t + rng.normal(0, 0.1, 50))
    assert abs(fit.slope - math.log(1.5)) <= 3 * fit.std_err
    with pytest.raises(ValueError):
        slope_fit([1, 2], [1, 2])


def test_tail_frequencies_nested():
    dev = np.abs(np.random.default_rng(3).normal(size=1000))
    f = tail_frequencies(dev, [0.5, 1.0, 2.0])
    assert np.all(np.diff(f) <= 0)
