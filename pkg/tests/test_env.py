import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import poisson

from brwre.env import (DisorderSpec, EnvironmentField, OffspringLaw, atoms_batch,
                       check_assumptions, derive_stream, hash_uniform, law_at, moments)

GW = {0: 0.25, 2: 0.75}
A = {0: 0.5, 2: 0.5}


def test_deterministic_family_returns_exact_pmf():
    env = EnvironmentField(DisorderSpec.deterministic(GW), 3, 2)
    for t, x in [(0, (0, 0)), (5, (3, -2)), (17, (-9, 4))]:
        assert law_at(env, t, x) == OffspringLaw.from_dict(GW)


def test_law_is_pure_function_of_coordinates():
    spec = DisorderSpec.mixture([A, GW], [0.5, 0.5], master_seed=99)
    env = EnvironmentField(spec, 4, 1)
    a = env.law_at(7, (3,))
    b = EnvironmentField(spec, 4, 1).law_at(7, (3,))
    assert a is b or np.array_equal(a.pmf, b.pmf)
    u1 = hash_uniform(99, 4, 7, np.array([[3]]))
    u2 = hash_uniform(99, 4, 7, np.array([[3]]))
    assert u1.tobytes() == u2.tobytes()


def test_mixture_atom_frequency():
    spec = DisorderSpec.mixture([A, GW], [0.5, 0.5], master_seed=1)
    x = np.arange(100_000)[:, None]
    atoms = atoms_batch(spec, 0, 0, x)
    assert abs((atoms == 0).mean() - 0.5) <= 0.01


def test_replicas_and_times_decorrelate():
    spec = DisorderSpec.mixture([A, GW], [0.5, 0.5], master_seed=1)
    x = np.arange(20_000)[:, None]
    a = atoms_batch(spec, 0, 0, x)
    b = atoms_batch(spec, 1, 0, x)
    c = atoms_batch(spec, 0, 1, x)
    assert abs(np.corrcoef(a, b)[0, 1]) < 0.05
    assert abs(np.corrcoef(a, c)[0, 1]) < 0.05


def test_uniforms_in_unit_interval():
    u = hash_uniform(2**64 - 1, 3, 10, np.arange(-500, 500)[:, None])
    assert u.min() >= 0.0 and u.max() < 1.0


def test_shifted_field_reads_translated_coordinates():
    spec = DisorderSpec.mixture([A, GW], [0.5, 0.5], master_seed=3)
    env = EnvironmentField(spec, 2, 2)
    sh = env.shifted(4, (1, -2))
    pts = np.array([[0, 0], [3, 1], [-2, 5]])
    for t in range(3):
        assert np.array_equal(sh.atoms_at(t, pts), env.atoms_at(t + 4, pts + np.array([1, -2])))


def test_moments_examples():
    assert moments(OffspringLaw.from_dict(GW)) == pytest.approx((1.5, 3.0), abs=1e-15)
    assert moments(OffspringLaw.from_dict({1: 1.0})) == (1.0, 1.0)


def test_truncated_poisson_matches_direct_sum():
    law = OffspringLaw.poisson(2.0, 20)
    k = np.arange(21)
    w = poisson.pmf(k, 2.0)
    w = w / w.sum()
    assert law.m == pytest.approx(float((k * w).sum()), rel=1e-13)
    assert law.m2 == pytest.approx(float((k**2 * w).sum()), rel=1e-13)


@pytest.mark.parametrize("pmf", [[0.5, 0.6], [-0.1, 1.1], [np.nan, 1.0]])
def test_invalid_pmf_rejected(pmf):
    with pytest.raises(ValueError):
        OffspringLaw(np.array(pmf))


def test_assumption_report_examples():
    rep = check_assumptions(DisorderSpec.deterministic(GW))
    assert rep.q_ln_m == pytest.approx(math.log(1.5), abs=1e-15)
    assert rep.ok and rep.hyp1_ok and rep.cond_1q0_ok and rep.k2_ok
    mix = check_assumptions(DisorderSpec.mixture([A, GW], [0.5, 0.5]))
    assert mix.q_ln_m == pytest.approx(0.5 * math.log(1.5), abs=1e-15)
    dead = check_assumptions(DisorderSpec.mixture([{0: 1.0}, GW], [0.5, 0.5]))
    assert not dead.cond_1q0_ok and not dead.ok and dead.violations


def test_families_expectations():
    b = DisorderSpec.binary(0.6, 0.9, 4)
    assert np.allclose(b.weights, 0.25)
    assert b.mean_m == pytest.approx(2 * np.linspace(0.6, 0.9, 4).mean())
    p = DisorderSpec.poisson([1.5, 2.5], [0.5, 0.5], k_max=40)
    assert p.mean_m == pytest.approx(2.0, abs=1e-9)


laws = st.lists(st.floats(0.01, 1.0), min_size=1, max_size=5).map(
    lambda w: {k: v / sum(w) for k, v in enumerate(w)})


@settings(max_examples=40, deadline=None)
@given(st.lists(laws, min_size=1, max_size=3), st.integers(0, 2**63), st.data())
def test_spec_roundtrip(law_list, seed, data):
    w = data.draw(st.lists(st.floats(0.05, 1.0), min_size=len(law_list), max_size=len(law_list)))
    spec = DisorderSpec.mixture(law_list, [v / sum(w) for v in w], master_seed=seed)
    again = DisorderSpec.from_dict(spec.to_dict())
    assert again == spec
    assert again.to_dict() == spec.to_dict()


@settings(max_examples=40, deadline=None)
@given(st.lists(laws, min_size=1, max_size=3))
def test_annealed_law_mean_is_mean_of_means(law_list):
    w = np.full(len(law_list), 1 / len(law_list))
    spec = DisorderSpec.mixture(law_list, w)
    assert spec.annealed_law.m == pytest.approx(spec.expect(lambda a: a.m), rel=1e-12)


def test_derived_streams_are_reproducible_and_distinct():
    a = derive_stream(5, 1, 2).random(4)
    b = derive_stream(5, 1, 2).random(4)
    c = derive_stream(5, 1, 3).random(4)
    assert np.array_equal(a, b) and not np.array_equal(a, c)


def test_negative_time_rejected():
    with pytest.raises(ValueError):
        EnvironmentField(DisorderSpec.deterministic(GW)).law_at(-1, (0,))
