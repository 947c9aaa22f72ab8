import json

import numpy as np
import pytest

from lpspec.cantor import (
    GroupSchedule,
    OdometerElement,
    Translation,
    add_one,
    orbit_potential,
    period_independence_check,
    periodize,
    sampler_document,
    sampler_from_document,
    sampler_to_json,
    translate,
)
from lpspec.periodic import PeriodicSampler


def test_schedule_validation():
    GroupSchedule((2, 4, 8))
    with pytest.raises(ValueError):
        GroupSchedule((1, 2))
    with pytest.raises(ValueError):
        GroupSchedule((2, 3))  # not dividing
    with pytest.raises(ValueError):
        GroupSchedule((4, 4))  # not strictly increasing
    with pytest.raises(ValueError):
        GroupSchedule(())


def test_schedule_level_lookup():
    s = GroupSchedule((2, 4, 12))
    assert s.level_for_period(2) == 1
    assert s.level_for_period(3) == 3
    with pytest.raises(ValueError):
        s.level_for_period(5)


def test_odometer_element_consistency():
    s = GroupSchedule((2, 4, 8))
    OdometerElement(s, (1, 1, 5))
    with pytest.raises(ValueError):
        OdometerElement(s, (1, 2, 2))  # 2 mod 2 != 1
    with pytest.raises(ValueError):
        OdometerElement(s, (0, 0))  # wrong depth


def test_translate_add_one_examples():
    s = GroupSchedule((2, 4, 8))
    T = add_one(s)
    e = OdometerElement.zero(s)
    assert translate(T, e, 5).digits == (1, 1, 5)
    assert translate(T, e, 0) is not e  # new value, same digits
    assert translate(T, e, 0).digits == e.digits
    assert translate(T, e, 8).digits == (0, 0, 0)  # n_K fixes all digits


def test_translate_additive_and_bijective():
    s = GroupSchedule((2, 6, 12))
    T = Translation(OdometerElement(s, (1, 5, 11)))
    assert T.is_minimal
    e = OdometerElement.zero(s)
    a = translate(T, translate(T, e, 3), 4)
    b = translate(T, e, 7)
    assert a.digits == b.digits
    seen = {translate(T, e, n).digits[2] for n in range(12)}
    assert seen == set(range(12))


def test_minimality_criterion():
    s = GroupSchedule((2, 4))
    assert not Translation(OdometerElement(s, (0, 2))).is_minimal
    assert Translation(OdometerElement(s, (1, 3))).is_minimal
    with pytest.raises(ValueError):
        Translation(OdometerElement(s, (0, 0))).require_minimal()


def test_schedule_mismatch_rejected():
    s1 = GroupSchedule((2, 4))
    s2 = GroupSchedule((2, 8))
    with pytest.raises(ValueError):
        translate(add_one(s1), OdometerElement.zero(s2), 1)


def test_orbit_potential_matches_residue_table():
    s = GroupSchedule((2, 4, 8))
    T = add_one(s)
    e = OdometerElement.zero(s)
    f = PeriodicSampler((0.0, 1.0, 2.0, 3.0))
    V = orbit_potential(f, level=3, T=T, omega=e, n_lo=0, n_hi=11)
    assert V.tolist() == [f.value_at(n) for n in range(12)]


def test_orbit_potential_shift_relation():
    s = GroupSchedule((2, 4))
    T = add_one(s)
    e = OdometerElement.zero(s)
    f = PeriodicSampler((0.5, -1.0, 2.0, 0.0))
    base = orbit_potential(f, 2, T, e, 0, 7)
    shifted = orbit_potential(f, 2, T, translate(T, e, 1), 0, 7)
    assert shifted[:-1].tolist() == base[1:].tolist()


def test_orbit_potential_periodicity():
    s = GroupSchedule((2, 4, 8))
    T = Translation(OdometerElement(s, (1, 3, 3)))
    e = OdometerElement.zero(s)
    f = PeriodicSampler((1.0, 7.0))
    V = orbit_potential(f, 1, T, e, 0, 9)
    assert np.allclose(V[:-2], V[2:])  # 2-periodic sequence


def test_orbit_potential_level_checks():
    s = GroupSchedule((2, 4))
    T = add_one(s)
    e = OdometerElement.zero(s)
    with pytest.raises(ValueError):
        orbit_potential(PeriodicSampler((1.0, 2.0, 3.0)), 2, T, e, 0, 3)
    with pytest.raises(ValueError):
        orbit_potential(PeriodicSampler((1.0,)), 5, T, e, 0, 3)


def test_periodize_fixed_point():
    s = GroupSchedule((2, 4))
    f = PeriodicSampler((0.3, -0.7))
    out = periodize(f, s, level=2, target_level=1)
    assert out.values == f.values


def test_periodize_indicator_example():
    s = GroupSchedule((2, 4))
    f = PeriodicSampler((1.0, 0.0, 0.0, 0.0))  # indicator of residue 0 mod 4
    out = periodize(f, s, level=2, target_level=1)
    assert out.values == (0.5, 0.0)


def test_periodize_contracts_norm_and_projects():
    rng = np.random.default_rng(1)
    s = GroupSchedule((3, 6, 12))
    f = PeriodicSampler(tuple(rng.uniform(-2, 2, 12)))
    once = periodize(f, s, level=3, target_level=2)
    assert once.norm <= f.norm + 1e-12
    twice = periodize(once, s, level=2, target_level=2)
    assert np.allclose(twice.values, once.values)


def test_periodize_linearity():
    s = GroupSchedule((2, 4))
    f = PeriodicSampler((1.0, 2.0, 3.0, 4.0))
    g = PeriodicSampler((0.5, -1.0, 2.0, 0.0))
    combo = PeriodicSampler(tuple(a + 2 * b for a, b in zip(f.values, g.values)))
    left = periodize(combo, s, 2, 1).values
    pf = periodize(f, s, 2, 1).values
    pg = periodize(g, s, 2, 1).values
    assert np.allclose(left, [a + 2 * b for a, b in zip(pf, pg)])


def test_period_independence():
    s = GroupSchedule((2, 4, 8))
    T1 = add_one(s)
    T2 = Translation(OdometerElement(s, (1, 3, 7)))
    f = PeriodicSampler((0.0, 1.0, 0.0, 1.0))  # 2-periodic on level 3
    assert period_independence_check(f, 3, s, T1, T2, n0=2)
    assert period_independence_check(f, 3, s, T1, T2, n0=0)
    g = PeriodicSampler((1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0))
    assert period_independence_check(g, 3, s, T1, T2, n0=1)  # both say "not 1-periodic"


def test_hull_size_matches_true_period():
    # 2-periodic table seen at level 3: exactly 2 distinct orbit shifts
    s = GroupSchedule((2, 4, 8))
    T = add_one(s)
    e = OdometerElement.zero(s)
    f = PeriodicSampler((0.0, 1.0, 0.0, 1.0))
    shifts = {
        tuple(orbit_potential(f, 3, T, translate(T, e, m), 0, 7).tolist()) for m in range(8)
    }
    assert len(shifts) == 2


def test_sampler_document_roundtrip():
    s = GroupSchedule((2, 4))
    f = PeriodicSampler((0.25, -1.5))
    doc = sampler_document(s, 1, f)
    s2, level, f2 = sampler_from_document(doc)
    assert s2 == s and level == 1 and f2 == f
    text = sampler_to_json(s, 1, f)
    assert json.loads(text) == doc
