import itertools
from collections import Counter

import pytest
from hypothesis import given, strategies as st

from nestedtomo.errors import InvalidArgument
from nestedtomo.geometry import (ArrayKind, array_from_dict, array_to_dict, coprime_array,
                                 custom_array, describe, difference_coarray, nested_array,
                                 shift_to_one, uniform_array)


def brute_lags(positions):
    """Independent oracle: every ordered pair difference with its count."""
    return Counter(a - b for a, b in itertools.product(positions, repeat=2))


def test_uniform_positions():
    assert uniform_array(10, 0.08).positions == tuple(range(10))
    assert shift_to_one(uniform_array(10, 0.08)) == tuple(range(1, 11))
    assert uniform_array(2, 1.0).positions == (0, 1)


def test_uniform_rejects_single_element():
    with pytest.raises(InvalidArgument):
        uniform_array(1, 1.0)


@pytest.mark.parametrize("m1, m2", [(3, 4), (4, 3)])
def test_coprime_positions(m1, m2):
    arr = coprime_array(m1, m2, 0.08)
    assert arr.positions == (0, 3, 4, 6, 8, 9)
    assert shift_to_one(arr) == (1, 4, 5, 7, 9, 10)
    assert arr.element_count == m1 + m2 - 1


def test_coprime_rejects_common_factor():
    with pytest.raises(InvalidArgument, match="gcd = 2"):
        coprime_array(2, 4, 1.0)


@pytest.mark.parametrize("m1, m2, expected", [
    (4, 2, (1, 2, 3, 4, 5, 10)),
    (3, 3, (1, 2, 3, 4, 8, 12)),
    (1, 1, (1, 2)),
])
def test_nested_positions(m1, m2, expected):
    arr = nested_array(m1, m2, 0.08)
    assert arr.positions == expected
    assert arr.positions[-1] == (m1 + 1) * m2


def test_coprime_holes_at_seven():
    co = difference_coarray(coprime_array(4, 3, 0.08))
    assert co.holes == (-7, 7)
    assert co.dof == 17


@pytest.mark.parametrize("m1, m2, dof", [(4, 2, 19), (3, 3, 23)])
def test_nested_coarray_hole_free(m1, m2, dof):
    co = difference_coarray(nested_array(m1, m2, 0.08))
    assert co.holes == ()
    assert co.dof == dof == 2 * (m1 + 1) * m2 - 1
    span = (m1 + 1) * m2 - 1
    assert co.lags == tuple(range(-span, span + 1))


def test_coarray_matches_brute_force(ref_array):
    co = difference_coarray(ref_array)
    oracle = brute_lags(ref_array.positions)
    assert co.multiplicity == dict(oracle)
    assert sum(co.multiplicity.values()) == ref_array.element_count ** 2
    assert co.multiplicity[0] == ref_array.element_count


def test_coprime_2_3_breaks_closed_form():
    # the 2*M1*M2 - M1 - M2 count is not general
    co = difference_coarray(coprime_array(2, 3, 1.0))
    assert co.dof == 9
    assert 2 * 2 * 3 - 2 - 3 == 7


def test_custom_array_eleven_channel_layout():
    arr = custom_array([1, 2, 3, 4, 8, 11], 0.08)
    assert arr.kind is ArrayKind.CUSTOM
    with pytest.raises(InvalidArgument):
        custom_array([1, 3, 2], 0.08)
    with pytest.raises(InvalidArgument):
        custom_array([1, 1, 2], 0.08)


def test_unit_spacing_positive():
    with pytest.raises(InvalidArgument):
        nested_array(2, 2, 0.0)


def test_descriptor_round_trip(ref_array):
    assert array_from_dict(array_to_dict(ref_array)) == ref_array


def test_describe_fields():
    info = describe(nested_array(4, 2, 0.08))
    assert info["dof"] == 19 and info["holes"] == [] and info["aperture_units"] == 9


@given(st.lists(st.integers(0, 40), min_size=1, max_size=9, unique=True), st.integers(0, 50))
def test_translation_invariance(positions, shift):
    positions = sorted(positions)
    a = difference_coarray(positions)
    b = difference_coarray([p + shift for p in positions])
    assert a == b


@given(st.lists(st.integers(0, 40), min_size=1, max_size=9, unique=True))
def test_coarray_invariants(positions):
    co = difference_coarray(sorted(positions))
    assert set(co.lags) == {-g for g in co.lags}
    assert all(co.multiplicity[g] == co.multiplicity[-g] for g in co.lags)
    assert sum(co.multiplicity.values()) == len(positions) ** 2
    assert not set(co.holes) & set(co.lags)
    assert co.multiplicity == dict(brute_lags(positions))


@given(st.integers(1, 8), st.integers(1, 8))
def test_nested_hole_free_theorem(m1, m2):
    arr = nested_array(m1, m2, 1.0)
    lags = set(brute_lags(arr.positions))
    span = (m1 + 1) * m2 - 1
    assert lags == set(range(-span, span + 1))
    assert difference_coarray(arr).dof == 2 * (m1 + 1) * m2 - 1
