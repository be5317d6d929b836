import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from deeprx.constellation import (
    BPSK,
    QPSK,
    class_index,
    class_symbols,
    demodulate,
    get_constellation,
    label_rotation,
    modulate,
    rotate,
)

H = 1 / np.sqrt(2)


def test_bpsk_bits_map_to_signs():
    np.testing.assert_array_equal(modulate([0, 1], BPSK), [1.0, -1.0])


def test_qpsk_first_gray_quadrant():
    assert modulate([0, 0], QPSK)[0] == pytest.approx(H + 1j * H)


def test_qpsk_gray_neighbours_differ_in_one_bit():
    pts = QPSK.point_array
    for a, b in itertools.combinations(range(4), 2):
        if abs(abs(pts[a] - pts[b]) - np.sqrt(2)) < 1e-12:  # adjacent points
            assert bin(a ^ b).count("1") == 1


@pytest.mark.parametrize("c", [BPSK, QPSK])
def test_round_trip_on_random_bits(c):
    rng = np.random.default_rng(0)
    for _ in range(10_000 // 100):
        bits = rng.integers(0, 2, 100 * c.bits_per_symbol)
        np.testing.assert_array_equal(demodulate(modulate(bits, c), c), bits)


def test_modulate_rejects_ragged_bits():
    with pytest.raises(ValueError):
        modulate([0, 1, 1], QPSK)
    with pytest.raises(ValueError):
        modulate([0, 2], BPSK)


@pytest.mark.parametrize("c", [BPSK, QPSK])
def test_unit_energy_and_point_count(c):
    assert np.allclose(np.abs(c.point_array), 1.0)
    assert c.order == 2**c.bits_per_symbol


def test_class_index_examples():
    assert class_index(np.ones(4), BPSK) == 0
    labels = {class_index(np.array(t), BPSK) for t in itertools.product([1.0, -1.0], repeat=4)}
    assert labels == set(range(16))
    pts = QPSK.point_array
    labels = {class_index(pts[list(t)], QPSK) for t in itertools.product(range(4), repeat=4)}
    assert labels == set(range(256))


def test_class_index_is_least_significant_first():
    # (s_0, s_1) = (-1, +1): digit 1 at position 0
    assert class_index(np.array([-1.0, 1.0]), BPSK) == 1
    assert class_index(np.array([1.0, -1.0]), BPSK) == 2


@pytest.mark.parametrize("c,arity", [(BPSK, 4), (QPSK, 4), (QPSK, 1)])
def test_class_symbols_inverts_class_index(c, arity):
    labels = np.arange(c.order**arity)
    np.testing.assert_array_equal(class_index(class_symbols(labels, c, arity), c), labels)


def test_class_index_rejects_foreign_symbols():
    with pytest.raises(ValueError):
        class_index(np.array([0.5, 1.0]), BPSK)
    with pytest.raises(ValueError):
        class_symbols(16, BPSK, 4)


def test_rotation_examples():
    assert rotate(np.array([H + 1j * H]), np.pi / 2, QPSK)[0] == pytest.approx(-H + 1j * H)
    assert rotate(np.array([1.0]), np.pi, BPSK)[0] == -1.0
    pts = QPSK.point_array
    np.testing.assert_array_equal(rotate(pts, 0.0, QPSK), pts)


def test_rotation_rejects_off_group_phase():
    with pytest.raises(ValueError):
        rotate(np.array([1.0]), np.pi / 2, BPSK)
    with pytest.raises(ValueError):
        rotate(QPSK.point_array, 0.3, QPSK)


def test_rotation_groups():
    assert BPSK.rotation_group == pytest.approx((0.0, np.pi))
    assert QPSK.rotation_group == pytest.approx((0.0, np.pi / 2, np.pi, 3 * np.pi / 2))


@pytest.mark.parametrize("c", [BPSK, QPSK])
def test_rotation_closure_exhaustive(c):
    pts = np.asarray(c.points)
    for phi in c.rotation_group:
        rotated = np.exp(1j * phi) * pts
        # permutes the alphabet exactly
        d = np.abs(rotated[:, None] - pts[None, :])
        assert np.all(d.min(axis=1) < 1e-12)
        assert len(set(d.argmin(axis=1))) == c.order


@given(st.integers(0, 3), st.integers(0, 3), st.lists(st.integers(0, 3), min_size=1, max_size=6))
def test_rotation_composition(a, b, digits):
    pts = QPSK.point_array[digits]
    ga, gb = QPSK.rotation_group[a], QPSK.rotation_group[b]
    twice = rotate(rotate(pts, ga, QPSK), gb, QPSK)
    once = rotate(pts, QPSK.rotation_group[(a + b) % 4], QPSK)
    np.testing.assert_allclose(twice, once)


@given(st.integers(0, 3), st.integers(0, 255))
def test_label_rotation_matches_symbol_rotation(step, label):
    sym = class_symbols(label, QPSK, 4)
    expect = class_index(rotate(sym, QPSK.rotation_group[step], QPSK), QPSK)
    assert label_rotation(QPSK, step, 4)[label] == expect


def test_label_rotation_is_read_only_permutation():
    perm = label_rotation(QPSK, 1, 2)
    assert sorted(perm) == list(range(16))
    with pytest.raises(ValueError):
        perm[0] = 3


def test_get_constellation():
    assert get_constellation("qpsk") is QPSK
    with pytest.raises(ValueError):
        get_constellation("16qam")
