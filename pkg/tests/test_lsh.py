import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fedgroup import lsh
from fedgroup.errors import ConfigurationError, ContractError, FormatError, NumericDivergenceError
from fedgroup.lsh import LshFamily, collision_rate, min_family_size, sample_family

from oracles import collision_probability


def one(a, b, r):
    return LshFamily(np.array([a], dtype=float), np.array([b]), r)


def test_direct_evaluation():
    assert lsh.hash(one([1, 0], 0.0, 3.0), np.array([4.5, 7.0])).tolist() == [1]


def test_negative_floor():
    # (-4 + 2.9) / 3 = -0.3667 -> -1, not 0
    assert lsh.hash(one([1, 1], 2.9, 3.0), np.array([-2.0, -2.0])).tolist() == [-1]


def test_zero_vector_hashes_to_zero():
    fam = sample_family(50, 4, 3.0, seed=1)
    assert np.all(lsh.hash(fam, np.zeros(4)) == 0)


def test_hash_is_int64():
    out = lsh.hash(sample_family(3, 2, 1.0, 0), np.array([1.0, 2.0]))
    assert out.dtype == np.int64 and out.shape == (3,)


def test_same_seed_same_family():
    a, b = sample_family(4, 6, 3.0, 7), sample_family(4, 6, 3.0, 7)
    np.testing.assert_array_equal(a.a, b.a)
    np.testing.assert_array_equal(a.b, b.b)
    assert not np.array_equal(a.a, sample_family(4, 6, 3.0, 8).a)


def test_offsets_in_range():
    fam = sample_family(10_000, 1, 3.0, 2)
    assert fam.b.min() >= 0 and fam.b.max() <= 3.0


def test_projection_variance():
    fam = sample_family(1000, 100, 3.0, 4)
    # d*h = 1e5 draws; sample variance was 1.002 at build time
    assert abs(fam.a.var() - 1.0) <= 0.1


@pytest.mark.parametrize("h,d,r", [(0, 3, 1.0), (2, 0, 1.0), (2, 3, 0.0), (2, 3, -1.0)])
def test_invalid_family(h, d, r):
    with pytest.raises(ConfigurationError):
        sample_family(h, d, r, 0)


def test_dimension_mismatch():
    with pytest.raises(ContractError):
        lsh.hash(sample_family(2, 3, 1.0, 0), np.zeros(4))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_overflow_is_loud():
    with pytest.raises(NumericDivergenceError):
        lsh.hash(one([1.0], 0.0, 1e-300), np.array([1e300]))


def test_text_round_trip(tmp_path):
    fam = sample_family(3, 5, 3.0, 11)
    text = fam.dumps()
    assert len(text.splitlines()) == 3
    assert text.splitlines()[0].split()[0] == "3.0"
    back = LshFamily.loads(text)
    np.testing.assert_array_equal(back.a, fam.a)
    np.testing.assert_array_equal(back.b, fam.b)
    fam.save(tmp_path / "fam.txt")
    v = np.arange(5.0)
    np.testing.assert_array_equal(lsh.hash(LshFamily.load(tmp_path / "fam.txt"), v), lsh.hash(fam, v))


def test_malformed_text():
    with pytest.raises(FormatError):
        LshFamily.loads("3.0 1.0 x\n")
    with pytest.raises(FormatError) as err:
        LshFamily.loads("3.0 1.0 2.0\n3.0 1.0\n")
    assert err.value.offset == len("3.0 1.0 2.0\n")
    with pytest.raises(FormatError):
        LshFamily.loads("")


@pytest.mark.parametrize("r,k,expected", [
    (3.0, 10, 3), (3.0, 9, 2), (2.0, 8, 3), (2.0, 9, 4), (3.0, 1, 1), (10.0, 10, 1), (1.0, 5, 1),
])
def test_min_family_size(r, k, expected):
    assert min_family_size(r, k) == expected


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 2**31), h=st.integers(1, 6), d=st.integers(1, 6),
       r=st.floats(0.1, 10), scale=st.floats(0.1, 100))
def test_shift_property(seed, h, d, r, scale):
    fam = sample_family(h, d, r, seed)
    v = np.random.default_rng(seed).normal(scale=scale, size=d)
    moved = lsh.evaluate(fam.a, fam.b + fam.r, fam.r, v)[0]
    np.testing.assert_array_equal(moved, lsh.hash(fam, v) + 1)


def test_collision_rate_zero_distance():
    assert collision_rate(8, 3.0, 0.0, 100, 0) == 1.0


def test_collision_rate_decreases():
    assert collision_rate(8, 3.0, 30.0, 10_000, 1) < collision_rate(8, 3.0, 0.3, 10_000, 2)


def test_collision_rate_matches_integral():
    est = collision_rate(8, 3.0, 3.0, 100_000, 3)
    assert abs(est - collision_probability(3.0, 3.0)) <= 0.01


def test_sensitivity_gap():
    r = 3.0
    near, far = collision_rate(8, r, 0.5 * r, 100_000, 4), collision_rate(8, r, 5 * r, 100_000, 5)
    # integral oracle: p(1.5) = 0.80, p(15) = 0.08; margin 0.2 is far inside
    assert collision_probability(r, 0.5 * r) - collision_probability(r, 5 * r) > 0.5
    assert near > far + 0.2
