"""Frequency table, joint similarity, time-targeted rescoring, allocation."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from edgereid import strategy as sg
from edgereid.errors import ConfigError, DataError, InputError, ShapeError
from edgereid.scene import Observation, Scene
from edgereid.transition import TransitionNet, TransitionNetConfig

# single gallery item, spatio-temporal softmax collapses to 1, visual gate
# open at v=1: s = -[1 / (1 + 0.1 e)] / 2, frozen by hand
SINGLE_ITEM_JOINT = -0.3931348642402118


def two_sighting_scene(bin_width=20):
    obs = (Observation(0, 0, 0), Observation(0, 1, 50),
           Observation(1, 0, 7), Observation(1, 0, 11))
    scene = Scene(num_cameras=3, observations=obs,
                  train_identities=frozenset({0, 1}),
                  test_identities=frozenset())
    return sg.fit_frequency(scene, bin_width=bin_width, sigma_bins=0.0,
                            floor=1e-12)


def test_frequency_counts_land_in_signed_bins():
    freq = two_sighting_scene()
    # identity 0 contributes exactly the ordered pairs (0->1, +50), (1->0, -50)
    assert freq.observed[0, 1] and freq.observed[1, 0]
    assert not freq.observed[0, 2] and not freq.observed[0, 0]
    assert freq.bounded_score(0, 1, 50.0) == 1.0
    assert freq.bounded_score(1, 0, -50.0) == 1.0
    # wrong sign of the delay finds only the floor
    assert freq.bounded_score(0, 1, -50.0) < 1e-6
    # never co-observed pairs score zero, not the floor
    assert freq.bounded_score(0, 2, 50.0) == 0.0
    np.testing.assert_array_equal(freq.bounded_score(2, 1, np.array([1.0, 2.0])),
                                  [0.0, 0.0])


def test_frequency_normalised_per_source_camera():
    freq = two_sighting_scene()
    totals = freq.table.sum(axis=(1, 2))
    np.testing.assert_allclose(totals, 1.0, atol=1e-12)
    assert np.all(freq.table > 0.0)


def test_frequency_out_of_range_uses_slice_minimum():
    freq = two_sighting_scene()
    far = freq.prob(0, 1, 1e12)
    assert far == freq.table[0, 1].min()


def test_frequency_gaussian_smoothing_ratio():
    obs = (Observation(0, 0, 0), Observation(0, 1, 50))
    scene = Scene(num_cameras=2, observations=obs,
                  train_identities=frozenset({0}), test_identities=frozenset())
    freq = sg.fit_frequency(scene, bin_width=20, sigma_bins=1.0, floor=1e-15)
    centre = freq.prob(0, 1, np.array([50.0]))[0]
    side = freq.prob(0, 1, np.array([30.0]))[0]
    np.testing.assert_allclose(side / centre, math.exp(-0.5), atol=1e-6)


def test_frequency_validation():
    obs = (Observation(0, 0, 0), Observation(0, 0, 5))
    scene = Scene(num_cameras=2, observations=obs,
                  train_identities=frozenset({0}), test_identities=frozenset())
    with pytest.raises(DataError, match="cross-camera"):
        sg.fit_frequency(scene)
    with pytest.raises(ConfigError):
        sg.fit_frequency(scene, bin_width=0)
    freq = two_sighting_scene()
    with pytest.raises(InputError):
        freq.prob(0, 9, 1.0)
    with pytest.raises(InputError):
        freq.prob(0, 1, float("nan"))


def test_model_scores_pick_the_dest_camera_column():
    model = TransitionNet(TransitionNetConfig(num_cameras=3, embed_dim=4),
                          np.random.default_rng(0))
    dest = np.array([2, 0, 1])
    ts = np.array([10.0, 25.0, 3.0])
    got = sg.model_scores(model, 1, 0.0, dest, ts)
    rows = model.distribution(np.array([1, 1, 1]), np.zeros(3), ts)
    np.testing.assert_array_equal(got, rows[[0, 1, 2], dest])


def test_fuse_scores_endpoints_and_blend():
    a = np.array([0.2, 0.8])
    b = np.array([1.0, 0.0])
    np.testing.assert_array_equal(sg.fuse_scores(a, b, mu=0.0), a)
    np.testing.assert_array_equal(sg.fuse_scores(a, b, mu=1.0), b)
    np.testing.assert_allclose(sg.fuse_scores(a, b, mu=0.5), [0.6, 0.4])
    with pytest.raises(ConfigError):
        sg.fuse_scores(a, b, mu=1.5)
    with pytest.raises(ShapeError):
        sg.fuse_scores(a, np.array([1.0]))


def test_joint_similarity_single_item_hand_value():
    for mode in ("consistent", "inverted"):
        s = sg.joint_similarity(np.array([0.42]), np.array([1.0]),
                                alpha=0.1, beta=0.1, orientation=mode)
        assert abs(s[0] - SINGLE_ITEM_JOINT) < 1e-6


def test_joint_similarity_range_and_monotonicity():
    rng = np.random.default_rng(1)
    o = rng.uniform(0.0, 1.0, 12)
    v = rng.uniform(-1.0, 1.0, 12)
    s = sg.joint_similarity(o, v)
    assert np.all(s < 0.0) and np.all(s > -1.0)
    # raising one item's spatio-temporal score improves (lowers) its similarity
    bumped = o.copy()
    bumped[3] += 0.05
    s2 = sg.joint_similarity(bumped, v)
    assert s2[3] < s[3]


def test_joint_similarity_ties_broken_by_visual():
    o = np.array([0.5, 0.5, 0.5])
    v = np.array([0.1, 0.9, -0.3])
    s = sg.joint_similarity(o, v)
    assert s[1] < s[0] < s[2]
    inv = sg.joint_similarity(o, v, orientation="inverted")
    assert inv[1] > inv[0] > inv[2]  # the verbatim gate prefers dissimilar items


def test_joint_similarity_validation():
    with pytest.raises(ConfigError):
        sg.joint_similarity([0.1], [0.1], orientation="sideways")
    with pytest.raises(ConfigError):
        sg.joint_similarity([0.1], [0.1], alpha=0.0)
    with pytest.raises(InputError):
        sg.joint_similarity(np.array([]), np.array([]))
    with pytest.raises(InputError):
        sg.joint_similarity([float("nan")], [0.0])
    with pytest.raises(ShapeError):
        sg.joint_similarity([0.1, 0.2], [0.1])


def test_time_targeted_divisors():
    target = np.array([0.7, 0.2, 0.1])
    rows = np.stack([target,                      # aligned, cosine 1
                     np.array([-0.2, 0.7, -0.1])])
    rows[1] -= (rows[1] @ target) / (target @ target) * target  # orthogonal
    s = np.array([-0.5, -0.5])
    out = sg.time_targeted_scores(s, sg.PatternBank(rows=rows, target=target))
    np.testing.assert_allclose(out[0], -0.5 / 2.0, atol=1e-12)
    np.testing.assert_allclose(out[1], -0.5 / (1.0 + math.e), atol=1e-12)
    # aligned items keep more weight, so they rank ahead
    assert out[0] < out[1]
    inv = sg.time_targeted_scores(s, sg.PatternBank(rows=rows, target=target),
                                  orientation="inverted")
    np.testing.assert_allclose(inv[0], -0.5 / 2.0, atol=1e-12)
    np.testing.assert_allclose(inv[1], -0.5 / (1.0 + math.exp(-1.0)), atol=1e-12)


def test_time_targeted_zero_norm_warns():
    bank = sg.PatternBank(rows=np.zeros((1, 3)), target=np.array([1.0, 0.0, 0.0]))
    with pytest.warns(UserWarning, match="zero-norm"):
        out = sg.time_targeted_scores(np.array([-0.4]), bank)
    np.testing.assert_allclose(out, -0.4 / (1.0 + math.e))


def test_pattern_bank_shape_validation():
    with pytest.raises(ShapeError):
        sg.PatternBank(rows=np.zeros((2, 3)), target=np.zeros(4))
    bank = sg.PatternBank(rows=np.zeros((2, 3)), target=np.ones(3))
    with pytest.raises(ShapeError):
        sg.time_targeted_scores(np.zeros(3), bank)


def test_allocation_two_thirds_example():
    # logits / gamma0 = [ln 2, 0] with equal gallery sizes and budget 6
    gamma0 = 0.01
    logits = np.array([math.log(2.0) * gamma0, 0.0])
    alloc = sg.allocate_bandwidth(logits, np.array([10.0, 10.0]), 6,
                                  gamma0=gamma0)
    np.testing.assert_array_equal(alloc.budgets, [4, 2])
    np.testing.assert_allclose(alloc.shares, [4.0, 2.0], atol=1e-9)


def test_allocation_uniform_eight_cameras():
    alloc = sg.uniform_allocation(8, 24)
    np.testing.assert_array_equal(alloc.budgets, np.full(8, 3))


def test_allocation_gamma1_cancels():
    logits = np.array([0.03, 0.01, -0.02])
    sizes = np.array([5.0, 9.0, 2.0])
    a = sg.allocate_bandwidth(logits, sizes, 12, gamma1=0.01)
    b = sg.allocate_bandwidth(logits, sizes, 12, gamma1=7.3)
    np.testing.assert_array_equal(a.budgets, b.budgets)


def test_allocation_enforces_floor_of_one():
    logits = np.array([5.0, 0.0, 0.0])
    alloc = sg.allocate_bandwidth(logits, np.full(3, 4.0), 9, gamma0=0.01)
    assert alloc.budgets.min() >= 1
    assert alloc.budgets.sum() == 9
    np.testing.assert_array_equal(alloc.budgets, [7, 1, 1])


def test_allocation_validation():
    with pytest.raises(ConfigError):
        sg.allocate_bandwidth(np.zeros(3), np.zeros(3), 2)
    with pytest.raises(InputError):
        sg.allocate_bandwidth(np.zeros(1), np.zeros(1), 5)
    with pytest.raises(InputError):
        sg.allocate_bandwidth(np.array([float("inf"), 0.0]), np.zeros(2), 5)
    with pytest.raises(InputError):
        sg.allocate_bandwidth(np.zeros(2), np.array([-1.0, 1.0]), 5)
    with pytest.raises(ConfigError):
        sg.allocate_bandwidth(np.zeros(2), np.zeros(2), 5, gamma0=0.0)


def test_largest_remainder_tie_goes_to_lower_index():
    np.testing.assert_array_equal(
        sg.largest_remainder(np.array([1.5, 1.5, 3.0]), 6), [2, 1, 3])
    np.testing.assert_array_equal(
        sg.largest_remainder(np.array([2.0, 2.0, 2.0]), 6), [2, 2, 2])


@settings(deadline=None, max_examples=100)
@given(st.integers(2, 8), st.integers(0, 2 ** 31 - 1))
def test_allocation_always_sums_to_total(c, seed):
    rng = np.random.default_rng(seed)
    total = int(rng.integers(c, 60))
    logits = rng.normal(scale=0.2, size=c)
    sizes = rng.integers(0, 50, size=c).astype(float)
    alloc = sg.allocate_bandwidth(logits, sizes, total, gamma0=0.5)
    assert alloc.budgets.sum() == total
    assert alloc.budgets.min() >= 1


def test_frequency_scores_batches_by_camera():
    freq = two_sighting_scene()
    dest = np.array([1, 2, 1])
    ts = np.array([50.0, 50.0, -50.0])
    out = sg.frequency_scores(freq, 0, 0.0, dest, ts)
    assert out[0] == 1.0 and out[1] == 0.0 and out[2] < 1e-6
    with pytest.raises(ShapeError):
        sg.frequency_scores(freq, 0, 0.0, np.array([1, 2]), np.array([1.0]))
