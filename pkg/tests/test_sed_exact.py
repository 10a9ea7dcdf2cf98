import itertools
import math

import numpy as np
import pytest

from feedback_lab.arrivals import bernoulli, block_at_start, periodic, sample_trace
from feedback_lab.channel import DMC, make_bsc, sample_output
from feedback_lab.sed_exact import (BeliefState, ExactSED, InvalidStateError, check_stop, encode,
                                    initial_prior, partition_exact, partition_greedy,
                                    partition_objective, posterior_update, prior_update)
from feedback_lab.strings import heap_index, length_of


def belief(mapping, phase="prior", t=1):
    idx = np.array(sorted(mapping), dtype=np.int64)
    return BeliefState(t, idx, np.array([mapping[i] for i in idx], dtype=float), phase)


def brute_force_prior(post: dict, n: int, q: float) -> dict:
    """Per-string Markov step written out string by string."""
    out = {}
    for s, r in post.items():
        if length_of(s) == n:
            out[s] = out.get(s, 0.0) + r
            continue
        out[s] = out.get(s, 0.0) + (1 - q) * r
        for child in (2 * s + 1, 2 * s + 2):
            out[child] = out.get(child, 0.0) + q / 2 * r
    return {s: v for s, v in out.items() if v > 0}


def brute_force_partition(probs, caid=(0.5, 0.5)):
    """Best objective over all 2^k labelings that respect the group-mass ordering."""
    best = math.inf
    for labels in itertools.product((0, 1), repeat=len(probs)):
        m0 = sum(p for p, g in zip(probs, labels) if g == 0)
        m1 = sum(probs) - m0
        if m0 + 1e-15 < m1:
            continue
        best = min(best, abs(m0 - caid[0]) + abs(m1 - caid[1]))
    return best


def test_initial_prior():
    b = initial_prior(periodic(4))
    assert b.as_dict() == {1: 0.5, 2: 0.5}
    blk = initial_prior(block_at_start(3))
    assert len(blk.index) == 8 and set(length_of(int(i)) for i in blk.index) == {3}


def test_prior_update_worked_example():
    post = belief({1: 0.9, 2: 0.1}, phase="posterior")
    prior = prior_update(post, bernoulli(4, 0.5)).as_dict()
    expected = {heap_index("0"): 0.45, heap_index("1"): 0.05, heap_index("00"): 0.225,
                heap_index("01"): 0.225, heap_index("10"): 0.025, heap_index("11"): 0.025}
    assert prior.keys() == expected.keys()
    for k, v in expected.items():
        assert prior[k] == pytest.approx(v, abs=1e-15)


@pytest.mark.parametrize("q", [0.3, 0.7, 1.0])
def test_prior_update_matches_brute_force(q, rng):
    n = 4
    m = periodic(n) if q == 1.0 else bernoulli(n, q)
    post = {}
    for s in range(1, 2 ** (n + 1) - 1):
        if rng.random() < 0.5:
            post[s] = rng.random()
    total = sum(post.values())
    post = {s: v / total for s, v in post.items()}
    got = prior_update(belief(post, "posterior"), m).as_dict()
    want = brute_force_prior(post, n, q)
    assert got.keys() == want.keys()
    assert all(got[s] == pytest.approx(want[s], rel=1e-12) for s in want)


def test_periodic_support_is_all_strings_of_length_t():
    codec = ExactSED(periodic(5), make_bsc(0.1), 1e-3)
    for t in range(1, 5):
        codec.start_step()
        assert set(length_of(int(i)) for i in codec.belief.index) == {t}
        assert len(codec.belief.index) == 2**t
        codec.observe(0)


def test_block_prior_update_is_identity():
    codec = ExactSED(block_at_start(3), make_bsc(0.1), 1e-3)
    codec.start_step()
    codec.observe(1)
    post = codec.belief.prob.copy()
    codec.start_step()
    assert np.array_equal(codec.belief.prob, post)


def test_prior_update_requires_posterior():
    with pytest.raises(InvalidStateError):
        prior_update(initial_prior(periodic(3)), periodic(3))


@pytest.mark.parametrize("probs, g0_mass, objective", [
    ([0.5, 0.5], 0.5, 0.0),
    ([0.4, 0.4, 0.2], 0.6, 0.2),
    ([0.7, 0.2, 0.1], 0.7, 0.4),
])
def test_greedy_partition_examples(probs, g0_mass, objective):
    b = belief({i + 1: p for i, p in enumerate(probs)})
    part = partition_greedy(b)
    assert part.group_mass[0] == pytest.approx(g0_mass)
    assert part.group_mass[0] >= part.group_mass[1]
    assert partition_objective(part.group_mass, (0.5, 0.5)) == pytest.approx(objective)
    assert partition_objective(partition_exact(b).group_mass, (0.5, 0.5)) == pytest.approx(objective)


def test_greedy_tie_goes_to_smaller_heap_number():
    part = partition_greedy(belief({1: 0.5, 2: 0.5}))
    assert list(part.group) == [0, 1]


def test_exact_partition_matches_brute_force_and_bounds_greedy():
    rng = np.random.default_rng(99)
    ratios = []
    for _ in range(200):
        k = int(rng.integers(1, 13))
        p = rng.dirichlet(np.full(k, float(rng.choice([0.3, 1.0, 5.0]))))
        b = belief({i + 1: v for i, v in enumerate(p)})
        exact = partition_objective(partition_exact(b).group_mass, (0.5, 0.5))
        greedy = partition_objective(partition_greedy(b).group_mass, (0.5, 0.5))
        if k <= 10:
            assert exact == pytest.approx(brute_force_partition(list(p)), abs=1e-12)
        assert greedy >= exact - 1e-12
        ratios.append(greedy / exact if exact > 0 else 1.0)
    assert min(ratios) >= 1.0 - 1e-9


def test_partition_guards():
    with pytest.raises(ValueError):
        partition_exact(belief({i: 1 / 25 for i in range(1, 26)}), cap=20)
    with pytest.raises(InvalidStateError):
        partition_greedy(BeliefState(1, np.zeros(0, np.int64), np.zeros(0), "prior"))


def test_encode():
    b = belief({3: 0.25, 4: 0.25, 5: 0.25, 6: 0.25})
    part = partition_greedy(b)
    assert encode(part, heap_index("01")) == encode(part, heap_index("00")) == 0
    assert encode(part, heap_index("10")) == 1
    with pytest.raises(InvalidStateError):
        encode(part, heap_index("0"))


def test_posterior_update_examples():
    b = belief({1: 0.5, 2: 0.5})
    part = partition_greedy(b)
    post = posterior_update(b, part, make_bsc(0.1), 0).as_dict()
    assert post[1] == pytest.approx(0.9) and post[2] == pytest.approx(0.1)
    useless = posterior_update(b, part, make_bsc(0.5), 1).as_dict()
    assert useless == pytest.approx({1: 0.5, 2: 0.5})
    noiseless = posterior_update(b, part, DMC(np.eye(2)), 1).as_dict()
    assert noiseless == {2: 1.0}


@pytest.mark.parametrize("post, n, eps, expected", [
    ({heap_index("000"): 0.9995, heap_index("001"): 0.0005}, 3, 1e-3, heap_index("000")),
    ({heap_index("00"): 0.9995, heap_index("01"): 0.0005}, 3, 1e-3, None),
    ({heap_index("00"): 0.6, heap_index("01"): 0.39, heap_index("0"): 0.01}, 2, 0.5, heap_index("00")),
    ({heap_index("00"): 0.5, heap_index("01"): 0.5}, 2, 0.5, heap_index("00")),
])
def test_check_stop(post, n, eps, expected):
    assert check_stop(belief(post, "posterior"), n, eps) == expected


def test_mass_floor_flushes_tiny_probabilities():
    b = belief({1: 1.0 - 1e-301, 2: 1e-301})
    part = partition_greedy(b)
    post = posterior_update(b, part, make_bsc(0.1), 0)
    assert list(post.index) == [1]
    assert post.total() == pytest.approx(1.0)


def test_decoder_replay_is_bit_identical(rng):
    ch = make_bsc(0.1)
    model = bernoulli(5, 0.6)
    enc, dec = ExactSED(model, ch, 1e-3), ExactSED(model, ch, 1e-3)
    tr = sample_trace(model, rng)
    for t in range(1, 25):
        enc.start_step()
        dec.start_step()
        assert np.array_equal(enc.partition.group, dec.partition.group)
        y = sample_output(ch, enc.encode(tr.prefix_index(t)), rng)
        enc.observe(y)
        dec.observe(y)
        assert np.array_equal(enc.belief.prob, dec.belief.prob)
        assert abs(enc.belief.total() - 1.0) < 1e-9


def test_codec_rejects_bad_arguments(bsc02):
    with pytest.raises(ValueError):
        ExactSED(periodic(4), bsc02, 1e-3, rule="fastest")
    with pytest.raises(ValueError):
        ExactSED(periodic(4), DMC(np.eye(3)), 1e-3)
    with pytest.raises(ValueError):
        ExactSED(periodic(100), bsc02, 1e-3)


def test_trace_row_schema(bsc02):
    codec = ExactSED(periodic(3), bsc02, 1e-3)
    codec.start_step()
    codec.observe(0)
    assert list(codec.trace_row(0, 0)) == ["t", "phase", "support_size", "mass_G0", "x", "y", "max_posterior"]
