import math

import numpy as np
import pytest

from feedback_lab.channel import (DMC, ConvergenceError, UnsupportedChannelError, binary_entropy,
                                  blahut_arimoto, channel_info, check_theorem1_assumptions,
                                  divergence, make_bsc, max_pairwise_divergence, parse_channel,
                                  sample_output)


def h2(p):
    return -p * math.log2(p) - (1 - p) * math.log2(1 - p)


def z_channel_capacity(p):
    # input 1 is flipped to 0 with probability p; input 0 is noiseless
    return math.log2(1 + (1 - p) * p ** (p / (1 - p)))


@pytest.mark.parametrize("p", [0.02, 0.05, 0.11, 0.3, 0.9])
def test_bsc_capacity_and_c1_closed_forms(p):
    info = channel_info(make_bsc(p))
    assert info.capacity == pytest.approx(1 - h2(p), abs=1e-8)
    assert info.c1 == pytest.approx(abs(1 - 2 * p) * math.log2(max(p, 1 - p) / min(p, 1 - p)), abs=1e-8)
    assert np.allclose(info.caid, [0.5, 0.5], atol=1e-6)
    assert info.c1_argmax == (0, 1)


def test_bsc02_reference_values(bsc02):
    info = channel_info(bsc02)
    assert info.capacity == pytest.approx(0.858559, abs=1e-6)
    assert info.c1 == pytest.approx(0.96 * math.log2(49), abs=1e-8)
    assert info.c1 == pytest.approx(5.39013, abs=1e-5)


@pytest.mark.parametrize("p", [0.1, 0.3, 0.5])
def test_z_channel_capacity(p):
    W = np.array([[1.0, 0.0], [p, 1 - p]])
    C, r = blahut_arimoto(W)
    assert C == pytest.approx(z_channel_capacity(p), abs=1e-8)
    assert r[0] > 0.5  # the noiseless input is used more often


def test_noiseless_and_useless_channels():
    assert channel_info(DMC(np.eye(2))).capacity == pytest.approx(1.0, abs=1e-9)
    assert channel_info(make_bsc(0.5)).capacity == pytest.approx(0.0, abs=1e-9)
    assert channel_info(DMC(np.eye(3))).capacity == pytest.approx(math.log2(3), abs=1e-9)


def test_ternary_caid_sums_to_one():
    W = np.array([[0.8, 0.1, 0.1], [0.1, 0.8, 0.1], [0.3, 0.3, 0.4]])
    info = channel_info(DMC(W))
    assert sum(info.caid) == pytest.approx(1.0)
    # mutual information at the caid equals the reported capacity
    r = np.array(info.caid)
    py = r @ W
    mi = sum(r[x] * divergence(W[x], py) for x in range(3))
    assert mi == pytest.approx(info.capacity, abs=1e-8)


def test_blahut_arimoto_iteration_budget():
    with pytest.raises(ConvergenceError):
        blahut_arimoto(np.array([[0.8, 0.1, 0.1], [0.1, 0.8, 0.1], [0.3, 0.3, 0.4]]), tol=1e-15, max_iter=3)


def test_divergence_and_entropy_helpers():
    assert divergence([0.5, 0.5], [0.5, 0.5]) == 0.0
    assert divergence([1.0, 0.0], [0.5, 0.5]) == pytest.approx(1.0)
    assert binary_entropy(0.5) == pytest.approx(1.0)
    assert binary_entropy(0.0) == 0.0


def test_c1_infinite_for_zero_entries():
    c1, pair = max_pairwise_divergence(DMC(np.array([[1.0, 0.0], [0.2, 0.8]])))
    assert math.isinf(c1)


@pytest.mark.parametrize("bad", [[[0.5, 0.6], [0.5, 0.5]], [[-0.1, 1.1], [0.5, 0.5]], [0.5, 0.5]])
def test_invalid_matrices_rejected(bad):
    with pytest.raises(ValueError):
        DMC(np.array(bad))


@pytest.mark.parametrize("p", [0.0, 1.0, -0.2])
def test_make_bsc_rejects_degenerate(p):
    with pytest.raises(ValueError):
        make_bsc(p)


def test_assumption_report():
    assert check_theorem1_assumptions(make_bsc(0.02)).all_hold
    z = check_theorem1_assumptions(DMC(np.array([[1.0, 0.0], [0.1, 0.9]])))
    assert not z.strictly_positive and not z.uniform_caid
    with pytest.raises(UnsupportedChannelError):
        check_theorem1_assumptions(DMC(np.eye(3)))


def test_crossover_only_for_bsc():
    assert make_bsc(0.2).crossover == pytest.approx(0.2)
    with pytest.raises(UnsupportedChannelError):
        DMC(np.array([[0.9, 0.1], [0.2, 0.8]])).crossover


@pytest.mark.parametrize("spec, expected", [
    ("bsc:0.02", [[0.98, 0.02], [0.02, 0.98]]),
    ("bsc 0.1", [[0.9, 0.1], [0.1, 0.9]]),
    ("matrix:0.9,0.1;0.2,0.8", [[0.9, 0.1], [0.2, 0.8]]),
    ("1,0;0,1", [[1, 0], [0, 1]]),
])
def test_parse_channel(spec, expected):
    assert np.allclose(parse_channel(spec).W, expected)


@pytest.mark.parametrize("spec", ["bsc:2", "bsc:x", "0.5,0.5;1", "foo"])
def test_parse_channel_errors(spec):
    with pytest.raises(ValueError):
        parse_channel(spec)


def test_sample_output_uses_one_uniform_and_matches_law(rng):
    ch = DMC(np.array([[0.7, 0.2, 0.1], [0.1, 0.1, 0.8]]))
    a, b = np.random.default_rng(5), np.random.default_rng(5)
    sample_output(ch, 0, a)
    b.random()
    assert a.random() == b.random()
    ys = np.array([sample_output(ch, 0, rng) for _ in range(20000)])
    freq = np.bincount(ys, minlength=3) / len(ys)
    assert np.allclose(freq, [0.7, 0.2, 0.1], atol=0.015)
