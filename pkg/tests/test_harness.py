import math

import numpy as np
import pytest

from feedback_lab.arrivals import bernoulli
from feedback_lab.harness import (CODECS, ExperimentConfig, Summary, TrialError, map_trials,
                                  run_census, run_experiment, run_trial, sweep, trial_rng)


@pytest.fixture
def small_cfg():
    return ExperimentConfig(codec="typeset", channel="bsc:0.05", arrivals="periodic", n=5,
                            epsilon=1e-2, trials=40, master_seed=7)


def test_trial_rng_is_keyed_by_seed_and_index():
    a = trial_rng(1, 3).random(4)
    assert np.array_equal(a, trial_rng(1, 3).random(4))
    assert not np.array_equal(a, trial_rng(1, 4).random(4))
    assert not np.array_equal(a, trial_rng(2, 3).random(4))


def test_run_trial_is_deterministic(small_cfg):
    assert run_trial(small_cfg, 5) == run_trial(small_cfg, 5)


@pytest.mark.parametrize("codec", CODECS)
def test_every_codec_decodes_a_noiseless_channel(codec):
    cfg = ExperimentConfig(codec=codec, channel="bsc:1e-9", arrivals="periodic", n=4,
                           epsilon=1e-3, trials=5)
    recs = [run_trial(cfg, i) for i in range(5)]
    assert all(r.correct and not r.truncated for r in recs)
    assert len({r.lam for r in recs}) == 1
    assert all(r.lam >= r.tau_n for r in recs)


def test_typeset_and_reference_agree_per_trial():
    base = dict(channel="bsc:0.02", arrivals="periodic", n=8, epsilon=1e-3, trials=30, master_seed=11)
    a = run_experiment(ExperimentConfig(codec="typeset", **base), workers=1)
    b = run_experiment(ExperimentConfig(codec="typeset-reference", **base), workers=1)
    assert [(r.lam, r.correct) for r in a.records] == [(r.lam, r.correct) for r in b.records]


def test_buffered_codec_waits_for_the_whole_block():
    cfg = ExperimentConfig(codec="exact-buffered", channel="bsc:0.05", arrivals="bernoulli:0.5", n=4,
                           epsilon=1e-2, trials=30, master_seed=2)
    block = cfg.with_(codec="exact-block")  # same trace draw, so same channel noise
    buf = run_experiment(cfg, workers=1)
    blk = run_experiment(block, workers=1)
    for rb, rk in zip(buf.records, blk.records):
        assert rb.lam >= rb.tau_n
        assert rb.lam - (rb.tau_n - 1) == rk.lam


def test_summary_of_one_trial(small_cfg):
    cfg = small_cfg.with_(trials=1)
    rec = run_trial(cfg, 0)
    s = run_experiment(cfg, workers=1)
    assert s.mean_lambda == rec.lam and s.rate == cfg.n / rec.lam
    assert s.error_rate == float(not rec.correct) and s.lambda_ci == 0.0


def test_summary_csv(small_cfg):
    s = run_experiment(small_cfg, workers=1)
    fields = s.csv_row().split(",")
    assert len(fields) == len(Summary.CSV_HEADER.split(","))
    assert fields[:4] == ["typeset", "5", "periodic", "0.05"]


def test_parallel_matches_serial(small_cfg):
    serial = run_experiment(small_cfg, workers=1)
    parallel = run_experiment(small_cfg, workers=3)
    assert serial.records == parallel.records


def test_ci_shrinks_like_root_m(small_cfg):
    cfg = small_cfg.with_(channel="bsc:0.11", epsilon=0.2)
    a = run_experiment(cfg.with_(trials=400), workers=1)
    b = run_experiment(cfg.with_(trials=1600), workers=1)
    assert b.lambda_ci == pytest.approx(a.lambda_ci / 2, rel=0.3)


def test_truncation_counts_as_error(small_cfg):
    s = run_experiment(small_cfg.with_(time_cap=3, trials=10), workers=1)
    assert s.truncated_frac == 1.0 and s.error_rate == 1.0 and s.mean_lambda == 3
    assert s.flagged


def test_default_cap():
    cfg = ExperimentConfig(channel="bsc:0.02", n=10)
    assert cfg.cap == math.ceil(50 * 10 / cfg.capacity)


def test_sweep_rates_increase_with_n():
    cfg = ExperimentConfig(codec="typeset", channel="bsc:0.02", arrivals="periodic", epsilon=1e-3,
                           trials=300, master_seed=4)
    rates = [s.rate for s in sweep(cfg, [2, 6, 10], workers=1)]
    assert rates[0] < rates[1] < rates[2] < cfg.capacity


def test_sweep_reinstantiates_model_objects():
    cfg = ExperimentConfig(codec="typeset", channel="bsc:0.05", arrivals=bernoulli(3, 0.5), n=3, trials=5)
    out = sweep(cfg, [3, 4], workers=1)
    assert [s.config.model.n for s in out] == [3, 4]


@pytest.mark.parametrize("kwargs", [
    dict(codec="turbo"), dict(trials=0), dict(epsilon=1.5),
    dict(codec="typeset", channel="0.9,0.1;0.2,0.8"),
])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        ExperimentConfig(**kwargs)


def test_trial_errors_carry_the_index(monkeypatch, small_cfg):
    from feedback_lab import harness

    def broken(*args, **kwargs):
        raise RuntimeError("boom")

    monkeypatch.setattr(harness, "sample_output", broken)
    with pytest.raises(TrialError, match="trial 3"):
        run_trial(small_cfg, 3)


def test_census_first_steps():
    cfg = ExperimentConfig(codec="typeset", channel="bsc:0.1", arrivals="periodic", n=10, trials=20)
    cen = run_census(cfg, 6, workers=1)
    assert cen.mean_nb[0] == 2 and cen.mean_na[0] == 2
    assert cen.mean_nb[1] == 4
    assert cen.freq_event_c[0] == 0.0


def test_map_trials_preserves_order(small_cfg):
    out = map_trials(lambda cfg, i: i * i, small_cfg, range(7), workers=1)
    assert out == [i * i for i in range(7)]
