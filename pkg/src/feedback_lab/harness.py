"""Monte Carlo experiment runner.

Each trial draws its own generator from ``(master_seed, trial_index)``, so a
summary is a pure function of the configuration no matter how trials are
spread over worker processes.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Callable, Optional, Union

import numpy as np

from .arrivals import ArrivalModel, ArrivalTrace, block_at_start, buffered, parse_arrivals, sample_trace
from .channel import DMC, channel_info, parse_channel, sample_output
from .reference import ExtensionalTypeSetSED
from .sed_exact import ExactSED
from .sed_typeset import TypeSetSED, census

CODECS = ("exact", "typeset", "exact-block", "exact-buffered", "typeset-reference")
THREADS_ENV = "FEEDBACK_LAB_THREADS"


class TrialError(RuntimeError):
    def __init__(self, trial_index: int, cause: BaseException):
        super().__init__(f"trial {trial_index}: {type(cause).__name__}: {cause}")
        self.trial_index = trial_index


@dataclass(frozen=True)
class ExperimentConfig:
    codec: str = "typeset"
    channel: str = "bsc:0.02"
    arrivals: Union[str, ArrivalModel] = "periodic"
    n: int = 8
    epsilon: float = 1e-3
    trials: int = 1000
    master_seed: int = 0
    time_cap: Optional[int] = None
    rule: str = "greedy"  # partition rule of the exact codec
    record_census: bool = False

    def __post_init__(self):
        if self.codec not in CODECS:
            raise ValueError(f"unknown codec {self.codec!r}; choose from {', '.join(CODECS)}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError("epsilon must lie in (0, 1)")
        if self.codec.startswith("typeset") and not self.dmc.is_bsc():
            raise ValueError("the type-set codec requires a BSC")
        if isinstance(self.arrivals, ArrivalModel) and self.arrivals.n != self.n:
            raise ValueError("arrival model length disagrees with n")

    @cached_property
    def dmc(self) -> DMC:
        return parse_channel(self.channel)

    @cached_property
    def model(self) -> ArrivalModel:
        if isinstance(self.arrivals, ArrivalModel):
            return self.arrivals
        return parse_arrivals(self.arrivals, self.n)

    @cached_property
    def capacity(self) -> float:
        return channel_info(self.dmc).capacity

    @property
    def cap(self) -> int:
        if self.time_cap is not None:
            return self.time_cap
        return int(math.ceil(50 * self.n / max(self.capacity, 1e-3)))

    @property
    def effective_model(self) -> ArrivalModel:
        """Arrival law seen by the codec-driving loop."""
        m = self.model
        if self.codec == "exact-block":
            return block_at_start(self.n)
        if self.codec == "exact-buffered" and m.kind != "buffered":
            return buffered(m.inner if m.kind == "buffered" else m)
        return m

    @property
    def arrivals_label(self) -> str:
        return self.model.describe()

    def describe(self) -> str:
        return (f"codec={self.codec} channel={self.dmc.describe()} arrivals={self.arrivals_label} "
                f"n={self.n} epsilon={self.epsilon:g} trials={self.trials} "
                f"master_seed={self.master_seed} time_cap={self.cap} rule={self.rule}")

    def with_(self, **changes) -> "ExperimentConfig":
        return replace(self, **changes)


@dataclass
class TrialRecord:
    trial: int
    lam: int
    tau_n: int
    correct: bool
    truncated: bool
    census: Optional[dict] = None


def trial_rng(master_seed: int, trial_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(trial_index,)))


def make_codec(cfg: ExperimentConfig, model: ArrivalModel):
    if cfg.codec == "typeset":
        return TypeSetSED(model, cfg.dmc, cfg.epsilon)
    if cfg.codec == "typeset-reference":
        return ExtensionalTypeSetSED(model, cfg.dmc, cfg.epsilon)
    return ExactSED(model, cfg.dmc, cfg.epsilon, rule=cfg.rule)


Observer = Callable[[object, int, int, int, int], None]


def _drive(cfg: ExperimentConfig, trial_index: int, horizon: Optional[int] = None,
           observer: Optional[Observer] = None):
    """Run one trial; returns (record, codec).

    With ``horizon`` set the codec runs exactly that many channel uses and the
    stopping rule is ignored (used for entropy and census measurements).
    """
    rng = trial_rng(cfg.master_seed, trial_index)
    source = cfg.model.inner if cfg.model.kind == "buffered" else cfg.model
    trace = sample_trace(source, rng)
    model = cfg.effective_model
    offset = 0
    if model.kind == "buffered":
        offset = trace.tau_n - 1  # idle until the whole block has arrived
        model = block_at_start(cfg.n)
    codec_model = model
    if model.kind == "block":
        codec_trace = ArrivalTrace(trace.bits, np.ones(cfg.n, dtype=np.int64))
        if offset == 0:
            trace = codec_trace
    else:
        codec_trace = trace
    codec = make_codec(cfg, codec_model)
    message = codec_trace.prefix_index(1 << 30)
    dmc = cfg.dmc
    limit = horizon if horizon is not None else cfg.cap - offset
    for t in range(1, limit + 1):
        codec.start_step()
        x = codec.encode(codec_trace.prefix_index(t))
        y = sample_output(dmc, x, rng)
        codec.observe(y)
        if observer is not None:
            observer(codec, t + offset, x, y, codec_trace.prefix_index(t))
        if horizon is None:
            decision = codec.decoded()
            if decision is not None:
                rec = TrialRecord(trial_index, t + offset, trace.tau_n, decision == message, False)
                return rec, codec
    if horizon is not None:
        return TrialRecord(trial_index, limit + offset, trace.tau_n, False, False), codec
    return TrialRecord(trial_index, cfg.cap, trace.tau_n, False, True), codec


def run_trial(cfg: ExperimentConfig, trial_index: int, observer: Optional[Observer] = None) -> TrialRecord:
    try:
        rec, codec = _drive(cfg, trial_index, observer=observer)
    except Exception as exc:  # attach the trial index to codec invariant failures
        raise TrialError(trial_index, exc) from exc
    if cfg.record_census and hasattr(codec, "state"):
        rec.census = census(codec.state)
    return rec


def run_horizon_trial(cfg: ExperimentConfig, trial_index: int, horizon: int) -> tuple[float, Optional[dict]]:
    """Posterior entropy (bits) after ``horizon`` channel uses, plus the census."""
    if horizon < 1:
        raise ValueError("evaluation time must be >= 1")
    try:
        _, codec = _drive(cfg, trial_index, horizon=horizon)
    except Exception as exc:
        raise TrialError(trial_index, exc) from exc
    cen = census(codec.state) if hasattr(codec, "state") else None
    return codec.entropy(), cen


def default_workers() -> int:
    env = os.environ.get(THREADS_ENV)
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _chunk_trials(args):
    fn, cfg, indices, extra = args
    return [fn(cfg, i, *extra) for i in indices]


def map_trials(fn, cfg: ExperimentConfig, indices, extra=(), workers: Optional[int] = None) -> list:
    """Apply ``fn(cfg, i, *extra)`` to every trial index, in index order."""
    indices = list(indices)
    workers = default_workers() if workers is None else max(1, workers)
    if workers == 1 or len(indices) < 2:
        return [fn(cfg, i, *extra) for i in indices]
    chunks = [indices[k::workers * 4] for k in range(min(len(indices), workers * 4))]
    out: dict[int, object] = {}
    with ProcessPoolExecutor(max_workers=workers) as pool:
        for chunk, results in zip(chunks, pool.map(_chunk_trials, [(fn, cfg, c, extra) for c in chunks])):
            out.update(zip(chunk, results))
    return [out[i] for i in indices]


@dataclass
class Summary:
    config: ExperimentConfig
    records: list[TrialRecord]
    mean_lambda: float = field(init=False)
    rate: float = field(init=False)
    error_rate: float = field(init=False)
    error_ci: float = field(init=False)
    lambda_ci: float = field(init=False)
    truncated_frac: float = field(init=False)

    def __post_init__(self):
        lam = np.array([r.lam for r in self.records], dtype=float)
        err = np.array([not r.correct for r in self.records], dtype=float)
        m = len(lam)
        self.mean_lambda = float(lam.mean())
        self.rate = self.config.n / self.mean_lambda
        self.error_rate = float(err.mean())
        self.error_ci = 1.96 * math.sqrt(self.error_rate * (1 - self.error_rate) / m)
        self.lambda_ci = 1.96 * float(lam.std(ddof=1)) / math.sqrt(m) if m > 1 else 0.0
        self.truncated_frac = sum(r.truncated for r in self.records) / m

    @property
    def trials(self) -> int:
        return len(self.records)

    @property
    def rate_ci(self) -> tuple[float, float]:
        n = self.config.n
        lo_lam = max(self.mean_lambda - self.lambda_ci, 1e-12)
        return n / (self.mean_lambda + self.lambda_ci), n / lo_lam

    @property
    def flagged(self) -> bool:
        """More than 1% of trials hit the time cap."""
        return self.truncated_frac >= 0.01

    CSV_HEADER = "codec,n,q_or_periodic,p,epsilon,trials,mean_lambda,rate,error_rate,ci,truncated_frac"

    def csv_row(self) -> str:
        cfg = self.config
        p = f"{cfg.dmc.crossover:g}" if cfg.dmc.is_bsc() else "matrix"
        return (f"{cfg.codec},{cfg.n},{cfg.arrivals_label},{p},{cfg.epsilon:g},{self.trials},"
                f"{self.mean_lambda:.6f},{self.rate:.6f},{self.error_rate:.6f},{self.error_ci:.6f},"
                f"{self.truncated_frac:.6f}")


def run_experiment(cfg: ExperimentConfig, workers: Optional[int] = None) -> Summary:
    records = map_trials(run_trial, cfg, range(cfg.trials), workers=workers)
    return Summary(cfg, records)


def sweep(cfg: ExperimentConfig, n_values, workers: Optional[int] = None) -> list[Summary]:
    """One experiment per message length; arrival specs are re-instantiated per n."""
    out = []
    for n in n_values:
        arrivals = cfg.arrivals
        if isinstance(arrivals, ArrivalModel):
            arrivals = replace(arrivals, n=n) if arrivals.inner is None else \
                replace(arrivals, n=n, inner=replace(arrivals.inner, n=n))
        out.append(run_experiment(cfg.with_(n=n, arrivals=arrivals), workers))
    return out


@dataclass
class CensusSummary:
    config: ExperimentConfig
    t: np.ndarray
    mean_nb: np.ndarray
    mean_na: np.ndarray
    freq_event_c: np.ndarray
    trials: int

    CSV_HEADER = "t,mean_NB,mean_NA,bound_NB,bound_NA,freq_Et_complement"


def run_census(cfg: ExperimentConfig, t_max: int, workers: Optional[int] = None) -> CensusSummary:
    """Average type-set counts over ``cfg.trials`` runs of exactly ``t_max`` steps."""
    if not cfg.codec.startswith("typeset"):
        cfg = cfg.with_(codec="typeset")
    results = map_trials(run_horizon_trial, cfg, range(cfg.trials), extra=(t_max,), workers=workers)
    nb = np.array([c["n_before"] for _, c in results], dtype=float)
    na = np.array([c["n_after"] for _, c in results], dtype=float)
    ev = np.array([c["event"] for _, c in results], dtype=float)
    return CensusSummary(cfg, np.arange(1, t_max + 1), nb.mean(axis=0), na.mean(axis=0),
                         1.0 - ev.mean(axis=0), len(results))


def posterior_entropies(cfg: ExperimentConfig, t_eval: int, workers: Optional[int] = None) -> np.ndarray:
    """Posterior entropy H(B*_t | y^t) in bits at ``t_eval`` for every trial."""
    results = map_trials(run_horizon_trial, cfg, range(cfg.trials), extra=(t_eval,), workers=workers)
    return np.array([h for h, _ in results])
