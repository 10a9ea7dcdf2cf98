"""Property checks shared by the test-suite and the ``validate`` command."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .arrivals import ArrivalModel, bernoulli, periodic, sample_trace
from .channel import make_bsc, sample_output
from .harness import ExperimentConfig, Summary, map_trials, run_trial, trial_rng
from .reference import ExtensionalTypeSetSED
from .sed_exact import ExactSED
from .sed_typeset import TypeSetSED, TypeSetState

NORM_CHECK = 1e-9
EQUIV_TOL = 1e-12


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}" + (f": {self.detail}" if self.detail else "")


def _model(n: int, q: float) -> ArrivalModel:
    return periodic(n) if q == 1.0 else bernoulli(n, q)


def _typeset_sets(state: TypeSetState) -> list[tuple[int, int, int]]:
    return sorted(zip(state.a.tolist(), state.b.tolist(), state.group.tolist()))


def _dict_gap(d1: dict, d2: dict) -> float:
    keys = {k for k, v in d1.items() if v > 0} | {k for k, v in d2.items() if v > 0}
    return max((abs(d1.get(k, 0.0) - d2.get(k, 0.0)) for k in keys), default=0.0)


def typeset_reference_lockstep(n: int, q: float, p: float, epsilon: float, seed: int,
                               t_max: int = 40) -> Optional[str]:
    """Run both type-set implementations on one trace and one channel stream.

    Returns a description of the first disagreement, or None.
    """
    model, ch = _model(n, q), make_bsc(p)
    rng = trial_rng(seed, 0)
    trace = sample_trace(model, rng)
    fast = TypeSetSED(model, ch, epsilon)
    ref = ExtensionalTypeSetSED(model, ch, epsilon)
    for t in range(1, t_max + 1):
        fast.start_step()
        ref.start_step()
        if _typeset_sets(fast.state) != ref.partition_sets():
            return f"t={t}: set partitions differ"
        if max(abs(fast.state.mass[0] - ref.mass[0]), abs(fast.state.mass[1] - ref.mass[1])) > EQUIV_TOL:
            return f"t={t}: group masses differ"
        true = trace.prefix_index(t)
        x_fast, x_ref = fast.encode(true), ref.encode(true)
        if x_fast != x_ref:
            return f"t={t}: channel inputs differ ({x_fast} vs {x_ref})"
        y = sample_output(ch, x_fast, rng)
        fast.observe(y)
        ref.observe(y)
        gap = _dict_gap(fast.posterior_dict(), ref.posterior_dict())
        if gap > EQUIV_TOL:
            return f"t={t}: per-string posteriors differ by {gap:.3e}"
        if fast.decoded() != ref.decoded():
            return f"t={t}: stopping decisions differ"
        if fast.state.census[-1].event != ref.event:
            return f"t={t}: E_t indicators differ"
    return None


# -- per-step invariants -------------------------------------------------------

def typeset_step_violations(state: TypeSetState, n: int) -> list[str]:
    """Structural checks on a type-set state right after the partition step."""
    out = []
    card = state.count
    if abs(float(np.sum(card * state.gamma)) - 1.0) > NORM_CHECK:
        out.append("prior mass not normalised")
    # interval cover: equal-length intervals pairwise disjoint
    order = np.lexsort((state.a, state.strlen))
    a, b, ell = state.a[order], state.b[order], state.strlen[order]
    same = ell[1:] == ell[:-1]
    if np.any(a[1:][same] <= b[:-1][same]):
        out.append("overlapping intervals")
    first = np.array([(1 << int(k)) - 1 for k in state.strlen], dtype=object)
    if np.any(state.a < first) or np.any(state.b >= 2 * first + 1) or np.any(state.a > state.b):
        out.append("interval outside its length class")
    # single parent: every member's parent string lies in the parent set
    for i in range(state.size):
        par = state.parent[i]
        lo, hi = (state.a[i] - 1) // 2, (state.b[i] - 1) // 2
        if par >= 0:
            if not (state.a[par] <= lo and hi <= state.b[par]):
                out.append(f"set {state.sid[i]} has parents outside its parent set")
                break
        elif state.strlen[i] > 1:
            # a live parent set must not exist when the pointer is cleared
            cover = (state.strlen == state.strlen[i] - 1) & (state.a <= hi) & (state.b >= lo)
            if cover.any():
                out.append(f"set {state.sid[i]} lost its parent pointer")
                break
    # partition quality
    g0 = state.group == 0
    m0 = float(np.sum(card[g0] * state.gamma[g0]))
    singleton = int(card[g0].sum()) == 1
    star_gamma = _boundary_gamma(state)
    if not singleton and abs(m0 - 0.5) > star_gamma / 2 + 1e-12:
        out.append(f"|mass(G0) - 0.5| = {abs(m0 - 0.5):.3e} exceeds gamma*/2 = {star_gamma / 2:.3e}")
    if state.mass[0] < state.mass[1]:
        out.append("mass(G0) < mass(G1)")
    return out


def _boundary_gamma(state: TypeSetState) -> float:
    """Per-string prior of the set that pushed the greedy fill past 1/2."""
    order = np.lexsort((state.a, state.strlen, -state.gamma))
    cum = np.cumsum(state.count[order] * state.gamma[order])
    k = min(int(np.searchsorted(cum, 0.5, side="right")), len(order) - 1)
    # splitting may have lowered the boundary set's cumulative mass; any string
    # prior at or above the boundary bounds the residual
    return float(state.gamma[order[k]]) if len(order) else 0.0


class InvariantObserver:
    """Collects invariant violations while a trial runs."""

    def __init__(self):
        self.violations: list[str] = []

    def __call__(self, codec, t, x, y, true_index):
        if isinstance(codec, TypeSetSED):
            st = codec.state
            for v in typeset_step_violations(st, codec.n):
                self.violations.append(f"t={t}: {v}")
            post = float(np.sum(st.count * st.rho))
        elif isinstance(codec, ExactSED):
            post = codec.belief.total()
            if abs(float(codec.partition.group_mass.sum()) - 1.0) > NORM_CHECK:
                self.violations.append(f"t={t}: exact group masses not normalised")
        else:
            return
        if abs(post - 1.0) > NORM_CHECK:
            self.violations.append(f"t={t}: posterior mass {post!r}")


def exact_encoder_decoder_identity(cfg: ExperimentConfig, trial_index: int) -> Optional[str]:
    """Replay a trial's outputs through a decoder that never sees the message."""
    steps = []

    def record(codec, t, x, y, true_index):
        steps.append((codec.partition.group.copy(), codec.belief.prob.copy(), y))

    run_trial(cfg, trial_index, observer=record)
    dec = ExactSED(cfg.model, cfg.dmc, cfg.epsilon, rule=cfg.rule)
    for k, (group, post, y) in enumerate(steps, start=1):
        dec.start_step()
        if not np.array_equal(dec.partition.group, group):
            return f"t={k}: decoder partition differs"
        dec.observe(y)
        if not np.array_equal(dec.belief.prob, post):
            return f"t={k}: decoder posterior differs"
    return None


def _random_config(rng: np.random.Generator, k: int) -> ExperimentConfig:
    codec = "typeset" if k % 2 == 0 else "exact"
    n = int(rng.integers(2, 7 if codec == "exact" else 9))
    q = float(rng.choice([1.0, round(float(rng.uniform(0.3, 1.0)), 3)]))
    p = round(float(rng.uniform(0.01, 0.2)), 4)
    eps = float(10 ** rng.uniform(-3, -1))
    arrivals = "periodic" if q == 1.0 else f"bernoulli:{q}"
    return ExperimentConfig(codec=codec, channel=f"bsc:{p}", arrivals=arrivals, n=n,
                            epsilon=eps, trials=1, master_seed=int(rng.integers(2**31)))


def _check_one(cfg: ExperimentConfig, k: int) -> list[str]:
    obs = InvariantObserver()
    try:
        rec = run_trial(cfg, 0, observer=obs)
    except Exception as exc:  # any codec failure is a violation
        return [f"config {k} ({cfg.describe()}): {exc}"]
    problems = [f"config {k}: {v}" for v in obs.violations[:3]]
    if not rec.truncated and rec.lam < rec.tau_n:
        problems.append(f"config {k}: lambda {rec.lam} < tau_n {rec.tau_n}")
    if cfg.codec == "exact":
        msg = exact_encoder_decoder_identity(cfg, 0)
        if msg:
            problems.append(f"config {k}: {msg}")
    return problems


def invariant_suite(num_configs: int = 1000, seed: int = 12345,
                    equivalence_trials: int = 200, workers: int = 2) -> list[CheckResult]:
    """Randomised invariant checks; one result line per property family."""
    rng = np.random.default_rng(seed)
    configs = [_random_config(rng, k) for k in range(num_configs)]
    problems: list[str] = []
    for k, cfg in enumerate(configs):
        problems += _check_one(cfg, k)
    results = [CheckResult(
        f"invariants over {num_configs} random configs (normalisation, lambda>=tau_n, "
        "partition quality, single parent, interval cover, encoder/decoder identity)",
        not problems, "; ".join(problems[:5]))]

    mismatches = equivalence_failures(equivalence_trials, seed)
    results.append(CheckResult(f"type-set vs extensional reference over {equivalence_trials} trials",
                               not mismatches, "; ".join(mismatches[:3])))

    cfg = ExperimentConfig(codec="typeset", channel="bsc:0.05", arrivals="bernoulli:0.7", n=6,
                           epsilon=1e-2, trials=24, master_seed=seed)
    serial = Summary(cfg, map_trials(run_trial, cfg, range(cfg.trials), workers=1))
    parallel = Summary(cfg, map_trials(run_trial, cfg, range(cfg.trials), workers=workers))
    same = [(r.lam, r.correct, r.tau_n) for r in serial.records] == \
           [(r.lam, r.correct, r.tau_n) for r in parallel.records]
    results.append(CheckResult(f"reproducibility: 1 vs {workers} workers", same))
    return results


_EQUIV_GRID = [(n, q, p) for n in (4, 6, 8) for q in (0.3, 0.7, 1.0) for p in (0.05, 0.11)]


def equivalence_failures(count: int, seed: int = 0) -> list[str]:
    """Lockstep-compare the two type-set codecs over a grid of small configs."""
    grid = _EQUIV_GRID
    out = []
    for k in range(count):
        n, q, p = grid[k % len(grid)]
        msg = typeset_reference_lockstep(n, q, p, 1e-2, seed=seed + k)
        if msg:
            out.append(f"(n={n}, q={q}, p={p}, seed={seed + k}) {msg}")
    return out


__all__ = [
    "CheckResult", "InvariantObserver", "equivalence_failures", "exact_encoder_decoder_identity",
    "invariant_suite", "typeset_reference_lockstep", "typeset_step_violations",
]
