"""Bit-arrival processes for a streaming source of ``n`` equiprobable bits.

Every model delivers the first bit at ``t = 1``.  The transition law out of a
string ``s`` of length ``len < n`` puts ``stay`` on ``s`` and ``grow`` on each of
``s+'0'`` and ``s+'1'``; full-length strings are absorbing.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional

import numpy as np

from .strings import heap_index

KINDS = ("periodic", "bernoulli", "block", "buffered")


@dataclass(frozen=True)
class ArrivalModel:
    kind: str
    n: int
    q: float = 1.0
    inner: Optional["ArrivalModel"] = None
    # q(t): probability that a bit arrives at time t (t >= 2); overrides q
    q_schedule: Optional[Callable[[int], float]] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown arrival kind {self.kind!r}")
        if self.n < 1:
            raise ValueError("message length n must be >= 1")
        if self.kind == "bernoulli" and not 0.0 < self.q <= 1.0:
            raise ValueError(f"arrival probability q must lie in (0, 1], got {self.q}")
        if self.kind == "buffered":
            if self.inner is None or self.inner.kind == "buffered":
                raise ValueError("buffered model needs a non-buffered inner model")
            if self.inner.n != self.n:
                raise ValueError("buffered model and its inner model disagree on n")

    def q_at(self, t: int) -> float:
        """Per-step arrival probability of the next bit at time ``t``."""
        if self.kind == "periodic":
            return 1.0
        if self.kind == "bernoulli":
            if self.q_schedule is not None:
                q = float(self.q_schedule(t))
                if not 0.0 < q <= 1.0:
                    raise ValueError(f"q({t}) = {q} outside (0, 1]")
                return q
            return self.q
        raise ValueError(f"{self.kind} arrivals have no per-step arrival probability")

    @property
    def instantaneous(self) -> bool:
        """True for one-bit-per-step models (the ones the codecs stream over)."""
        return self.kind in ("periodic", "bernoulli")

    def describe(self) -> str:
        if self.kind == "bernoulli":
            return f"bernoulli:{self.q:g}" + ("(scheduled)" if self.q_schedule else "")
        if self.kind == "buffered":
            return "buffered:" + self.inner.describe()
        return self.kind


def periodic(n: int) -> ArrivalModel:
    return ArrivalModel("periodic", n)


def bernoulli(n: int, q: float, q_schedule: Callable[[int], float] | None = None) -> ArrivalModel:
    return ArrivalModel("bernoulli", n, q=q, q_schedule=q_schedule)


def block_at_start(n: int) -> ArrivalModel:
    return ArrivalModel("block", n)


def buffered(inner: ArrivalModel) -> ArrivalModel:
    return ArrivalModel("buffered", inner.n, inner=inner)


def parse_arrivals(spec: str, n: int) -> ArrivalModel:
    """``periodic | bernoulli:<q> | block | buffered:<inner spec>``."""
    s = spec.strip().lower()
    if s == "periodic":
        return periodic(n)
    if s == "block":
        return block_at_start(n)
    if s.startswith("bernoulli"):
        try:
            q = float(s.split(":", 1)[1])
        except (IndexError, ValueError):
            raise ValueError(f"bad arrivals spec {spec!r}; expected bernoulli:<q>") from None
        return bernoulli(n, q)
    if s.startswith("buffered:"):
        return buffered(parse_arrivals(s.split(":", 1)[1], n))
    raise ValueError(f"unknown arrivals spec {spec!r}")


@dataclass(frozen=True)
class ArrivalTrace:
    bits: np.ndarray  # uint8, length n
    tau: np.ndarray  # int64 arrival times, nondecreasing, tau[0] = 1

    @property
    def n(self) -> int:
        return len(self.bits)

    @property
    def tau_n(self) -> int:
        return int(self.tau[-1])

    @property
    def message(self) -> str:
        return "".join(str(int(b)) for b in self.bits)

    def arrived(self, t: int) -> int:
        """Number of bits that have arrived by time ``t``."""
        return int(np.searchsorted(self.tau, t, side="right"))

    def prefix_index(self, t: int) -> int:
        """Heap number of the string that has arrived by time ``t``."""
        return heap_index(self.bits[: self.arrived(t)])

    def to_csv(self) -> str:
        rows = ["k,tau_k,bit_k"]
        rows += [f"{k + 1},{int(tk)},{int(bk)}" for k, (tk, bk) in enumerate(zip(self.tau, self.bits))]
        return "\n".join(rows) + "\n"


def sample_trace(m: ArrivalModel, rng: np.random.Generator) -> ArrivalTrace:
    bits = rng.integers(0, 2, size=m.n).astype(np.uint8)
    if m.kind == "periodic":
        tau = np.arange(1, m.n + 1, dtype=np.int64)
    elif m.kind == "block":
        tau = np.ones(m.n, dtype=np.int64)
    elif m.kind == "buffered":
        inner = sample_trace(m.inner, rng)
        return ArrivalTrace(inner.bits, np.full(m.n, inner.tau_n, dtype=np.int64))
    elif m.q_schedule is None:
        gaps = rng.geometric(m.q, size=m.n - 1) if m.q < 1.0 else np.ones(m.n - 1, dtype=np.int64)
        tau = np.concatenate(([1], 1 + np.cumsum(gaps))).astype(np.int64)
    else:
        tau = np.empty(m.n, dtype=np.int64)
        tau[0], t = 1, 1
        for k in range(1, m.n):
            t += 1
            while rng.random() >= m.q_at(t):
                t += 1
            tau[k] = t
    return ArrivalTrace(bits, tau)


def prior_mixture_weights(m: ArrivalModel, length: int, t: int | None = None) -> tuple[float, float]:
    """(stay, grow) transition masses out of a string of the given length.

    ``t`` is the time at which the next bit would arrive; it only matters for
    scheduled Bernoulli models.  Block and buffered models never grow a string
    once the codec is running, so they are the identity.
    """
    if not 1 <= length <= m.n:
        raise ValueError(f"string length {length} outside 1..{m.n}")
    if length == m.n or not m.instantaneous:
        return 1.0, 0.0
    q = m.q_at(t if t is not None else 2)
    return 1.0 - q, q / 2.0


class ArrivalStats(NamedTuple):
    tau_bar: float
    d: Optional[float]  # a.s. slack with tau_n <= tau_bar + d; None if unbounded

    @property
    def bounded(self) -> bool:
        return self.d is not None


def arrival_stats(m: ArrivalModel, horizon_tol: float = 1e-13) -> ArrivalStats:
    """Expected arrival time of the n-th bit and its almost-sure slack."""
    if m.kind == "periodic":
        return ArrivalStats(float(m.n), 0.0)
    if m.kind == "block":
        return ArrivalStats(1.0, 0.0)
    if m.kind == "buffered":
        return arrival_stats(m.inner, horizon_tol)
    if m.q_schedule is None:
        if m.q == 1.0:
            return ArrivalStats(float(m.n), 0.0)
        return ArrivalStats(1.0 + (m.n - 1) / m.q, None)
    # scheduled q: E[tau_n] = 1 + sum_t P(tau_n > t) via the law of the arrival count
    dist = np.zeros(m.n + 1)
    dist[1] = 1.0
    tau_bar, t = 1.0, 1
    all_q_one = True
    while True:
        not_done = 1.0 - dist[m.n]
        if not_done < horizon_tol:
            break
        tau_bar += not_done
        t += 1
        q = m.q_at(t)
        all_q_one &= q == 1.0
        moved = dist[:-1] * q
        dist[:-1] -= moved
        dist[1:] += moved
        if t > 10**7:
            raise RuntimeError("arrival schedule too slow to evaluate tau_bar")
    return ArrivalStats(tau_bar, 0.0 if all_q_one else None)


def expected_tau_n(m: ArrivalModel) -> float:
    return arrival_stats(m).tau_bar

