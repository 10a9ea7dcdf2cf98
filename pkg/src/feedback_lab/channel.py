"""Discrete memoryless channels and their information quantities (in bits)."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.special import rel_entr

_ROW_TOL = 1e-12
_LN2 = np.log(2.0)


class UnsupportedChannelError(ValueError):
    """Raised when an operation needs a channel shape it does not support."""


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class DMC:
    """Finite-alphabet channel given by a row-stochastic matrix ``W[x, y]``."""

    W: np.ndarray
    _cdf: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        W = np.array(self.W, dtype=float)
        if W.ndim != 2 or W.shape[0] < 2 or W.shape[1] < 1:
            raise ValueError(f"transition matrix must be 2-D with >= 2 rows, got shape {W.shape}")
        if np.any(W < 0) or np.any(W > 1):
            raise ValueError("transition probabilities must lie in [0, 1]")
        if np.any(np.abs(W.sum(axis=1) - 1.0) > _ROW_TOL):
            raise ValueError("every row of the transition matrix must sum to 1")
        W.setflags(write=False)
        cdf = np.cumsum(W, axis=1)
        cdf[:, -1] = 1.0
        cdf.setflags(write=False)
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "_cdf", cdf)

    @property
    def input_size(self) -> int:
        return self.W.shape[0]

    @property
    def output_size(self) -> int:
        return self.W.shape[1]

    @property
    def strictly_positive(self) -> bool:
        return bool(np.all(self.W > 0))

    def is_bsc(self) -> bool:
        W = self.W
        return W.shape == (2, 2) and W[0, 1] == W[1, 0]

    @property
    def crossover(self) -> float:
        if not self.is_bsc():
            raise UnsupportedChannelError("channel is not a BSC")
        return float(self.W[0, 1])

    def describe(self) -> str:
        if self.is_bsc():
            return f"bsc:{self.crossover:g}"
        return "matrix:" + ";".join(",".join(f"{v:g}" for v in row) for row in self.W)


def make_bsc(p: float) -> DMC:
    if not 0.0 < p < 1.0:
        raise ValueError(f"crossover probability must lie in (0, 1), got {p}")
    return DMC(np.array([[1.0 - p, p], [p, 1.0 - p]]))


def sample_output(ch: DMC, x: int, rng: np.random.Generator) -> int:
    """Draw one output for input ``x``; consumes exactly one uniform from ``rng``."""
    if not 0 <= x < ch.input_size:
        raise ValueError(f"input symbol {x} outside alphabet of size {ch.input_size}")
    return int(np.searchsorted(ch._cdf[x], rng.random(), side="right"))


def divergence(p: np.ndarray, q: np.ndarray) -> float:
    """KL divergence D(p || q) in bits; ``inf`` when p is not dominated by q."""
    return float(np.sum(rel_entr(p, q)) / _LN2)


def binary_entropy(p: float) -> float:
    if p <= 0.0 or p >= 1.0:
        return 0.0
    return float(-(p * np.log2(p) + (1 - p) * np.log2(1 - p)))


def blahut_arimoto(W: np.ndarray, tol: float = 1e-10, max_iter: int = 100_000):
    """Capacity (bits) and capacity-achieving input distribution of ``W``.

    Iterates until the standard upper/lower capacity bounds are within ``tol``.
    """
    W = np.asarray(W, dtype=float)
    m = W.shape[0]
    r = np.full(m, 1.0 / m)
    for _ in range(max_iter):
        out = r @ W
        # D(W_x || r W) per input, in nats
        d = np.sum(rel_entr(W, out[None, :]), axis=1)
        lower = np.log(np.sum(r * np.exp(d)))
        upper = np.max(d)
        if upper - lower < tol * _LN2:
            return float(lower / _LN2), r
        r = r * np.exp(d)
        r /= r.sum()
    raise ConvergenceError(f"Blahut-Arimoto did not converge within {max_iter} iterations")


@dataclass(frozen=True)
class ChannelInfo:
    capacity: float
    caid: np.ndarray
    c1: float
    c1_argmax: tuple[int, int]

    def csv_row(self) -> str:
        return ",".join(
            [f"{self.capacity:.10g}", f"{self.caid[0]:.10g}", f"{self.caid[1]:.10g}",
             f"{self.c1:.10g}", str(self.c1_argmax[0]), str(self.c1_argmax[1])]
        )


def max_pairwise_divergence(ch: DMC) -> tuple[float, tuple[int, int]]:
    """C1 and its maximising ordered input pair (lexicographically first on ties)."""
    best, arg = -1.0, (0, 1)
    for x1 in range(ch.input_size):
        for x2 in range(ch.input_size):
            if x1 == x2:
                continue
            d = divergence(ch.W[x1], ch.W[x2])
            # relative slack so mirror-image pairs of a symmetric channel tie
            if d > best + 1e-12 * max(1.0, abs(best)):
                best, arg = d, (x1, x2)
    return best, arg


def channel_info(ch: DMC, tol: float = 1e-10, max_iter: int = 100_000) -> ChannelInfo:
    if tol <= 0:
        raise ValueError("tol must be positive")
    cap, caid = blahut_arimoto(ch.W, tol=tol, max_iter=max_iter)
    c1, arg = max_pairwise_divergence(ch)
    caid = caid.copy()
    caid.setflags(write=False)
    return ChannelInfo(capacity=max(cap, 0.0), caid=caid, c1=c1, c1_argmax=arg)


class AssumptionReport(NamedTuple):
    uniform_caid: bool  # capacity-achieving input is (1/2, 1/2)
    c1_at_01: bool  # C1 attained by the input pair (0, 1)
    strictly_positive: bool  # every transition probability is positive

    @property
    def all_hold(self) -> bool:
        return self.uniform_caid and self.c1_at_01 and self.strictly_positive


def check_theorem1_assumptions(ch: DMC, tol: float = 1e-6) -> AssumptionReport:
    """Channel-side conditions of the reliability bound for 2-input DMCs."""
    if ch.input_size != 2:
        raise UnsupportedChannelError("the reliability bound is stated for 2-input channels only")
    info = channel_info(ch)
    return AssumptionReport(
        uniform_caid=bool(np.all(np.abs(info.caid - 0.5) <= tol)),
        c1_at_01=info.c1_argmax == (0, 1),
        strictly_positive=ch.strictly_positive,
    )


def parse_channel(spec: str) -> DMC:
    """Parse ``bsc:<p>``, ``bsc <p>``, or a row-major matrix ``[matrix:]a,b;c,d``."""
    s = spec.strip()
    low = s.lower()
    if low.startswith("bsc"):
        rest = s[3:].lstrip(": ").strip()
        try:
            return make_bsc(float(rest))
        except ValueError as exc:
            raise ValueError(f"bad BSC spec {spec!r}: {exc}") from None
    if low.startswith("matrix"):
        s = s[6:].lstrip(": ").strip()
    try:
        rows = [[float(v) for v in row.replace(" ", ",").split(",") if v] for row in s.split(";")]
    except ValueError:
        raise ValueError(f"cannot parse channel spec {spec!r}") from None
    if len({len(r) for r in rows}) != 1:
        raise ValueError(f"ragged transition matrix in {spec!r}")
    return DMC(np.array(rows))


def format_channel_info(ch: DMC, info: ChannelInfo, report: AssumptionReport | None = None) -> str:
    lines = [
        f"channel      {ch.describe()}",
        f"capacity C   {info.capacity:.6f} bits/use",
        "caid         (" + ", ".join(f"{v:.6f}" for v in info.caid) + ")",
        f"C1           {info.c1:.5f} bits  at (x1, x2) = {info.c1_argmax}",
    ]
    if report is not None:
        mark = {True: "pass", False: "FAIL"}
        lines += [
            f"assumption 3 (uniform caid)        {mark[report.uniform_caid]}",
            f"assumption 4 (C1 at x1=0, x2=1)    {mark[report.c1_at_01]}",
            f"assumption 5 (positive entries)    {mark[report.strictly_positive]}",
        ]
    return "\n".join(lines)
