"""Exact instantaneous SED codec over the evolving alphabet of variable-length strings.

Beliefs are stored sparsely: an ascending array of heap numbers and a matching
array of probabilities.  Every tie is broken by heap number, so encoder and
decoder (and repeated runs) make identical choices.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .arrivals import ArrivalModel, prior_mixture_weights
from .channel import DMC, channel_info
from .strings import first_index, lengths_of

log = logging.getLogger(__name__)

MASS_FLOOR = 1e-300
NORM_TOL = 1e-12
MAX_EXACT_N = 48  # heap numbers stay exact in int64 and in float log2


class InvalidStateError(RuntimeError):
    """Codec bookkeeping reached a state that the algorithm rules out."""


@dataclass
class BeliefState:
    t: int
    index: np.ndarray  # ascending heap numbers of support strings
    prob: np.ndarray
    phase: str  # "prior" | "posterior"

    def as_dict(self) -> dict[int, float]:
        return {int(i): float(p) for i, p in zip(self.index, self.prob)}

    @property
    def lengths(self) -> np.ndarray:
        return lengths_of(self.index)

    def total(self) -> float:
        return float(self.prob.sum())

    def entropy(self) -> float:
        p = self.prob[self.prob > 0]
        return float(-np.sum(p * np.log2(p)))

    def max_prob(self) -> float:
        return float(self.prob.max())


@dataclass
class Partition:
    """Group label per support string (aligned with the belief arrays)."""

    index: np.ndarray
    group: np.ndarray  # int8, one entry per support string
    group_mass: np.ndarray  # mass of G_0, G_1, ...

    def members(self, x: int) -> np.ndarray:
        return self.index[self.group == x]


def _clean(index: np.ndarray, prob: np.ndarray, t: int, phase: str) -> BeliefState:
    """Apply the mass floor and renormalise, logging noticeable drift."""
    keep = prob >= MASS_FLOOR
    if not keep.all():
        log.debug("t=%d: flushed %d strings below the mass floor", t, int((~keep).sum()))
        index, prob = index[keep], prob[keep]
    total = prob.sum()
    if total <= 0:
        raise InvalidStateError(f"t={t}: belief has no mass left")
    if abs(total - 1.0) > NORM_TOL:
        log.debug("t=%d: %s mass drift %.3e renormalised", t, phase, total - 1.0)
    return BeliefState(t, index, prob / total, phase)


def initial_prior(m: ArrivalModel) -> BeliefState:
    """Law of the string present at t = 1 (before any channel use)."""
    if m.instantaneous:
        return BeliefState(1, np.array([1, 2], dtype=np.int64), np.array([0.5, 0.5]), "prior")
    size = 1 << m.n
    index = np.arange(first_index(m.n), first_index(m.n) + size, dtype=np.int64)
    return BeliefState(1, index, np.full(size, 1.0 / size), "prior")


def prior_update(belief: BeliefState, m: ArrivalModel) -> BeliefState:
    """Propagate the posterior at t-1 through the arrival law to the prior at t."""
    if belief.phase != "posterior":
        raise InvalidStateError("prior_update expects a posterior belief")
    t = belief.t + 1
    idx, post = belief.index, belief.prob
    ell = lengths_of(idx)
    stay = np.empty(len(idx))
    grow = np.empty(len(idx))
    for length in np.unique(ell):
        s, g = prior_mixture_weights(m, int(length), t)
        stay[ell == length] = s
        grow[ell == length] = g
    g = grow > 0
    if not g.any():
        kept = stay * post
        nz = kept > 0
        return _clean(idx[nz], kept[nz], t, "prior")
    gi, gm = idx[g], (grow * post)[g]
    parts_idx = [idx, 2 * gi + 1, 2 * gi + 2]
    parts_mass = [stay * post, gm, gm]
    all_idx = np.concatenate(parts_idx)
    all_mass = np.concatenate(parts_mass)
    new_idx, inv = np.unique(all_idx, return_inverse=True)
    prior = np.bincount(inv, weights=all_mass, minlength=len(new_idx))
    nz = prior > 0
    return _clean(new_idx[nz], prior[nz], t, "prior")


def _target(caid) -> tuple[int, float]:
    """The input symbol with the larger caid mass (0 on ties) and its mass."""
    a = 0 if caid[0] >= caid[1] else 1
    return a, float(caid[a])


def partition_objective(group_mass: np.ndarray, caid) -> float:
    return float(np.sum(np.abs(np.asarray(group_mass) - np.asarray(caid))))


def partition_greedy(prior: BeliefState, caid=(0.5, 0.5)) -> Partition:
    """Fill the larger-caid group by descending prior, then one local improvement.

    Strings are taken in descending prior (ascending heap number on ties) until
    the group reaches its caid mass.  The last string taken is dropped again if
    that brings the group closer to its target, and the labels are swapped if
    the result violates the ordering of group masses.
    """
    if len(prior.index) == 0:
        raise InvalidStateError("cannot partition an empty support")
    if len(caid) != 2:
        raise ValueError("greedy partition supports 2-input channels only")
    a, target = _target(caid)
    b = 1 - a
    p = prior.prob
    order = np.argsort(-p, kind="stable")
    cum = np.cumsum(p[order])
    total = cum[-1]
    k = min(int(np.searchsorted(cum, target, side="left")), len(p) - 1)
    keep = cum[k]
    drop = cum[k - 1] if k > 0 else 0.0
    count = k if abs(drop - target) < abs(keep - target) else k + 1
    mass_a = drop if count == k else keep
    group = np.full(len(p), b, dtype=np.int8)
    group[order[:count]] = a
    mass = np.zeros(2)
    mass[a], mass[b] = mass_a, total - mass_a
    if mass[a] < mass[b]:
        group = (1 - group).astype(np.int8)
        mass = mass[::-1].copy()
    return Partition(prior.index, group, mass)


def partition_exact(prior: BeliefState, caid=(0.5, 0.5), cap: int = 20) -> Partition:
    """Global minimiser of sum_x |mass(G_x) - caid(x)| by enumeration.

    Subject to the caid ordering constraint; ties go to the numerically smallest
    membership mask of G_0 (bit i set iff the i-th string in heap order is in G_0).
    """
    size = len(prior.index)
    if size == 0:
        raise InvalidStateError("cannot partition an empty support")
    if size > cap:
        raise ValueError(f"support of {size} strings exceeds the enumeration cap {cap}")
    a, _ = _target(caid)
    p = prior.prob
    m0 = np.zeros(1)
    for pi in p:  # mask bit i <-> string i, so masses are built low bit first
        m0 = np.concatenate((m0, m0 + pi))
    total = p.sum()
    m1 = total - m0
    obj = np.abs(m0 - caid[0]) + np.abs(m1 - caid[1])
    ok = (m0 >= m1) if a == 0 else (m1 >= m0)
    obj = np.where(ok, obj, np.inf)
    best = obj.min()
    mask = int(np.flatnonzero(obj <= best + 1e-12)[0])
    in0 = np.array([(mask >> i) & 1 for i in range(size)], dtype=bool)
    group = np.where(in0, 0, 1).astype(np.int8)
    mass = np.array([m0[mask], m1[mask]])
    return Partition(prior.index, group, mass)


def encode(partition: Partition, true_index: int) -> int:
    pos = int(np.searchsorted(partition.index, true_index))
    if pos >= len(partition.index) or partition.index[pos] != true_index:
        raise InvalidStateError(f"true string {true_index} is off the support")
    return int(partition.group[pos])


def posterior_update(prior: BeliefState, partition: Partition, ch: DMC, y: int) -> BeliefState:
    if prior.phase != "prior":
        raise InvalidStateError("posterior_update expects a prior belief")
    if len(partition.index) != len(prior.index):
        raise InvalidStateError("partition does not match the prior it is applied to")
    like = ch.W[:, y]
    denom = float(np.dot(like[: len(partition.group_mass)], partition.group_mass))
    if denom <= 0:
        raise InvalidStateError(f"output {y} has zero probability under the current partition")
    post = like[partition.group] * prior.prob / denom
    nz = post > 0
    return _clean(prior.index[nz], post[nz], prior.t, "posterior")


def candidate_masses(belief: BeliefState, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mass of every n-bit candidate that has support.

    Strings shorter than n carry no candidate mass; strings never exceed n.
    """
    full = belief.lengths == n
    return belief.index[full], belief.prob[full]


def check_stop(belief: BeliefState, n: int, epsilon: float) -> Optional[int]:
    """Heap number of the decoded n-bit string, or None to keep transmitting."""
    if belief.phase != "posterior":
        raise InvalidStateError("check_stop expects a posterior belief")
    idx, mass = candidate_masses(belief, n)
    if len(idx) == 0:
        return None
    k = int(np.argmax(mass))  # first maximum = smallest heap number
    return int(idx[k]) if mass[k] >= 1.0 - epsilon else None


class ExactSED:
    """Stateful exact codec: one instance per trial, shared by encoder and decoder."""

    name = "exact"

    def __init__(self, model: ArrivalModel, ch: DMC, epsilon: float, rule: str = "greedy",
                 caid=None, exact_cap: int = 20):
        if ch.input_size != 2:
            raise ValueError("the exact codec partitions for 2-input channels")
        if model.n > MAX_EXACT_N:
            raise ValueError(f"the exact codec supports n <= {MAX_EXACT_N}")
        if rule not in ("greedy", "exact"):
            raise ValueError(f"unknown partition rule {rule!r}")
        self.model = model
        self.ch = ch
        self.n = model.n
        self.epsilon = epsilon
        self.rule = rule
        self.exact_cap = exact_cap
        self.caid = np.asarray(caid if caid is not None else channel_info(ch).caid)
        self.t = 0
        self.belief: Optional[BeliefState] = None
        self.partition: Optional[Partition] = None

    def start_step(self) -> Partition:
        if self.t == 0:
            self.belief = initial_prior(self.model)
        else:
            self.belief = prior_update(self.belief, self.model)
        self.t += 1
        if self.rule == "greedy":
            self.partition = partition_greedy(self.belief, self.caid)
        else:
            self.partition = partition_exact(self.belief, self.caid, self.exact_cap)
        return self.partition

    def encode(self, true_index: int) -> int:
        return encode(self.partition, true_index)

    def observe(self, y: int) -> None:
        self.belief = posterior_update(self.belief, self.partition, self.ch, y)

    def decoded(self) -> Optional[int]:
        return check_stop(self.belief, self.n, self.epsilon)

    def entropy(self) -> float:
        return self.belief.entropy()

    def posterior_dict(self) -> dict[int, float]:
        return self.belief.as_dict()

    def trace_row(self, x: int, y: int) -> dict:
        return {
            "t": self.t,
            "phase": self.belief.phase,
            "support_size": len(self.belief.index),
            "mass_G0": float(self.partition.group_mass[0]),
            "x": x,
            "y": y,
            "max_posterior": self.belief.max_prob(),
        }
