"""Instantaneous type-set SED codec for binary symmetric channels.

A type set is a run of lexicographically consecutive strings of one length
that share a prior, a posterior and a parent set.  With heap numbering a set
is the integer interval ``[a, b]``; its child set is ``[2a+1, 2b+2]``.

The live sets are kept column-wise in numpy arrays, one row per set, with
rows always in ascending order of interval start (which is heap order, so
shorter strings come first).  A step costs a handful of vectorised passes plus
one sort by prior.  ``parent`` holds the row of the parent set, or -1.

Heap numbers of n-bit strings need n + 1 bits, so for n > 60 the interval
endpoints are held as Python integers (object arrays) instead of int64.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .arrivals import ArrivalModel
from .channel import DMC, UnsupportedChannelError
from .sed_exact import MASS_FLOOR, NORM_TOL, BeliefState, InvalidStateError

DRIFT_FAIL = 1e-6

_COLUMNS = ("a", "b", "count", "strlen", "gamma", "rho", "parent", "created", "group", "spawned", "sid")
WIDE_ABOVE = 60  # longest message length whose heap numbers fit comfortably in int64


def index_dtype(n: int):
    return np.int64 if n <= WIDE_ABOVE else object


@dataclass(frozen=True)
class TypeSet:
    """Read-only view of one row of a :class:`TypeSetState`."""

    id: int
    interval: tuple[int, int]
    strlen: int
    gamma: float
    rho: float
    parent_id: Optional[int]
    created_at: int
    group: int  # 0, 1, or -1 when unassigned
    spawned: bool

    @property
    def cardinality(self) -> int:
        return self.interval[1] - self.interval[0] + 1


@dataclass
class CensusRecord:
    t: int
    n_before: int
    n_after: int
    event: bool
    split_count: int


@dataclass
class TypeSetState:
    t: int
    a: np.ndarray
    b: np.ndarray
    count: np.ndarray  # float cardinality b - a + 1, used for mass sums
    strlen: np.ndarray
    gamma: np.ndarray
    rho: np.ndarray
    parent: np.ndarray
    created: np.ndarray
    group: np.ndarray
    spawned: np.ndarray
    sid: np.ndarray
    next_id: int
    phase: str = "prior"
    mass: np.ndarray = field(default_factory=lambda: np.zeros(2))
    census: list = field(default_factory=list)
    # scratch for the census of the step in progress
    _n_before: int = 0

    @property
    def size(self) -> int:
        return len(self.a)

    @property
    def card(self) -> np.ndarray:
        """Exact cardinalities (same dtype as the endpoints)."""
        return self.b - self.a + 1

    def sets(self) -> list[TypeSet]:
        return [
            TypeSet(
                id=int(self.sid[i]),
                interval=(int(self.a[i]), int(self.b[i])),
                strlen=int(self.strlen[i]),
                gamma=float(self.gamma[i]),
                rho=float(self.rho[i]),
                parent_id=int(self.sid[self.parent[i]]) if self.parent[i] >= 0 else None,
                created_at=int(self.created[i]),
                group=int(self.group[i]),
                spawned=bool(self.spawned[i]),
            )
            for i in range(self.size)
        ]

    def _append_rows(self, **cols) -> np.ndarray:
        count = len(cols["a"])
        rows = np.arange(self.size, self.size + count)
        cols.setdefault("sid", np.arange(self.next_id, self.next_id + count))
        cols["a"] = np.asarray(cols["a"], dtype=self.a.dtype)
        cols["b"] = np.asarray(cols["b"], dtype=self.b.dtype)
        cols["count"] = (cols["b"] - cols["a"] + 1).astype(float)
        self.next_id += count
        for name in _COLUMNS:
            setattr(self, name, np.concatenate((getattr(self, name), np.asarray(cols[name], dtype=getattr(self, name).dtype))))
        return rows

    def _keep(self, keep: np.ndarray) -> None:
        if keep.all():
            return
        newpos = np.cumsum(keep) - 1
        par = self.parent
        alive_parent = (par >= 0) & keep[np.maximum(par, 0)]
        self.parent = np.where(alive_parent, newpos[np.maximum(par, 0)], -1)
        for name in _COLUMNS:
            setattr(self, name, getattr(self, name)[keep])


def _sequential_total(values: np.ndarray) -> float:
    """Left-to-right sum (reproducible by a plain loop, unlike np.sum)."""
    if len(values) == 0:
        return 0.0
    return float(np.cumsum(values)[-1])


def _restore_order(state: TypeSetState, first_new: int) -> None:
    """Merge rows appended from ``first_new`` on back into interval order."""
    if first_new >= state.size:
        return
    new = first_new + np.argsort(state.a[first_new:], kind="stable")
    pos = np.searchsorted(state.a[:first_new], state.a[new])
    perm = np.insert(np.arange(first_new), pos, new)
    inv = np.empty_like(perm)
    inv[perm] = np.arange(len(perm))
    par = state.parent[perm]
    state.parent = np.where(par >= 0, inv[np.maximum(par, 0)], -1)
    for name in _COLUMNS:
        if name != "parent":
            setattr(state, name, getattr(state, name)[perm])


def init(n: int = 0) -> TypeSetState:
    """The two length-1 sets {0} and {1}, each with prior 1/2."""
    dt = index_dtype(n)
    st = TypeSetState(
        t=1,
        a=np.array([1, 2], dtype=dt),
        b=np.array([1, 2], dtype=dt),
        count=np.ones(2),
        strlen=np.array([1, 1], dtype=np.int64),
        gamma=np.array([0.5, 0.5]),
        rho=np.zeros(2),
        parent=np.array([-1, -1], dtype=np.int64),
        created=np.array([1, 1], dtype=np.int64),
        group=np.array([-1, -1], dtype=np.int8),
        spawned=np.zeros(2, dtype=bool),
        sid=np.array([1, 2], dtype=np.int64),
        next_id=3,
    )
    st._n_before = 2
    return st


def spawn_children(state: TypeSetState, t: int, n: int) -> TypeSetState:
    """Sets created at t-1 each spawn the set of their one-bit extensions."""
    if t > n:
        return state
    # children are longer than every live set, so appending keeps interval order
    src = np.flatnonzero((state.created == t - 1) & ~state.spawned)
    if len(src):
        state.spawned[src] = True
        state._append_rows(
            a=2 * state.a[src] + 1,
            b=2 * state.b[src] + 2,
            strlen=state.strlen[src] + 1,
            gamma=np.zeros(len(src)),
            rho=np.zeros(len(src)),
            parent=src,
            created=np.full(len(src), t),
            group=np.full(len(src), -1),
            spawned=np.zeros(len(src), dtype=bool),
        )
    return state


def _mixture_weights(m: ArrivalModel, strlen: np.ndarray, t: int) -> tuple[np.ndarray, np.ndarray]:
    q = m.q_at(t)
    full = strlen >= m.n
    stay = np.where(full, 1.0, 1.0 - q)
    grow = np.full(len(strlen), q / 2.0)  # parents are always shorter than n
    return stay, grow


def update_priors(state: TypeSetState, m: ArrivalModel, t: int) -> TypeSetState:
    """Per-string prior from own and parent posteriors at t-1; drops empty sets."""
    stay, grow = _mixture_weights(m, state.strlen, t)
    r_self = np.where(state.created == t, 0.0, state.rho)
    has_parent = state.parent >= 0
    r_par = np.where(has_parent, state.rho[np.maximum(state.parent, 0)], 0.0)
    gamma = stay * r_self + grow * r_par
    gamma[gamma < MASS_FLOOR] = 0.0
    state.gamma = gamma
    state.group[:] = -1
    state.t = t
    state.phase = "prior"
    state._keep(gamma > 0)
    _normalise(state, "gamma")
    return state


def _normalise(state: TypeSetState, column: str) -> None:
    values = getattr(state, column)
    total = _sequential_total(state.count * values)
    if abs(total - 1.0) > DRIFT_FAIL:
        raise InvalidStateError(f"t={state.t}: type-set {column} mass {total!r} drifted from 1")
    if abs(total - 1.0) > NORM_TOL:
        setattr(state, column, values / total)


def _sort_order(state: TypeSetState) -> np.ndarray:
    """Descending prior; ties to shorter strings, then smaller interval start.

    Rows are in heap order, so a stable sort on the prior alone suffices.
    """
    return np.argsort(-state.gamma, kind="stable")


def split_count(m0: float, gamma: float, size: int) -> int:
    """Number of strings of the boundary set to move from G_0 to G_1."""
    excess = (m0 - 0.5) / gamma
    n1 = min(max(math.floor(excess), 0), size)
    n2 = min(max(math.ceil(excess), 0), size)
    if abs(2 * m0 - 1 - 2 * n1 * gamma) <= abs(2 * m0 - 1 - 2 * n2 * gamma):
        return n1
    return n2


def _split_row(state: TypeSetState, row: int, cut) -> tuple[int, int]:
    """Split ``row`` into [a, cut] (kept in place) and [cut+1, b] (new row).

    Children are re-pointed, and the one child set whose strings straddle the
    cut, if any, is split in turn, down the tree.  By the single-parent
    property a straddler can only be a child of the set being cut.  New rows
    are appended in one batch.  Returns (row of the first upper half, splits).
    """
    base = state.size
    added = {name: [] for name in _COLUMNS if name not in ("count", "sid")}
    upper_parent = int(state.parent[row])
    while True:
        new = base + len(added["a"])
        for name in added:
            added[name].append(getattr(state, name)[row])
        added["a"][-1] = cut + 1
        added["parent"][-1] = upper_parent
        state.b[row] = cut
        state.count[row] = float(cut - state.a[row] + 1)
        lo_last, hi_first = 2 * cut + 2, 2 * cut + 3
        kids = np.flatnonzero(state.parent == row)
        if len(kids) == 0:
            break
        ka, kb = state.a[kids], state.b[kids]
        state.parent[kids[ka >= hi_first]] = new
        straddle = kids[(ka <= lo_last) & (kb >= hi_first)]
        if len(straddle) > 1:
            raise InvalidStateError(f"t={state.t}: {len(straddle)} child sets straddle one cut")
        if len(straddle) == 0:
            break
        row, cut, upper_parent = int(straddle[0]), lo_last, new
    state._append_rows(**added)
    return base, len(added["a"])


def _lexicographic_total(state: TypeSetState, mask: np.ndarray) -> float:
    return _sequential_total((state.count * state.gamma)[mask])


def partition_and_split(state: TypeSetState, n: int, q: float = 1.0) -> TypeSetState:
    """Type-set SED rule: greedy fill of G_0, one boundary split, swap, repair."""
    order = _sort_order(state)
    cum = np.cumsum(state.count[order] * state.gamma[order])
    k = min(int(np.searchsorted(cum, 0.5, side="right")), len(order) - 1)
    star = int(order[k])
    star_len = int(state.strlen[star])
    size = int(state.b[star] - state.a[star] + 1)
    n_star = split_count(float(cum[k]), float(state.gamma[star]), size)

    state.group[order[:k]] = 0
    state.group[order[k + 1:]] = 1
    split = 0 < n_star < size
    splits = 0
    if split:
        first_new = state.size
        state.group[star] = 1  # prefix [a, a+n*-1] moves to G_1
        hi, splits = _split_row(state, star, state.a[star] + n_star - 1)
        state.group[hi] = 0
        _restore_order(state, first_new)
    else:
        state.group[star] = 1 if n_star == size else 0

    m0 = _lexicographic_total(state, state.group == 0)
    m1 = _lexicographic_total(state, state.group == 1)
    if m0 < m1:
        state.group = (1 - state.group).astype(np.int8)
        m0, m1 = m1, m0
    state.mass = np.array([m0, m1])

    if state.t == 1:
        event = not split
    else:
        event = split and star_len == min(math.floor(q * state.t + 1e-9), n)
    state.census.append(CensusRecord(state.t, state._n_before, state.size, event, splits))
    return state


def posterior_update_ts(state: TypeSetState, p: float, y: int) -> TypeSetState:
    W = np.array([[1.0 - p, p], [p, 1.0 - p]])
    like = W[:, y]
    denom = like[0] * state.mass[0] + like[1] * state.mass[1]
    rho = like[state.group] * state.gamma / denom
    rho[rho < MASS_FLOOR] = 0.0
    state.rho = rho
    state.phase = "posterior"
    _normalise(state, "rho")
    return state


def check_stop_ts(state: TypeSetState, n: int, epsilon: float) -> Optional[int]:
    """Heap number of the decoded string, or None."""
    top = state.rho.max()
    i = int(np.flatnonzero(state.rho == top)[0])  # rows are in heap order
    if top >= 1.0 - epsilon and state.a[i] == state.b[i] and state.strlen[i] == n:
        return int(state.a[i])
    return None


def expand_to_strings(state: TypeSetState) -> BeliefState:
    """Per-string belief (prior or posterior, by phase) spelled out from the sets."""
    values = state.gamma if state.phase == "prior" else state.rho
    if state.size == 0:
        return BeliefState(state.t, np.zeros(0, np.int64), np.zeros(0), state.phase)
    index = np.concatenate([np.arange(int(a), int(b) + 1, dtype=np.int64) for a, b in zip(state.a, state.b)])
    prob = np.repeat(values, state.card.astype(np.int64))
    return BeliefState(state.t, index, prob, state.phase)


def entropy_ts(state: TypeSetState) -> float:
    """Shannon entropy (bits) of the posterior over strings."""
    r = state.rho
    nz = r > 0
    return float(-np.sum(state.count[nz] * r[nz] * np.log2(r[nz])))


def census(state: TypeSetState) -> dict[str, np.ndarray]:
    """Per-step census arrays, indexed from t = 1."""
    recs = state.census
    return {
        "t": np.array([r.t for r in recs], dtype=np.int64),
        "n_before": np.array([r.n_before for r in recs], dtype=np.int64),
        "n_after": np.array([r.n_after for r in recs], dtype=np.int64),
        "event": np.array([r.event for r in recs], dtype=bool),
        "split_count": np.array([r.split_count for r in recs], dtype=np.int64),
    }


class TypeSetSED:
    """Stateful type-set codec with the same step interface as ``ExactSED``."""

    name = "typeset"

    def __init__(self, model: ArrivalModel, ch: DMC, epsilon: float):
        if not ch.is_bsc():
            raise UnsupportedChannelError("the type-set codec needs a binary symmetric channel")
        if not model.instantaneous:
            raise ValueError("the type-set codec streams over periodic or Bernoulli arrivals")
        self.model = model
        self.ch = ch
        self.p = ch.crossover
        self.n = model.n
        self.epsilon = epsilon
        self.t = 0
        self.state: Optional[TypeSetState] = None

    def start_step(self) -> TypeSetState:
        self.t += 1
        t = self.t
        if t == 1:
            self.state = init(self.n)
            q = 1.0
        else:
            st = spawn_children(self.state, t, self.n)
            st._n_before = st.size
            update_priors(st, self.model, t)
            q = self.model.q_at(t)
        partition_and_split(self.state, self.n, q)
        return self.state

    def encode(self, true_index: int) -> int:
        st = self.state
        rows = np.flatnonzero((st.a <= true_index) & (st.b >= true_index))
        if len(rows) != 1:
            raise InvalidStateError(f"true string {true_index} lies in {len(rows)} type sets")
        return int(st.group[rows[0]])

    def observe(self, y: int) -> None:
        posterior_update_ts(self.state, self.p, y)

    def decoded(self) -> Optional[int]:
        return check_stop_ts(self.state, self.n, self.epsilon)

    def entropy(self) -> float:
        return entropy_ts(self.state)

    def posterior_dict(self) -> dict[int, float]:
        return expand_to_strings(self.state).as_dict()

    def trace_row(self, x: int, y: int) -> dict:
        st = self.state
        rec = st.census[-1]
        return {
            "t": st.t, "phase": st.phase, "support_size": int(st.card.sum()),
            "mass_G0": float(st.mass[0]), "x": x, "y": y, "max_posterior": float(st.rho.max()),
            "num_sets": st.size, "split_depth": rec.split_count,
        }
