"""Extensional reference for the type-set codec.

Stores every string individually (heap number -> probability) and tracks set
membership with explicit labels instead of intervals.  Priors are computed
per string from the string's own parent, and single-parent repair is done by
inspecting the parent label of every member.  It applies the same grouping
rule and the same floating-point evaluation order as ``sed_typeset`` so the
two must agree bit for bit; it is only practical for small ``n``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

from .arrivals import ArrivalModel
from .channel import DMC, UnsupportedChannelError
from .sed_exact import MASS_FLOOR, NORM_TOL, InvalidStateError
from .sed_typeset import DRIFT_FAIL, split_count
from .strings import length_of


@dataclass
class _Label:
    created: int
    spawned: bool
    group: int = -1


class ExtensionalTypeSetSED:
    name = "typeset-reference"

    def __init__(self, model: ArrivalModel, ch: DMC, epsilon: float):
        if not ch.is_bsc():
            raise UnsupportedChannelError("reference codec needs a BSC")
        self.model = model
        self.p = ch.crossover
        self.n = model.n
        self.epsilon = epsilon
        self.t = 0
        self.prob: dict[int, float] = {}
        self.label: dict[int, int] = {}
        self.meta: dict[int, _Label] = {}
        self.phase = "prior"
        self.mass = (0.0, 0.0)
        self._next_label = 0

    # -- bookkeeping -----------------------------------------------------
    def _new_label(self, created: int, spawned: bool, group: int = -1) -> int:
        self._next_label += 1
        self.meta[self._next_label] = _Label(created, spawned, group)
        return self._next_label

    def classes(self) -> dict[int, list[int]]:
        out: dict[int, list[int]] = {}
        for s in sorted(self.prob):
            out.setdefault(self.label[s], []).append(s)
        return out

    def class_value(self, members: list[int]) -> float:
        vals = {self.prob[s] for s in members}
        if len(vals) != 1:
            raise InvalidStateError(f"t={self.t}: strings of one set disagree: {sorted(vals)}")
        return vals.pop()

    def _ordered_total(self, groups=None) -> float:
        """Sequential sum of class masses, classes taken by smallest member."""
        total = 0.0
        for lab, members in sorted(self.classes().items(), key=lambda kv: kv[1][0]):
            if groups is None or self.meta[lab].group in groups:
                total += len(members) * self.class_value(members)
        return total

    def _normalise(self) -> None:
        total = self._ordered_total()
        if abs(total - 1.0) > DRIFT_FAIL:
            raise InvalidStateError(f"t={self.t}: reference mass {total!r} drifted from 1")
        if abs(total - 1.0) > NORM_TOL:
            for s in self.prob:
                self.prob[s] = self.prob[s] / total

    def _repair(self) -> int:
        """Split every set whose members have parents in more than one set."""
        splits = 0
        changed = True
        while changed:
            changed = False
            for lab, members in self.classes().items():
                if length_of(members[0]) < 2:
                    continue
                runs: list[list[int]] = []
                prev = object()
                for s in members:
                    par = (s - 1) // 2
                    plab = self.label.get(par) if par in self.prob else None
                    if plab != prev:
                        runs.append([])
                        prev = plab
                    runs[-1].append(s)
                if len(runs) > 2:
                    raise InvalidStateError(f"t={self.t}: set has parents in {len(runs)} sets")
                if len(runs) == 2:
                    meta = self.meta[lab]
                    new = self._new_label(meta.created, meta.spawned, meta.group)
                    for s in runs[1]:
                        self.label[s] = new
                    splits += 1
                    changed = True
                    break
        return splits

    # -- codec steps -----------------------------------------------------
    def start_step(self) -> None:
        self.t += 1
        t = self.t
        if t == 1:
            for s in (1, 2):
                self.prob[s] = 0.5
                self.label[s] = self._new_label(1, False)
            q = 1.0
        else:
            if t <= self.n:
                for lab, members in list(self.classes().items()):
                    meta = self.meta[lab]
                    if meta.created == t - 1 and not meta.spawned:
                        meta.spawned = True
                        child = self._new_label(t, False)
                        for s in members:
                            for c in (2 * s + 1, 2 * s + 2):
                                if c in self.prob:
                                    raise InvalidStateError(f"string {c} spawned twice")
                                self.label[c] = child
                                self.prob[c] = 0.0
            q = self.model.q_at(t)
            old = dict(self.prob)
            new_strings = {s for s in self.prob if self.meta[self.label[s]].created == t}
            prior = {}
            for s in self.prob:
                ell = length_of(s)
                stay = 1.0 if ell >= self.n else 1.0 - q
                grow = q / 2.0
                r_self = 0.0 if s in new_strings else old[s]
                r_par = old.get((s - 1) // 2, 0.0) if ell >= 2 else 0.0
                g = stay * r_self + grow * r_par
                prior[s] = 0.0 if g < MASS_FLOOR else g
            self.prob = {s: g for s, g in prior.items() if g > 0}
            self.label = {s: self.label[s] for s in self.prob}
            self._normalise()
        self.phase = "prior"
        self._partition(q)

    def _partition(self, q: float) -> None:
        classes = self.classes()
        for lab in self.meta:
            self.meta[lab].group = -1
        keyed = sorted(
            classes.items(),
            key=lambda kv: (-self.class_value(kv[1]), length_of(kv[1][0]), kv[1][0]),
        )
        cum = 0.0
        k = len(keyed) - 1
        for i, (lab, members) in enumerate(keyed):
            cum += len(members) * self.class_value(members)
            if cum > 0.5:
                k = i
                break
        star_lab, star = keyed[k]
        gamma = self.class_value(star)
        n_star = split_count(cum, gamma, len(star))
        for i, (lab, _) in enumerate(keyed):
            self.meta[lab].group = 0 if i < k else 1
        split = 0 < n_star < len(star)
        if split:
            hi = self._new_label(self.meta[star_lab].created, self.meta[star_lab].spawned, 0)
            for s in star[n_star:]:
                self.label[s] = hi
            self.meta[star_lab].group = 1
            self._repair()
        else:
            self.meta[star_lab].group = 1 if n_star == len(star) else 0
        m0 = self._ordered_total({0})
        m1 = self._ordered_total({1})
        if m0 < m1:
            for lab in self.meta:
                if self.meta[lab].group >= 0:
                    self.meta[lab].group = 1 - self.meta[lab].group
            m0, m1 = m1, m0
        self.mass = (m0, m1)
        if self.t == 1:
            self.event = not split
        else:
            self.event = split and length_of(star[0]) == min(math.floor(q * self.t + 1e-9), self.n)

    def group_of(self, s: int) -> int:
        return self.meta[self.label[s]].group

    def encode(self, true_index: int) -> int:
        if true_index not in self.prob:
            raise InvalidStateError(f"true string {true_index} is off the support")
        return self.group_of(true_index)

    def observe(self, y: int) -> None:
        p = self.p
        W = ((1.0 - p, p), (p, 1.0 - p))
        denom = W[0][y] * self.mass[0] + W[1][y] * self.mass[1]
        post = {}
        for s, g in self.prob.items():
            r = W[self.group_of(s)][y] * g / denom
            post[s] = 0.0 if r < MASS_FLOOR else r
        self.prob = post
        self.phase = "posterior"
        self._normalise()

    def decoded(self) -> Optional[int]:
        best_lab, best_val, best_members = None, -1.0, None
        for lab, members in sorted(self.classes().items(), key=lambda kv: kv[1][0]):
            v = self.class_value(members)
            if v > best_val:
                best_lab, best_val, best_members = lab, v, members
        if (best_val >= 1.0 - self.epsilon and len(best_members) == 1
                and length_of(best_members[0]) == self.n):
            return best_members[0]
        return None

    def posterior_dict(self) -> dict[int, float]:
        return {s: v for s, v in self.prob.items() if v > 0 or self.phase == "prior"}

    def partition_sets(self) -> list[tuple[int, int, int]]:
        """(first, last, group) for every set, sorted by first member."""
        out = []
        for lab, members in self.classes().items():
            out.append((members[0], members[-1], self.meta[lab].group))
        return sorted(out)

    def entropy(self) -> float:
        return -sum(v * math.log2(v) for v in self.prob.values() if v > 0)
