"""Delay-free safety game solver: winning region and maximally permissive moves.

The winning region is the greatest fixpoint of

    W0 = S \\ unsafe,   W_{j+1} = { s in W_j | for all i exists a: T(s,i,a) in W_j }

computed by backward propagation: each (state, input) pair keeps a counter
of actions whose successor is still alive; when a state dies, the counters
of its predecessors drop, and a state with an exhausted input dies too.
Rounds are batch-vectorized over numpy, total work linear in the number of
transitions. Per-(state, input) allowed sets are stored as action bitsets.
"""

from __future__ import annotations

import numpy as np

__all__ = ["PermissiveStrategy", "solve_safety"]

_MAX_BITSET_ACTIONS = 64


class PermissiveStrategy:
    """Winning region plus, for every winning (state, input), the set of
    actions whose successor stays inside the winning region.

    Immutable after construction; safe to share across threads.
    """

    def __init__(self, winning_mask, allowed_bits, num_actions):
        winning_mask.setflags(write=False)
        allowed_bits.setflags(write=False)
        self.winning_mask = winning_mask          # (S,) bool
        self.allowed_bits = allowed_bits          # (S, I) uint64 action bitsets
        self.num_actions = num_actions

    @property
    def num_states(self):
        return self.winning_mask.shape[0]

    @property
    def num_inputs(self):
        return self.allowed_bits.shape[1]

    def winning_states(self):
        """Ids of winning states, ascending."""
        return np.flatnonzero(self.winning_mask)

    @property
    def winning(self):
        """The winning region as a frozenset of state ids."""
        return frozenset(int(s) for s in self.winning_states())

    def _check_state(self, s):
        if not (0 <= s < self.num_states):
            raise ValueError(f"state id {s} out of range [0, {self.num_states})")

    def is_winning(self, s):
        self._check_state(s)
        return bool(self.winning_mask[s])

    def allowed(self, s, i):
        """Actions allowed at (s, i); empty set on a non-winning state."""
        self._check_state(s)
        if not (0 <= i < self.num_inputs):
            raise ValueError(f"input id {i} out of range [0, {self.num_inputs})")
        bits = int(self.allowed_bits[s, i])
        return {a for a in range(self.num_actions) if bits >> a & 1}


def solve_safety(g):
    """Solve the safety game; returns the maximally permissive strategy.

    An empty winning region is a valid result. Runs in time linear in the
    number of transitions.
    """
    S, I, A = g.num_states, g.num_inputs, g.num_actions
    if A > _MAX_BITSET_ACTIONS:
        raise ValueError(f"action bitsets support up to {_MAX_BITSET_ACTIONS} "
                         f"actions, game has {A}")
    alive = np.ones(S, dtype=bool)
    if S == 0:
        return PermissiveStrategy(alive, np.zeros((0, I), dtype=np.uint64), A)

    entries, offsets = g.predecessor_csr()
    # remaining alive successors per (state, input), flat s*I + i
    counts = np.full(S * I, A, dtype=np.int32)

    dead = np.flatnonzero(g.unsafe_mask)
    alive[dead] = False
    while dead.size:
        starts = offsets[dead]
        lens = offsets[dead + 1] - starts
        total = int(lens.sum())
        # concatenate CSR slices: entries[starts[r] : starts[r]+lens[r]] for all r
        within = np.arange(total, dtype=np.int64) - np.repeat(np.cumsum(lens) - lens, lens)
        idx = np.repeat(starts, lens) + within
        si = entries[idx] // A  # flat (state, input) of each predecessor edge
        uniq, dec = np.unique(si, return_counts=True)
        counts[uniq] -= dec
        hit = uniq[counts[uniq] == 0]
        cand = np.unique(hit // I)
        dead = cand[alive[cand]]
        alive[dead] = False

    # allowed(s,i) = { a | T(s,i,a) in W } for winning s, as bitsets
    weights = (np.uint64(1) << np.arange(A, dtype=np.uint64))
    allowed = np.zeros((S, I), dtype=np.uint64)
    chunk = max(1, (1 << 22) // max(1, I * A))
    for lo in range(0, S, chunk):
        hi = min(S, lo + chunk)
        safe_succ = alive[g.transition[lo:hi]]
        allowed[lo:hi] = safe_succ.astype(np.uint64) @ weights
    allowed[~alive] = 0
    return PermissiveStrategy(alive, allowed, A)
