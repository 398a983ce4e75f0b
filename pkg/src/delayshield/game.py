"""Explicit-state two-player safety game: data model, text format, validation.

A game has dense integer ids for states, environment inputs and agent
actions. The transition function is total and stored as a dense array
``transition[s, i, a] -> s'``. Unsafe states keep their outgoing
transitions; solvers treat them as losing sinks.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "GameGraph",
    "Observation",
    "GameFormatError",
    "parse_game",
    "serialize_game",
    "validate",
]


class GameFormatError(ValueError):
    """Raised on malformed game documents. Carries line/column when known."""

    def __init__(self, message, line=None, column=None):
        loc = ""
        if line is not None:
            loc = f"line {line}" + (f", column {column}" if column is not None else "")
            message = f"{loc}: {message}"
        super().__init__(message)
        self.line = line
        self.column = column


@dataclass(frozen=True)
class Observation:
    """A delayed observation: the state and the environment input taken there."""

    state: int
    input: int


class GameGraph:
    """Explicit two-player safety game.

    Parameters
    ----------
    num_states, num_inputs, num_actions:
        Sizes of the dense id spaces.
    transition:
        Integer array of shape (num_states, num_inputs, num_actions); entry
        (s, i, a) is the successor state id.
    unsafe:
        Iterable of losing state ids (deduplicated into a frozenset).
    state_labels / input_labels / action_labels:
        Optional {id: name} maps, purely cosmetic.
    """

    def __init__(self, num_states, num_inputs, num_actions, transition, unsafe,
                 state_labels=None, input_labels=None, action_labels=None):
        self.num_states = int(num_states)
        self.num_inputs = int(num_inputs)
        self.num_actions = int(num_actions)
        t = np.asarray(transition, dtype=np.int32)
        if t.shape != (self.num_states, self.num_inputs, self.num_actions):
            raise ValueError(
                f"transition shape {t.shape} does not match "
                f"({self.num_states}, {self.num_inputs}, {self.num_actions})")
        t.setflags(write=False)
        self.transition = t
        self.unsafe = frozenset(int(u) for u in unsafe)
        self.state_labels = dict(state_labels) if state_labels else {}
        self.input_labels = dict(input_labels) if input_labels else {}
        self.action_labels = dict(action_labels) if action_labels else {}
        self._unsafe_mask = None
        self._pred_csr = None

    def successor(self, s, i, a):
        return int(self.transition[s, i, a])

    @property
    def unsafe_mask(self):
        """Boolean mask over state ids, True for unsafe states (cached)."""
        if self._unsafe_mask is None:
            m = np.zeros(self.num_states, dtype=bool)
            if self.unsafe:
                m[np.fromiter(self.unsafe, dtype=np.int64)] = True
            m.setflags(write=False)
            self._unsafe_mask = m
        return self._unsafe_mask

    def predecessor_csr(self):
        """CSR index of the flat transition entries grouped by successor state.

        Returns (entries, offsets): for a target state x, the flat entry ids
        ``entries[offsets[x]:offsets[x+1]]`` are exactly the e = (s*I + i)*A + a
        with transition.flat[e] == x. Built once and cached.
        """
        if self._pred_csr is None:
            flat = self.transition.ravel()
            order = np.argsort(flat, kind="stable").astype(np.int64)
            counts = np.bincount(flat, minlength=self.num_states)
            offsets = np.zeros(self.num_states + 1, dtype=np.int64)
            np.cumsum(counts, out=offsets[1:])
            self._pred_csr = (order, offsets)
        return self._pred_csr

    def __eq__(self, other):
        if not isinstance(other, GameGraph):
            return NotImplemented
        return (self.num_states == other.num_states
                and self.num_inputs == other.num_inputs
                and self.num_actions == other.num_actions
                and self.unsafe == other.unsafe
                and np.array_equal(self.transition, other.transition)
                and self.state_labels == other.state_labels
                and self.input_labels == other.input_labels
                and self.action_labels == other.action_labels)

    def __repr__(self):
        return (f"GameGraph(states={self.num_states}, inputs={self.num_inputs}, "
                f"actions={self.num_actions}, unsafe={len(self.unsafe)})")

    def digest(self):
        """Hex SHA-256 of the canonical binary form of the game.

        Covers sizes, the sorted unsafe set and the full transition table
        (labels are cosmetic and excluded). Used to fingerprint strategy
        files; cheap even for million-state games.
        """
        h = hashlib.sha256()
        h.update(b"delayshield-game-v1")
        h.update(struct.pack("<QQQ", self.num_states, self.num_inputs,
                             self.num_actions))
        h.update(np.asarray(sorted(self.unsafe), dtype=np.int64).tobytes())
        h.update(np.ascontiguousarray(self.transition, dtype=np.int32).tobytes())
        return h.hexdigest()


def validate(g):
    """Check the GameGraph invariants; returns a list of violation strings.

    An empty list means the game is well formed. Violations are data, not
    exceptions: each names the invariant and the offending ids.
    """
    out = []
    if g.num_inputs < 1:
        out.append(f"num_inputs must be >= 1, got {g.num_inputs}")
    if g.num_actions < 1:
        out.append(f"num_actions must be >= 1, got {g.num_actions}")
    shape = (g.num_states, g.num_inputs, g.num_actions)
    if g.transition.shape != shape:
        out.append(f"transition not total: shape {g.transition.shape} != {shape}")
        return out
    if g.num_states and g.transition.size:
        bad = (g.transition < 0) | (g.transition >= g.num_states)
        if bad.any():
            s, i, a = (int(v) for v in np.argwhere(bad)[0])
            out.append(
                f"successor out of range at (s={s}, i={i}, a={a}): "
                f"{int(g.transition[s, i, a])} not in [0, {g.num_states})")
    for u in sorted(g.unsafe):
        if not (0 <= u < g.num_states):
            out.append(f"unsafe id out of range: {u} not in [0, {g.num_states})")
    for kind, labels in (("state", g.state_labels), ("input", g.input_labels),
                         ("action", g.action_labels)):
        n = {"state": g.num_states, "input": g.num_inputs,
             "action": g.num_actions}[kind]
        for k in labels:
            if not (0 <= k < n):
                out.append(f"{kind} label id out of range: {k} not in [0, {n})")
    return out


def _tokenize(raw_line):
    # strip comments ('#' to end of line), then split; keep column offsets
    line = raw_line.split("#", 1)[0]
    tokens = []
    col = 0
    for tok in line.split():
        col = line.index(tok, col)
        tokens.append((tok, col + 1))
        col += len(tok)
    return tokens


def _parse_int(tok, col, lineno, what):
    try:
        return int(tok)
    except ValueError:
        raise GameFormatError(f"expected integer {what}, got {tok!r}",
                              lineno, col) from None


def parse_game(text):
    """Parse a game-format document into a validated GameGraph.

    Grammar (UTF-8, line oriented, '#' starts a comment)::

        game <num_states> <num_inputs> <num_actions>
        unsafe <id> <id> ...          # possibly empty list
        t <s> <i> <a> <s'>            # one line per transition
        sl <id> <name>                # optional labels (also il, al)

    Raises GameFormatError on syntax errors, ids out of range, duplicate
    transitions, or a non-total transition relation.
    """
    header = None
    unsafe = None
    transitions = {}
    labels = {"sl": {}, "il": {}, "al": {}}

    for lineno, raw in enumerate(text.splitlines(), start=1):
        tokens = _tokenize(raw)
        if not tokens:
            continue
        key, col0 = tokens[0]
        args = tokens[1:]
        if key == "game":
            if header is not None:
                raise GameFormatError("duplicate 'game' line", lineno, col0)
            if len(args) != 3:
                raise GameFormatError(
                    f"'game' needs 3 integers, got {len(args)}", lineno, col0)
            ns, ni, na = (_parse_int(t, c, lineno, "size") for t, c in args)
            if ni < 1 or na < 1:
                raise GameFormatError(
                    f"need num_inputs >= 1 and num_actions >= 1, got {ni} and {na}",
                    lineno, col0)
            header = (ns, ni, na)
        elif key == "unsafe":
            if header is None:
                raise GameFormatError("'unsafe' before 'game' line", lineno, col0)
            if unsafe is not None:
                raise GameFormatError("duplicate 'unsafe' line", lineno, col0)
            unsafe = set()
            for tok, col in args:
                u = _parse_int(tok, col, lineno, "unsafe id")
                if not (0 <= u < header[0]):
                    raise GameFormatError(
                        f"unsafe id {u} out of range [0, {header[0]})", lineno, col)
                unsafe.add(u)
        elif key == "t":
            if header is None:
                raise GameFormatError("'t' before 'game' line", lineno, col0)
            if len(args) != 4:
                raise GameFormatError(
                    f"'t' needs 4 integers, got {len(args)}", lineno, col0)
            s, i, a, succ = (_parse_int(t, c, lineno, "id") for t, c in args)
            ns, ni, na = header
            for val, hi, what, col in ((s, ns, "state", args[0][1]),
                                       (i, ni, "input", args[1][1]),
                                       (a, na, "action", args[2][1]),
                                       (succ, ns, "successor", args[3][1])):
                if not (0 <= val < hi):
                    raise GameFormatError(
                        f"{what} id {val} out of range [0, {hi})", lineno, col)
            if (s, i, a) in transitions:
                raise GameFormatError(
                    f"duplicate transition for (s={s}, i={i}, a={a})", lineno, col0)
            transitions[(s, i, a)] = succ
        elif key in ("sl", "il", "al"):
            if header is None:
                raise GameFormatError(f"'{key}' before 'game' line", lineno, col0)
            if not args:
                raise GameFormatError(f"'{key}' needs an id and a name", lineno, col0)
            idx = _parse_int(args[0][0], args[0][1], lineno, "label id")
            hi = {"sl": header[0], "il": header[1], "al": header[2]}[key]
            if not (0 <= idx < hi):
                raise GameFormatError(
                    f"label id {idx} out of range [0, {hi})", lineno, args[0][1])
            name = " ".join(t for t, _ in args[1:])
            if not name:
                raise GameFormatError(f"'{key}' needs a name", lineno, col0)
            labels[key][idx] = name
        else:
            raise GameFormatError(f"unknown directive {key!r}", lineno, col0)

    if header is None:
        raise GameFormatError("missing 'game' line")
    ns, ni, na = header
    if unsafe is None:
        raise GameFormatError("missing 'unsafe' line")

    table = np.full((ns, ni, na), -1, dtype=np.int64)
    for (s, i, a), succ in transitions.items():
        table[s, i, a] = succ
    if ns and (table < 0).any():
        s, i, a = (int(v) for v in np.argwhere(table < 0)[0])
        missing = int((table < 0).sum())
        raise GameFormatError(
            f"non-total transition relation: missing (s={s}, i={i}, a={a})"
            + (f" and {missing - 1} more" if missing > 1 else ""))
    return GameGraph(ns, ni, na, table, unsafe,
                     state_labels=labels["sl"], input_labels=labels["il"],
                     action_labels=labels["al"])


def serialize_game(g):
    """Render a GameGraph as its canonical game-format document.

    Transitions are ordered lexicographically by (s, i, a), unsafe ids and
    label ids ascending, so serialization is deterministic and
    parse(serialize(g)) == g.
    """
    lines = [f"game {g.num_states} {g.num_inputs} {g.num_actions}"]
    lines.append(("unsafe " + " ".join(str(u) for u in sorted(g.unsafe))).rstrip())
    flat = g.transition.ravel()
    ia = g.num_inputs * g.num_actions
    for e in range(flat.size):
        s, rem = divmod(e, ia)
        i, a = divmod(rem, g.num_actions)
        lines.append(f"t {s} {i} {a} {int(flat[e])}")
    for key, labels in (("sl", g.state_labels), ("il", g.input_labels),
                        ("al", g.action_labels)):
        for idx in sorted(labels):
            lines.append(f"{key} {idx} {labels[idx]}")
    return "\n".join(lines) + "\n"
