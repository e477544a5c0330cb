"""Byte-level DFA construction from the regex AST.

Every AST node is compiled to a minimized, trimmed DFA bottom-up; composite
nodes embed their children's DFAs into a small epsilon-NFA which is then
determinized and minimized again.  Compiling bottom-up keeps the repeated
suffixes produced by the optional-member chaining from multiplying across
nesting levels.
"""

from __future__ import annotations

import random
from collections import deque
from dataclasses import dataclass
from functools import cached_property
from typing import Iterator

import numpy as np

from ..errors import StateBlowup
from .regex import Alt, ByteClass, Concat, Group, Literal, Node, Repeat

DEFAULT_STATE_CAP = 1 << 20

Edges = tuple[tuple[int, int], ...]  # (byte mask, target); masks are disjoint


def _mask_bytes(mask: int) -> Iterator[int]:
    while mask:
        low = mask & -mask
        yield low.bit_length() - 1
        mask ^= low


@dataclass(frozen=True, eq=False)
class Dfa:
    edges: tuple[Edges, ...]
    accepting: frozenset[int]
    start: int = 0

    @property
    def num_states(self) -> int:
        return len(self.edges)

    @property
    def is_empty(self) -> bool:
        return not self.accepting

    def transitions(self, state: int) -> dict[int, int]:
        """Byte -> successor for one state (absent byte = reject)."""
        return {b: target for mask, target in self.edges[state] for b in _mask_bytes(mask)}

    @cached_property
    def table(self) -> np.ndarray:
        """Dense (num_states + 1, 256) successor table; row/value num_states is the dead state."""
        n = self.num_states
        table = np.full((n + 1, 256), n, dtype=np.int32)
        for s, edges in enumerate(self.edges):
            row = table[s]
            for mask, target in edges:
                for b in _mask_bytes(mask):
                    row[b] = target
        return table

    @property
    def dead(self) -> int:
        return self.num_states

    def step(self, state: int, byte: int) -> int | None:
        nxt = int(self.table[state, byte])
        return None if nxt == self.num_states else nxt

    def run(self, data: bytes, state: int | None = None) -> int | None:
        s = self.start if state is None else state
        table = self.table
        dead = self.num_states
        for b in data:
            s = int(table[s, b])
            if s == dead:
                return None
        return s

    def accepts(self, data: bytes) -> bool:
        s = self.run(data)
        return s is not None and s in self.accepting

    @cached_property
    def distance_to_accept(self) -> list[int]:
        """Shortest number of bytes from each state to an accepting state."""
        n = self.num_states
        reverse: list[list[int]] = [[] for _ in range(n)]
        for s, edges in enumerate(self.edges):
            for _, t in edges:
                reverse[t].append(s)
        dist = [-1] * n
        queue = deque()
        for s in self.accepting:
            dist[s] = 0
            queue.append(s)
        while queue:
            t = queue.popleft()
            for s in reverse[t]:
                if dist[s] < 0:
                    dist[s] = dist[t] + 1
                    queue.append(s)
        return dist


# ---------------------------------------------------------------------------
# construction helpers


class _Nfa:
    def __init__(self) -> None:
        self.edges: list[list[tuple[int, int]]] = []
        self.eps: list[list[int]] = []

    def add(self) -> int:
        self.edges.append([])
        self.eps.append([])
        return len(self.edges) - 1

    def embed(self, dfa: Dfa) -> tuple[int, list[int]]:
        base = len(self.edges)
        for edges in dfa.edges:
            self.edges.append([(m, t + base) for m, t in edges])
            self.eps.append([])
        return dfa.start + base, [s + base for s in sorted(dfa.accepting)]


def _split(moves: list[tuple[int, int]]) -> list[list]:
    """Partition overlapping (mask, target) moves into disjoint [mask, targets] parts."""
    parts: list[list] = []
    for mask, target in moves:
        rest = mask
        new_parts = []
        for part in parts:
            pm, targets = part
            inter = pm & mask
            if inter:
                if inter != pm:
                    new_parts.append([pm & ~mask, set(targets)])
                    part[0] = inter
                targets.add(target)
                rest &= ~pm
        parts.extend(new_parts)
        if rest:
            parts.append([rest, {target}])
    return parts


def _determinize(nfa: _Nfa, start: int, accepts: set[int], cap: int) -> Dfa:
    eps = nfa.eps

    def closure(states) -> frozenset[int]:
        seen = set(states)
        stack = list(states)
        while stack:
            s = stack.pop()
            for t in eps[s]:
                if t not in seen:
                    seen.add(t)
                    stack.append(t)
        return frozenset(seen)

    first = closure([start])
    ids = {first: 0}
    order = [first]
    out_edges: list[Edges] = []
    i = 0
    while i < len(order):
        current = order[i]
        i += 1
        moves = [move for s in current for move in nfa.edges[s]]
        by_target: dict[int, int] = {}
        for mask, targets in _split(moves):
            key = closure(targets)
            sid = ids.get(key)
            if sid is None:
                sid = ids[key] = len(order)
                order.append(key)
                if len(order) > cap:
                    raise StateBlowup(f"automaton exceeds the state cap of {cap}")
            by_target[sid] = by_target.get(sid, 0) | mask
        out_edges.append(tuple((m, t) for t, m in by_target.items()))
    accepting = frozenset(i for i, states in enumerate(order) if states & accepts)
    return Dfa(tuple(out_edges), accepting, 0)


def _byte_classes(masks: set[int]) -> list[int]:
    """Coarsest partition of the bytes (as masks) that every mask in ``masks`` is a union of."""
    classes = [(1 << 256) - 1]
    for m in masks:
        split = []
        for c in classes:
            inside = c & m
            if inside and inside != c:
                split.append(inside)
                split.append(c & ~m)
            else:
                split.append(c)
        classes = split
    return classes


def _accept_distance(dfa: Dfa) -> list[int]:
    """Shortest distance to an accepting state (-1 when none); equivalent states agree on it."""
    n = dfa.num_states
    reverse: list[list[int]] = [[] for _ in range(n)]
    for s, edges in enumerate(dfa.edges):
        for _, t in edges:
            reverse[t].append(s)
    dist = [-1] * n
    queue = deque(dfa.accepting)
    for s in dfa.accepting:
        dist[s] = 0
    while queue:
        t = queue.popleft()
        for s in reverse[t]:
            if dist[s] < 0:
                dist[s] = dist[t] + 1
                queue.append(s)
    return dist


def _moore_small(dfa: Dfa, initial: list[int]) -> list[int]:
    n = dfa.num_states
    cls = initial
    count = len(set(cls))
    while True:
        signatures: dict[tuple, int] = {}
        new_cls = []
        for s in range(n):
            merged: dict[int, int] = {}
            for mask, t in dfa.edges[s]:
                c = cls[t]
                merged[c] = merged.get(c, 0) | mask
            sig = (cls[s], frozenset(merged.items()))
            new_cls.append(signatures.setdefault(sig, len(signatures)))
        cls = new_cls
        if len(signatures) == count:
            return cls
        count = len(signatures)


def _moore_dense(dfa: Dfa, initial: list[int]) -> list[int]:
    n = dfa.num_states
    masks = {m for edges in dfa.edges for m, _ in edges}
    classes = _byte_classes(masks)
    columns = {m: [i for i, c in enumerate(classes) if c & m] for m in masks}
    # row n is the dead state
    table = np.full((n + 1, len(classes)), n, dtype=np.int64)
    for s, edges in enumerate(dfa.edges):
        for m, t in edges:
            table[s, columns[m]] = t

    cls = np.array(initial + [-1], dtype=np.int64)
    count = len(np.unique(cls))
    while True:
        signature = np.column_stack([cls, cls[table]])
        order = np.lexsort(signature.T[::-1])
        ordered = signature[order]
        fresh = np.empty(n + 1, dtype=bool)
        fresh[0] = True
        fresh[1:] = np.any(ordered[1:] != ordered[:-1], axis=1)
        new_cls = np.empty(n + 1, dtype=np.int64)
        new_cls[order] = np.cumsum(fresh) - 1
        new_count = int(fresh.sum())
        cls = new_cls
        if new_count == count:
            break
        count = new_count
    return cls.tolist()[:n]


_DENSE_FROM = 150


def _minimize(dfa: Dfa) -> Dfa:
    """Moore partition refinement, then trimming and BFS renumbering."""
    n = dfa.num_states
    initial = _accept_distance(dfa)
    cls = _moore_dense(dfa, initial) if n >= _DENSE_FROM else _moore_small(dfa, initial)
    reps: dict[int, int] = {}
    for s in range(n):
        reps.setdefault(cls[s], s)
    quotient = {c: tuple((m, cls[t]) for m, t in dfa.edges[rep]) for c, rep in reps.items()}
    accepting = {cls[s] for s in dfa.accepting}
    return _trim(quotient, cls[dfa.start], accepting)


def _trim(edges: dict[int, Edges], start: int, accepting: set[int]) -> Dfa:
    # drop states that cannot reach acceptance
    reverse: dict[int, list[int]] = {s: [] for s in edges}
    for s, es in edges.items():
        for _, t in es:
            reverse[t].append(s)
    live = set(accepting)
    queue = deque(accepting)
    while queue:
        t = queue.popleft()
        for s in reverse[t]:
            if s not in live:
                live.add(s)
                queue.append(s)
    if start not in live:
        return Dfa(((),), frozenset(), 0)

    # renumber in BFS order, following edges by lowest byte
    numbering = {start: 0}
    order = [start]
    i = 0
    while i < len(order):
        s = order[i]
        i += 1
        for mask, t in sorted(edges[s], key=lambda e: (e[0] & -e[0])):
            if t in live and t not in numbering:
                numbering[t] = len(order)
                order.append(t)
    out = []
    for s in order:
        kept = [(m, numbering[t]) for m, t in edges[s] if t in live]
        merged: dict[int, int] = {}
        for m, t in kept:
            merged[t] = merged.get(t, 0) | m
        out.append(tuple(sorted(((m, t) for t, m in merged.items()), key=lambda e: e[0] & -e[0])))
    return Dfa(tuple(out), frozenset(numbering[s] for s in accepting if s in numbering), 0)


def _literal(data: bytes) -> Dfa:
    edges = tuple(((1 << b, i + 1),) for i, b in enumerate(data)) + ((),)
    return Dfa(edges, frozenset({len(data)}), 0)


def _byte_class(mask: int) -> Dfa:
    if mask == 0:
        return Dfa(((),), frozenset(), 0)
    return Dfa((((mask, 1),), ()), frozenset({1}), 0)


class _Compiler:
    def __init__(self, cap: int):
        self.cap = cap
        self.memo: dict[Node, Dfa] = {}

    def compile(self, node: Node) -> Dfa:
        found = self.memo.get(node)
        if found is None:
            found = self.memo[node] = self._compile(node)
            if found.num_states > self.cap:
                raise StateBlowup(f"automaton exceeds the state cap of {self.cap}")
        return found

    def _finish(self, nfa: _Nfa, start: int, accepts: set[int]) -> Dfa:
        return _minimize(_determinize(nfa, start, accepts, self.cap))

    def _compile(self, node: Node) -> Dfa:
        if isinstance(node, Literal):
            return _literal(node.data)
        if isinstance(node, ByteClass):
            return _byte_class(node.mask)
        if isinstance(node, Group):
            return self.compile(node.node)
        if isinstance(node, Concat):
            return self._concat([self.compile(p) for p in node.parts])
        if isinstance(node, Alt):
            nfa = _Nfa()
            start = nfa.add()
            accepts: set[int] = set()
            for option in node.options:
                s, acc = nfa.embed(self.compile(option))
                nfa.eps[start].append(s)
                accepts.update(acc)
            return self._finish(nfa, start, accepts)
        if isinstance(node, Repeat):
            return self._repeat(self.compile(node.node), node.min, node.max)
        raise TypeError(f"not a regex node: {node!r}")

    def _concat(self, parts: list[Dfa]) -> Dfa:
        if any(p.is_empty for p in parts):
            return _byte_class(0)
        nfa = _Nfa()
        start = nfa.add()
        tails = [start]
        for part in parts:
            s, acc = nfa.embed(part)
            for t in tails:
                nfa.eps[t].append(s)
            tails = acc
        return self._finish(nfa, start, set(tails))

    def _repeat(self, inner: Dfa, lo: int, hi: int | None) -> Dfa:
        if hi == 0 or inner.is_empty:
            return _literal(b"") if lo == 0 else _byte_class(0)
        nfa = _Nfa()
        start = nfa.add()
        tails = [start]
        for _ in range(lo):
            s, acc = nfa.embed(inner)
            for t in tails:
                nfa.eps[t].append(s)
            tails = acc
        accepts = set(tails)
        if hi is None:
            s, acc = nfa.embed(inner)
            loop = nfa.add()
            for t in tails:
                nfa.eps[t].append(loop)
            nfa.eps[loop].append(s)
            for a in acc:
                nfa.eps[a].append(loop)
            accepts.add(loop)
        else:
            for _ in range(hi - lo):
                s, acc = nfa.embed(inner)
                for t in tails:
                    nfa.eps[t].append(s)
                tails = acc
                accepts.update(tails)
        return self._finish(nfa, start, accepts)


def compile_regex(node: Node, state_cap: int = DEFAULT_STATE_CAP) -> Dfa:
    """Deterministic, minimal, trimmed automaton for ``node``.

    An empty language yields a single non-accepting state with no edges.
    """
    return _Compiler(state_cap).compile(node)


# ---------------------------------------------------------------------------
# sampling / enumeration


def sample_accepted(dfa: Dfa, rng: random.Random, soft_limit: int = 400, stop_prob: float = 0.3) -> bytes:
    """Random accepted byte string.

    Walks the automaton choosing an edge group uniformly and a byte uniformly
    within it; past ``soft_limit`` bytes it heads straight for acceptance.
    """
    if dfa.is_empty:
        raise ValueError("automaton accepts nothing")
    dist = dfa.distance_to_accept
    out = bytearray()
    s = dfa.start
    while True:
        if s in dfa.accepting and (not dfa.edges[s] or rng.random() < stop_prob or len(out) >= soft_limit):
            return bytes(out)
        edges = dfa.edges[s]
        if len(out) >= soft_limit:
            edges = tuple(e for e in edges if dist[e[1]] < dist[s])
        mask, target = edges[rng.randrange(len(edges))]
        choices = list(_mask_bytes(mask))
        out.append(choices[rng.randrange(len(choices))])
        s = target


def enumerate_accepted(dfa: Dfa, max_len: int, limit: int = 100_000) -> list[bytes]:
    """All accepted strings of length <= max_len (breadth first); raises past ``limit``."""
    found: list[bytes] = []
    frontier = [(dfa.start, b"")]
    for depth in range(max_len + 1):
        nxt = []
        for s, prefix in frontier:
            if s in dfa.accepting:
                found.append(prefix)
            if depth == max_len:
                continue
            for mask, t in dfa.edges[s]:
                for b in _mask_bytes(mask):
                    nxt.append((t, prefix + bytes([b])))
            if len(nxt) > limit:
                raise OverflowError("too many strings to enumerate")
        frontier = nxt
    return sorted(found)
