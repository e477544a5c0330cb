"""Tokenizer vocabularies and the DFA x vocabulary token-mask index."""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ..errors import IllegalToken, ParseError
from ..json_schema import parse_json
from .automaton import Dfa

TERMINAL = -1  # state reached after EOS

_BYTE_ESCAPE = re.compile(r"\\x([0-9a-fA-F]{2})|\\\\|[^\\]+|\\")


def decode_token_string(token: str) -> bytes:
    r"""Token text -> bytes: ``\xHH`` is a raw byte, ``\\`` a backslash, the rest UTF-8."""
    out = bytearray()
    for m in _BYTE_ESCAPE.finditer(token):
        if m.group(1) is not None:
            out.append(int(m.group(1), 16))
        elif m.group() == "\\\\":
            out.append(0x5C)
        else:
            out.extend(m.group().encode("utf-8"))
    return bytes(out)


@dataclass(frozen=True, eq=False)
class Vocabulary:
    tokens: tuple[bytes, ...]
    eos_id: int

    def __post_init__(self) -> None:
        if not 0 <= self.eos_id < len(self.tokens):
            raise ValueError("eos id outside the vocabulary")
        if self.tokens[self.eos_id] != b"":
            object.__setattr__(
                self, "tokens", self.tokens[: self.eos_id] + (b"",) + self.tokens[self.eos_id + 1 :]
            )

    @property
    def size(self) -> int:
        return len(self.tokens)

    def __len__(self) -> int:
        return len(self.tokens)

    @classmethod
    def byte_level(cls) -> "Vocabulary":
        """256 single-byte tokens plus EOS as id 256."""
        return cls(tuple(bytes([b]) for b in range(256)) + (b"",), 256)

    @classmethod
    def from_mapping(cls, mapping: dict[str, int], eos_id: int) -> "Vocabulary":
        size = max([eos_id, *mapping.values()]) + 1
        tokens: list[bytes | None] = [None] * size
        for text, tid in mapping.items():
            if isinstance(tid, bool) or not isinstance(tid, int) or tid < 0:
                raise ParseError(f"bad token id for {text!r}")
            if tokens[tid] is not None:
                raise ParseError(f"token id {tid} assigned twice")
            tokens[tid] = decode_token_string(text)
        tokens[eos_id] = b""
        missing = [i for i, t in enumerate(tokens) if t is None]
        if missing:
            raise ParseError(f"token ids are not dense; missing {missing[:5]}")
        return cls(tuple(tokens), eos_id)  # type: ignore[arg-type]

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        """JSON ``{token: id, ..., "eos_token_id": n}`` or a TSV of ``id<TAB>hex bytes``."""
        path = Path(path)
        text = path.read_text(encoding="utf-8")
        if path.suffix.lower() in (".tsv", ".txt"):
            return cls._from_tsv(text)
        doc = parse_json(text)
        if not isinstance(doc, dict) or "eos_token_id" not in doc:
            raise ParseError("vocabulary JSON needs an eos_token_id member")
        eos = doc.pop("eos_token_id")
        return cls.from_mapping(doc, eos)

    @classmethod
    def _from_tsv(cls, text: str) -> "Vocabulary":
        rows: dict[int, bytes] = {}
        eos = None
        for lineno, line in enumerate(text.splitlines(), 1):
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            tid = int(parts[0])
            hexbytes = parts[1].strip() if len(parts) > 1 else ""
            if hexbytes.upper() == "EOS":
                eos = tid
                rows[tid] = b""
                continue
            try:
                rows[tid] = bytes.fromhex(hexbytes)
            except ValueError:
                raise ParseError(f"line {lineno}: bad hex bytes {hexbytes!r}") from None
        if eos is None:
            raise ParseError("TSV vocabulary needs one row whose bytes column is EOS")
        size = max(rows) + 1
        if sorted(rows) != list(range(size)):
            raise ParseError("token ids are not dense")
        return cls(tuple(rows[i] for i in range(size)), eos)

    @cached_property
    def fingerprint(self) -> str:
        h = hashlib.sha256(str(self.eos_id).encode())
        for tok in self.tokens:
            h.update(len(tok).to_bytes(4, "little"))
            h.update(tok)
        return h.hexdigest()

    @cached_property
    def _lookup(self) -> dict[bytes, int]:
        table: dict[bytes, int] = {}
        for tid, tok in enumerate(self.tokens):
            if tok and tok not in table:
                table[tok] = tid
        return table

    @cached_property
    def _max_len(self) -> int:
        return max((len(t) for t in self.tokens), default=0)

    def greedy_tokenize(self, data: bytes) -> list[int]:
        """Longest-match tokenization; raises ValueError if some byte has no token."""
        lookup, out, i = self._lookup, [], 0
        while i < len(data):
            for n in range(min(self._max_len, len(data) - i), 0, -1):
                tid = lookup.get(data[i : i + n])
                if tid is not None:
                    out.append(tid)
                    i += n
                    break
            else:
                raise ValueError(f"byte {data[i]:#04x} at offset {i} has no token")
        return out

    def decode(self, ids: Iterable[int]) -> bytes:
        return b"".join(self.tokens[i] for i in ids if i != self.eos_id)


@dataclass(frozen=True, eq=False)
class TokenMaskIndex:
    dfa: Dfa
    vocab: Vocabulary
    allowed: tuple[np.ndarray, ...]  # per state: sorted non-EOS token ids
    dests: tuple[np.ndarray, ...]  # per state: destination for each allowed id

    @property
    def start(self) -> int:
        return self.dfa.start

    @property
    def num_states(self) -> int:
        return self.dfa.num_states

    def eos_allowed(self, state: int) -> bool:
        return state in self.dfa.accepting

    def allowed_tokens(self, state: int) -> np.ndarray:
        """Allowed ids at ``state`` including EOS when accepting (EOS sorted in place)."""
        ids = self.allowed[state]
        if self.eos_allowed(state):
            ids = np.sort(np.append(ids, self.vocab.eos_id))
        return ids

    def mask(self, state: int) -> np.ndarray:
        m = np.zeros(self.vocab.size, dtype=bool)
        m[self.allowed[state]] = True
        if self.eos_allowed(state):
            m[self.vocab.eos_id] = True
        return m

    def is_allowed(self, state: int, token: int) -> bool:
        if token == self.vocab.eos_id:
            return self.eos_allowed(state)
        ids = self.allowed[state]
        pos = int(np.searchsorted(ids, token))
        return pos < len(ids) and int(ids[pos]) == token

    @cached_property
    def tokens_to_finish(self) -> np.ndarray:
        """Per state: fewest tokens (EOS included) that reach termination."""
        n = self.num_states
        unreachable = np.iinfo(np.int64).max // 2
        need = np.full(n, unreachable, dtype=np.int64)
        need[sorted(self.dfa.accepting)] = 1
        counts = np.array([len(a) for a in self.allowed])
        src = np.repeat(np.arange(n), counts)
        dst = np.concatenate(self.dests) if n else np.zeros(0, dtype=np.int32)
        while True:
            relaxed = need.copy()
            np.minimum.at(relaxed, src, need[dst] + 1)
            if np.array_equal(relaxed, need):
                return need
            need = relaxed

    @cached_property
    def _dest_need(self) -> tuple[tuple[np.ndarray, int], ...]:
        need = self.tokens_to_finish
        out = []
        for d in self.dests:
            nd = need[d]
            out.append((nd, int(nd.max()) if nd.size else 0))
        return tuple(out)

    def allowed_within(self, state: int, budget: int) -> np.ndarray:
        """Allowed ids at ``state`` after which termination still fits in ``budget`` tokens."""
        nd, worst = self._dest_need[state]
        if worst + 1 <= budget:
            return self.allowed_tokens(state)
        ids = self.allowed[state][nd + 1 <= budget]
        if self.eos_allowed(state):
            ids = np.sort(np.append(ids, self.vocab.eos_id))
        return ids

    def destination(self, state: int, token: int) -> int:
        ids = self.allowed[state]
        pos = int(np.searchsorted(ids, token))
        return int(self.dests[state][pos])


def index_vocabulary(dfa: Dfa, vocab: Vocabulary) -> TokenMaskIndex:
    """For every (state, token): allowed iff the DFA consumes all of the token's bytes."""
    n = dfa.num_states
    table = dfa.table
    dead = dfa.dead
    every_state = np.arange(n, dtype=np.int32)
    state_parts: list[np.ndarray] = []
    token_parts: list[np.ndarray] = []
    dest_parts: list[np.ndarray] = []
    for tid, tok in enumerate(vocab.tokens):
        if not tok:
            # EOS is handled by acceptance; other empty tokens would never advance
            continue
        cur = every_state
        for b in tok:
            cur = table[cur, b]
        live = np.nonzero(cur != dead)[0]
        if live.size:
            state_parts.append(live.astype(np.int32))
            token_parts.append(np.full(live.size, tid, dtype=np.int32))
            dest_parts.append(cur[live])
    if state_parts:
        states = np.concatenate(state_parts)
        tokens = np.concatenate(token_parts)
        dests = np.concatenate(dest_parts)
        order = np.lexsort((tokens, states))
        states, tokens, dests = states[order], tokens[order], dests[order]
        bounds = np.searchsorted(states, np.arange(n + 1))
    else:
        tokens = dests = np.zeros(0, dtype=np.int32)
        bounds = np.zeros(n + 1, dtype=np.int64)
    allowed = tuple(tokens[bounds[s] : bounds[s + 1]] for s in range(n))
    dest = tuple(dests[bounds[s] : bounds[s + 1]] for s in range(n))
    return TokenMaskIndex(dfa, vocab, allowed, dest)


def advance(index: TokenMaskIndex, state: int, token: int) -> int:
    if state == TERMINAL:
        raise IllegalToken("generation already terminated")
    if token == index.vocab.eos_id:
        if index.eos_allowed(state):
            return TERMINAL
        raise IllegalToken(f"EOS not allowed in non-accepting state {state}")
    if not index.is_allowed(state, token):
        raise IllegalToken(f"token {token} not allowed in state {state}")
    return index.destination(state, token)


def walk_tokens(index: TokenMaskIndex, tokens: Sequence[int]) -> int:
    """Advance through ``tokens`` from the start state; returns the final state."""
    state = index.start
    for t in tokens:
        state = advance(index, state, t)
    return state
