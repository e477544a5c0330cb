"""Schema -> regex -> DFA -> token mask lowering."""

from __future__ import annotations

import threading
from collections import OrderedDict

from ..errors import UnsupportedSchema
from ..json_schema import SchemaDoc, schema_hash
from .automaton import DEFAULT_STATE_CAP, Dfa, compile_regex, enumerate_accepted, sample_accepted
from .regex import Node, schema_to_regex, to_pattern
from .tokens import TERMINAL, TokenMaskIndex, Vocabulary, advance, index_vocabulary, walk_tokens

__all__ = [
    "DEFAULT_STATE_CAP",
    "Dfa",
    "Node",
    "TERMINAL",
    "TokenMaskIndex",
    "Vocabulary",
    "advance",
    "compile_regex",
    "compile_schema",
    "enumerate_accepted",
    "index_vocabulary",
    "mask_index_for",
    "sample_accepted",
    "schema_to_regex",
    "to_pattern",
    "walk_tokens",
]


def compile_schema(schema: SchemaDoc, state_cap: int = DEFAULT_STATE_CAP) -> Dfa:
    dfa = compile_regex(schema_to_regex(schema), state_cap)
    if dfa.is_empty:
        raise UnsupportedSchema(["/"], "schema admits no value")
    return dfa


class _IndexCache:
    """LRU of token-mask indexes keyed by (schema hash, vocabulary hash)."""

    def __init__(self, capacity: int = 64):
        self.capacity = capacity
        self._items: OrderedDict[tuple[str, str], TokenMaskIndex] = OrderedDict()
        self._lock = threading.Lock()

    def get(self, schema: SchemaDoc, vocab: Vocabulary, state_cap: int) -> TokenMaskIndex:
        key = (schema_hash(schema), vocab.fingerprint)
        with self._lock:
            found = self._items.get(key)
            if found is not None:
                self._items.move_to_end(key)
                return found
        index = index_vocabulary(compile_schema(schema, state_cap), vocab)
        with self._lock:
            self._items[key] = index
            while len(self._items) > self.capacity:
                self._items.popitem(last=False)
        return index

    def clear(self) -> None:
        with self._lock:
            self._items.clear()


INDEX_CACHE = _IndexCache()


def mask_index_for(schema: SchemaDoc, vocab: Vocabulary, state_cap: int = DEFAULT_STATE_CAP) -> TokenMaskIndex:
    return INDEX_CACHE.get(schema, vocab, state_cap)
