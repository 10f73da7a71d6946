"""Finite stand-ins for bi-infinite symbol sequences and cylinder sets."""
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class TailKind(str, Enum):
    CONSTANT = "constant"
    PERIODIC = "periodic"
    SEEDED = "seeded"


class TailRule(BaseModel):
    """How a window extends beyond its stored coordinates."""

    model_config = ConfigDict(frozen=True)

    kind: TailKind = TailKind.CONSTANT
    symbol: int = Field(default=1, ge=1)
    seed: int = Field(default=0, ge=0)
    alphabet: int = Field(default=1, ge=1)

    @classmethod
    def constant(cls, symbol: int = 1) -> "TailRule":
        return cls(kind=TailKind.CONSTANT, symbol=symbol)

    @classmethod
    def periodic(cls) -> "TailRule":
        return cls(kind=TailKind.PERIODIC)

    @classmethod
    def seeded(cls, seed: int, alphabet: int) -> "TailRule":
        return cls(kind=TailKind.SEEDED, seed=seed, alphabet=alphabet)


def _seeded_symbol(seed: int, index: int, alphabet: int) -> int:
    entropy = [seed, abs(index), 1 if index < 0 else 0]
    return int(np.random.default_rng(entropy).integers(1, alphabet + 1))


class SymbolWindow(BaseModel):
    """ω with stored coordinates past = (ω_{-m}, ..., ω_{-1}) and future = (ω_0, ..., ω_t).

    ``offset`` and ``reflected`` record shifts and the involution
    ω'_i = ω_{-i-1} applied to the stored sequence, so both act exactly.
    """

    model_config = ConfigDict(frozen=True)

    past: Tuple[int, ...] = ()
    future: Tuple[int, ...] = ()
    tail: TailRule = Field(default_factory=TailRule)
    offset: int = 0
    reflected: bool = False
    # stored-coordinate overrides, consulted before past, future and tail
    patch: Tuple[Tuple[int, int], ...] = ()

    @field_validator("past", "future")
    @classmethod
    def _symbols(cls, symbols: Tuple[int, ...]) -> Tuple[int, ...]:
        if any(s < 1 for s in symbols):
            raise ValueError("symbols are numbered from 1")
        return symbols

    @field_validator("patch")
    @classmethod
    def _patch(cls, patch: Tuple[Tuple[int, int], ...]) -> Tuple[Tuple[int, int], ...]:
        if any(s < 1 for _, s in patch):
            raise ValueError("symbols are numbered from 1")
        return patch

    def _stored(self, j: int) -> int:
        for k, s in self.patch:
            if k == j:
                return s
        m, t = len(self.past), len(self.future)
        if 0 <= j < t:
            return self.future[j]
        if -m <= j < 0:
            return self.past[m + j]
        rule = self.tail
        if rule.kind == TailKind.CONSTANT:
            return rule.symbol
        if rule.kind == TailKind.PERIODIC:
            if j >= 0:
                block = self.future or self.past
            else:
                block = self.past or self.future
            return block[j % len(block)] if block else 1
        return _seeded_symbol(rule.seed, j, rule.alphabet)

    def _storage_index(self, i: int) -> int:
        j = i + self.offset
        return -j - 1 if self.reflected else j

    def symbol_at(self, i: int) -> int:
        return self._stored(self._storage_index(i))

    def symbols(self, start: int, stop: int) -> List[int]:
        """Symbols at positions start, ..., stop - 1."""
        return [self.symbol_at(i) for i in range(start, stop)]

    def shift(self, n: int) -> "SymbolWindow":
        return self.model_copy(update={"offset": self.offset + n})

    def involute(self) -> "SymbolWindow":
        return self.model_copy(update={"offset": -self.offset, "reflected": not self.reflected})

    def overwrite(self, start: int, symbols: Sequence[int]) -> "SymbolWindow":
        """The same sequence with positions start, start + 1, ... replaced by ``symbols``."""
        changes = dict(self.patch)
        for i, s in enumerate(symbols):
            changes[self._storage_index(start + i)] = int(s)
        return self.model_copy(update={"patch": tuple(sorted(changes.items()))})

    def max_symbol(self) -> int:
        stored = max(self.past + self.future + tuple(s for _, s in self.patch), default=1)
        if self.tail.kind == TailKind.SEEDED:
            return max(stored, self.tail.alphabet)
        if self.tail.kind == TailKind.CONSTANT:
            return max(stored, self.tail.symbol)
        return stored

    @classmethod
    def constant(cls, symbol: int = 1) -> "SymbolWindow":
        return cls(tail=TailRule.constant(symbol))


class CylinderSide(str, Enum):
    TWO_SIDED = "two-sided"
    NEG_ONLY = "neg-only"
    POS_ONLY = "pos-only"


class Cylinder(BaseModel):
    """[u; v]: positions -s..-1 fixed to neg_word, positions 0..t fixed to pos_word."""

    model_config = ConfigDict(frozen=True)

    neg_word: Tuple[int, ...] = ()
    pos_word: Tuple[int, ...] = ()
    side: Optional[CylinderSide] = None

    @model_validator(mode="after")
    def _side(self) -> "Cylinder":
        if self.side is None:
            if self.neg_word and self.pos_word:
                side = CylinderSide.TWO_SIDED
            elif self.neg_word:
                side = CylinderSide.NEG_ONLY
            else:
                side = CylinderSide.POS_ONLY
            object.__setattr__(self, "side", side)
        return self

    def contains(self, window: SymbolWindow) -> bool:
        s = len(self.neg_word)
        if any(window.symbol_at(j - s) != u for j, u in enumerate(self.neg_word)):
            return False
        return all(window.symbol_at(j) == v for j, v in enumerate(self.pos_word))

    def window(self, tail: Optional[TailRule] = None) -> SymbolWindow:
        """A point of the cylinder with the given tail."""
        return SymbolWindow(past=self.neg_word, future=self.pos_word, tail=tail or TailRule())
