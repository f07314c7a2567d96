"""Spin strings, their irreducible cores, and the sector structure they induce.

A configuration of the chain is a string of symbols from {1, ..., N}. Deleting
adjacent equal pairs until none remain sends every string to a unique
irreducible string (no two neighbouring symbols equal); two configurations are
dynamically connected exactly when their irreducible strings agree, so the
irreducible string labels a sector. Equivalently each string is a walk on the
infinite N-regular tree (a repeated symbol backtracks) and the sector is the
walk's endpoint; the endpoint's distance from the root is the sector depth d,
which satisfies d <= L and d == L (mod 2).

Symbols are 1-based. The empty irreducible string displays as "∅" and
serialises to an empty field.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Iterator, Sequence

from .errors import ResourceCapError, UsageError

EMPTY_DISPLAY = "∅"

# Compact digit serialisation only works while every symbol is a single digit.
MAX_COMPACT_ALPHABET = 9


def _validate_symbols(symbols: tuple[int, ...], n: int) -> None:
    if n < 2:
        raise UsageError(f"alphabet size must be >= 2, got {n}")
    for s in symbols:
        if not 1 <= s <= n:
            raise UsageError(f"symbol {s} outside alphabet 1..{n}")


def _parse_symbol_text(text: str) -> tuple[int, ...]:
    """Parse either compact digits ("1221") or comma-separated ints ("1,2,2,1")."""
    text = text.strip()
    if text == "" or text == EMPTY_DISPLAY:
        return ()
    if "," in text:
        return tuple(int(part) for part in text.split(","))
    return tuple(int(ch) for ch in text)


def _format_symbols(symbols: tuple[int, ...], n: int) -> str:
    if not symbols:
        return ""
    if n <= MAX_COMPACT_ALPHABET:
        return "".join(str(s) for s in symbols)
    return ",".join(str(s) for s in symbols)


def reduce_symbols(symbols: Sequence[int]) -> tuple[int, ...]:
    """Cancel adjacent equal pairs to the unique fixed point, one stack pass, O(L).

    The stack-based pass computes the same fixed point as deleting pairs in any
    order; confluence is exercised by the property tests.
    """
    stack: list[int] = []
    for s in symbols:
        if stack and stack[-1] == s:
            stack.pop()
        else:
            stack.append(s)
    return tuple(stack)


def charge_value(symbols: Sequence[int], a: int) -> int:
    """Staggered occupation of symbol a: sum over sites i of (-1)^i [s_i == a].

    Site numbering is 1-based, so site 1 carries weight -1.
    """
    total = 0
    for i, s in enumerate(symbols, start=1):
        if s == a:
            total += -1 if i % 2 else 1
    return total


@dataclass(frozen=True)
class Charge:
    """A staggered charge value for one symbol in a length-`length` chain."""

    symbol: int
    value: int
    length: int

    @property
    def normalized(self) -> Fraction:
        """2 Q_a / L, lies in [-1, 1]."""
        if self.length == 0:
            return Fraction(0)
        return Fraction(2 * self.value, self.length)


@dataclass(frozen=True)
class SectorId:
    """A sector label: the irreducible string, i.e. a vertex of the N-regular tree."""

    irr: tuple[int, ...]
    alphabet_size: int

    def __post_init__(self) -> None:
        _validate_symbols(self.irr, self.alphabet_size)
        for x, y in zip(self.irr, self.irr[1:]):
            if x == y:
                raise UsageError(f"not irreducible: adjacent equal pair {x}{y}")

    @classmethod
    def parse(cls, text: str, alphabet_size: int) -> "SectorId":
        return cls(_parse_symbol_text(text), alphabet_size)

    @property
    def depth(self) -> int:
        return len(self.irr)

    def to_text(self) -> str:
        """Serialised form; the empty sector is an empty field."""
        return _format_symbols(self.irr, self.alphabet_size)

    def __str__(self) -> str:
        return self.to_text() or EMPTY_DISPLAY

    def parent(self) -> "SectorId":
        if not self.irr:
            raise UsageError("root sector has no parent")
        return SectorId(self.irr[:-1], self.alphabet_size)

    def children(self) -> list["SectorId"]:
        """Tree children: one extension per symbol differing from the last symbol."""
        last = self.irr[-1] if self.irr else None
        return [
            SectorId(self.irr + (c,), self.alphabet_size)
            for c in range(1, self.alphabet_size + 1)
            if c != last
        ]


@dataclass(frozen=True)
class SpinString:
    """An immutable chain configuration over the alphabet {1, ..., alphabet_size}."""

    symbols: tuple[int, ...]
    alphabet_size: int

    def __post_init__(self) -> None:
        _validate_symbols(self.symbols, self.alphabet_size)

    @classmethod
    def parse(cls, text: str, alphabet_size: int) -> "SpinString":
        return cls(_parse_symbol_text(text), alphabet_size)

    @classmethod
    def from_ints(cls, symbols: Iterable[int], alphabet_size: int) -> "SpinString":
        return cls(tuple(symbols), alphabet_size)

    def __len__(self) -> int:
        return len(self.symbols)

    def __iter__(self) -> Iterator[int]:
        return iter(self.symbols)

    def to_text(self) -> str:
        return _format_symbols(self.symbols, self.alphabet_size)

    def __str__(self) -> str:
        return self.to_text() or EMPTY_DISPLAY


def reduce(s: SpinString) -> SectorId:
    """Sector of a configuration: its irreducible string."""
    return SectorId(reduce_symbols(s.symbols), s.alphabet_size)


def charge(s: SpinString, a: int) -> Charge:
    """Staggered charge Q_a of a configuration."""
    if not 1 <= a <= s.alphabet_size:
        raise UsageError(f"symbol {a} outside alphabet 1..{s.alphabet_size}")
    return Charge(symbol=a, value=charge_value(s.symbols, a), length=len(s))


def sector_charge(k: SectorId, a: int, length: int | None = None) -> Charge:
    """Charge of every configuration in sector k.

    Pair deletions remove zero net charge and preserve position parity, so Q_a
    evaluated on the irreducible string equals Q_a of any member configuration.
    `length` fixes the chain length used for normalisation (defaults to the
    sector depth; it must have the same parity and be >= depth).
    """
    if not 1 <= a <= k.alphabet_size:
        raise UsageError(f"symbol {a} outside alphabet 1..{k.alphabet_size}")
    d = k.depth
    if length is None:
        length = d
    if length < d or (length - d) % 2:
        raise UsageError(f"length {length} incompatible with sector depth {d}")
    return Charge(symbol=a, value=charge_value(k.irr, a), length=length)


def is_frozen(s: SpinString) -> bool:
    """True when no move is available: no adjacent equal pair anywhere."""
    return all(x != y for x, y in zip(s.symbols, s.symbols[1:]))


def enumerate_sectors(n: int, length: int, max_count: int | None = 2_000_000) -> list[SectorId]:
    """All sectors of a length-`length` chain: irreducible strings with
    depth <= length and depth == length (mod 2), in (depth, lexicographic) order.

    Raises ResourceCapError when the count would exceed `max_count`
    (pass None to disable the cap).
    """
    if length < 0:
        raise UsageError("length must be >= 0")
    total = sector_count_closed(n, length)
    if max_count is not None and total > max_count:
        raise ResourceCapError(
            f"sector enumeration for N={n}, L={length} has {total} sectors, cap is {max_count}"
        )
    out: list[SectorId] = []
    for d in range(length % 2, length + 1, 2):
        frontier: list[tuple[int, ...]] = [()]
        for _ in range(d):
            frontier = [
                irr + (c,)
                for irr in frontier
                for c in range(1, n + 1)
                if not irr or c != irr[-1]
            ]
        out.extend(SectorId(irr, n) for irr in frontier)
    return out


def sector_count_closed(n: int, length: int) -> int:
    """Number of sectors of a length-`length` chain, closed form.

    L+1 for a two-symbol alphabet, ((N-1)^(L+1) - 1)/(N-2) otherwise.
    """
    if n < 2:
        raise UsageError(f"alphabet size must be >= 2, got {n}")
    if length < 0:
        raise UsageError("length must be >= 0")
    if n == 2:
        return length + 1
    return ((n - 1) ** (length + 1) - 1) // (n - 2)
