"""Key-generation (sifting) rules for the boosted protocols and the baselines.

Everything here is a pure function of public basis choices plus each
party's private index. Pair bases are labelled by the general convention:
B1 pair ``m`` is ``{2m, 2m+1}`` and B2 pair ``m`` is ``{2m+1, 2m+2 mod d}``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, NamedTuple

import numpy as np

from .errors import IndexOutOfRange, UnsupportedDimension
from .qudit import BasisId, basis_for

B0, B1, B2, FOURIER = BasisId.B0, BasisId.B1, BasisId.B2, BasisId.FOURIER
PAIR_BASES = (B1, B2)


@dataclass(frozen=True)
class SiftOutcome:
    symbol: int | None
    alphabet: int

    @property
    def is_symbol(self) -> bool:
        return self.symbol is not None

    @property
    def kind(self) -> str:
        return "Symbol" if self.symbol is not None else "Discard"

    def to_json(self):
        return None if self.symbol is None else [self.symbol, self.alphabet]

    def __repr__(self) -> str:
        if self.symbol is None:
            return "Discard"
        return f"Symbol({self.symbol}/{self.alphabet})"


DISCARD = SiftOutcome(None, 0)


def Symbol(value: int, alphabet: int) -> SiftOutcome:
    if not 0 <= value < alphabet:
        raise IndexOutOfRange(f"symbol {value} outside alphabet {alphabet}")
    return SiftOutcome(int(value), int(alphabet))


class RoundClass(NamedTuple):
    """Basis pair of a round; ``bob_basis`` is ``"reflect"`` for reflect rounds."""

    alice_basis: str
    bob_basis: str

    def __str__(self) -> str:
        return f"{self.alice_basis}/{self.bob_basis}"


# -- pair bookkeeping -------------------------------------------------------


def pair_of_index(basis: BasisId, index: int) -> int:
    """Pair number of a pair-basis vector (its own index is ``2m+s``)."""
    return index // 2


def pair_containing(d: int, basis: BasisId, comp_index: int) -> int:
    """Pair number, in ``basis``'s pairing, of computational state ``|comp_index⟩``."""
    if basis is B1:
        return comp_index // 2
    if basis is B2:
        return ((comp_index - 1) % d) // 2
    raise ValueError(f"{basis} has no pairing")


def pair_members(d: int, basis: BasisId, m: int) -> tuple[int, int]:
    if basis is B1:
        return 2 * m, 2 * m + 1
    if basis is B2:
        return 2 * m + 1, (2 * m + 2) % d
    raise ValueError(f"{basis} has no pairing")


def cross_alphabet(d: int) -> int:
    """Alphabet of kept B1×B2 rounds: d/4 for d=4n, n+1 for d=4n+2."""
    return d // 4 if d % 4 == 0 else (d + 2) // 4


def _check(d: int, *pairs) -> None:
    if d % 2 or d < 4:
        raise UnsupportedDimension(f"rules need an even d >= 4, got {d}")
    for basis, index in pairs:
        if basis not in (B0, B1, B2):
            raise ValueError(f"basis {basis} is not used by the boosted protocols")
        if not 0 <= index < d:
            raise IndexOutOfRange(f"index {index} outside [0, {d})")


# -- party-local halves of the rule ---------------------------------------


def sender_keeps(d: int, alice_basis: BasisId, alice_index: int, bob_basis: BasisId) -> bool:
    """Alice's own discard decision (announced after the bases are revealed)."""
    if {alice_basis, bob_basis} != {B1, B2}:
        return True
    if d == 4:
        return False
    return pair_of_index(alice_basis, alice_index) % 2 == 0


def _receiver_candidates(d: int, alice_basis: BasisId, bob_pair: int) -> tuple[int, int]:
    half = d // 2
    if alice_basis is B1:  # receiver in B2: pair m' overlaps sender pairs m', m'+1
        return bob_pair, (bob_pair + 1) % half
    return bob_pair, (bob_pair - 1) % half


def receiver_keeps(d: int, alice_basis: BasisId, bob_basis: BasisId, bob_index: int) -> bool:
    """Bob's own discard decision: he drops outcomes that two kept sender pairs share."""
    if {alice_basis, bob_basis} != {B1, B2}:
        return True
    if d == 4:
        return False
    cands = _receiver_candidates(d, alice_basis, pair_of_index(bob_basis, bob_index))
    return sum(1 for c in cands if c % 2 == 0) == 1


def alice_symbol(d: int, alice_basis: BasisId, alice_index: int, bob_basis: BasisId) -> int:
    """Alice's key value for a kept round (ignores discards)."""
    if alice_basis is bob_basis:
        return alice_index
    if alice_basis is B0:
        return pair_containing(d, bob_basis, alice_index)
    if bob_basis is B0:
        return pair_of_index(alice_basis, alice_index)
    return pair_of_index(alice_basis, alice_index) // 2


def bob_symbol(d: int, alice_basis: BasisId, bob_basis: BasisId, bob_index: int) -> int:
    """Bob's key value for a kept round (ignores discards)."""
    if alice_basis is bob_basis:
        return bob_index
    if bob_basis is B0:
        return pair_containing(d, alice_basis, bob_index)
    if alice_basis is B0:
        return pair_of_index(bob_basis, bob_index)
    cands = _receiver_candidates(d, alice_basis, pair_of_index(bob_basis, bob_index))
    even = [c for c in cands if c % 2 == 0]
    return even[0] // 2


def round_alphabet(d: int, alice_basis: BasisId, bob_basis: BasisId) -> int:
    if alice_basis is bob_basis:
        return d
    if B0 in (alice_basis, bob_basis):
        return d // 2
    return cross_alphabet(d)


@lru_cache(maxsize=1 << 16)
def sift_symbol(
    d: int, alice_basis, alice_index: int, bob_basis, bob_index: int
) -> tuple[SiftOutcome, SiftOutcome]:
    """Apply the key rule to one round; returns (Alice's view, Bob's view).

    Discards announced by either party apply to both views.
    """
    alice_basis, bob_basis = BasisId(alice_basis), BasisId(bob_basis)
    _check(d, (alice_basis, alice_index), (bob_basis, bob_index))
    if not (
        sender_keeps(d, alice_basis, alice_index, bob_basis)
        and receiver_keeps(d, alice_basis, bob_basis, bob_index)
    ):
        return DISCARD, DISCARD
    n = round_alphabet(d, alice_basis, bob_basis)
    return (
        Symbol(alice_symbol(d, alice_basis, alice_index, bob_basis), n),
        Symbol(bob_symbol(d, alice_basis, bob_basis, bob_index), n),
    )


def bsqkd_symbol(
    d: int, alice_basis, alice_index: int, bob_measured: bool, bob_outcome: int | None
) -> SiftOutcome:
    """Bob's key value in the semi-quantum protocol (he only measures in B0).

    ``alice_index`` is accepted for signature symmetry; Bob's value depends
    only on the revealed basis and his own outcome.
    """
    alice_basis = BasisId(alice_basis)
    if not bob_measured:
        return DISCARD
    _check(d, (alice_basis, alice_index), (B0, bob_outcome))
    if alice_basis is B0:
        return Symbol(bob_outcome, d)
    return Symbol(pair_containing(d, alice_basis, bob_outcome), d // 2)


def bsqkd_alice_symbol(d: int, alice_basis, alice_index: int) -> SiftOutcome:
    """Alice's key value in a measured semi-quantum round: her prepared state/pair."""
    alice_basis = BasisId(alice_basis)
    if alice_basis is B0:
        return Symbol(alice_index, d)
    return Symbol(pair_of_index(alice_basis, alice_index), d // 2)


def matched_basis_symbol(d: int, alice_basis, alice_index: int, bob_basis, bob_index: int):
    """Baseline (two-basis) rule: keep only rounds with matching bases."""
    if alice_basis != bob_basis:
        return DISCARD, DISCARD
    return Symbol(alice_index, d), Symbol(bob_index, d)


# -- exhaustive checks -------------------------------------------------------

RuleFn = Callable[[int, BasisId, int, BasisId, int], tuple]


def _overlap(d: int, a: BasisId, b: BasisId) -> np.ndarray:
    """``P[i, k] = |⟨b_k|a_i⟩|²``."""
    A, Bm = basis_for(d, a), basis_for(d, b)
    return np.abs(Bm.adjoint @ A.matrix).T ** 2


def check_unambiguity(d: int, rule: RuleFn = sift_symbol) -> list[tuple]:
    """Brute-force every attack-free (basis, index, basis, outcome) tuple.

    A violation is recorded when the two views disagree, when only one view
    is a symbol, or when a symbol-producing outcome of Bob is reachable from
    kept Alice states carrying different symbols (Bob could not decide
    uniquely). Returns the list of offending tuples.
    """
    if d % 2 or not 4 <= d <= 32:
        raise UnsupportedDimension(f"unambiguity check covers even 4 <= d <= 32, got {d}")
    violations = []
    for ab in (B0, B1, B2):
        for bb in (B0, B1, B2):
            P = _overlap(d, ab, bb)
            for k in range(d):
                reachable = set()
                for i in range(d):
                    if P[i, k] < 1e-12:
                        continue
                    va, vb = rule(d, ab, i, bb, k)
                    if va.is_symbol != vb.is_symbol or (va.is_symbol and va != vb):
                        violations.append((d, ab.value, i, bb.value, k, va, vb))
                    if va.is_symbol:
                        reachable.add(va.symbol)
                if len(reachable) > 1:
                    violations.append((d, ab.value, "*", bb.value, k, "ambiguous", sorted(reachable)))
    return violations
