"""Published key-generation tables, encoded as kets, and the rule verifier.

A row names Alice's state and Bob's post-measurement state by their
computational support (one index for B0, two for a pair state; either sign
of a pair state is meant) and the expected key letter, ``None`` for a
discarded round.

The ququart table printed alongside the three-basis definition pairs B2 as
``{0,3}`` / ``{1,2}`` with letters 0 / 1. The general labelling used by
this package numbers the same pairs ``(3,0)`` → 1 and ``(1,2)`` → 0, so
rows from that table go through :func:`ququart_b2_letter`.
"""

from __future__ import annotations

from itertools import product
from typing import Iterable, NamedTuple

from .rules import B0, B1, B2, RuleFn, check_unambiguity, pair_members, sift_symbol


class GoldenRow(NamedTuple):
    table: str
    d: int
    alice_basis: str
    alice_support: tuple
    bob_basis: str
    bob_support: tuple
    letter: int | None


def ququart_b2_letter(ours: int) -> int:
    """Map a d=4 B2 pair number (general labelling) to the ququart table's letter."""
    return 1 - ours


def _table1() -> list[GoldenRow]:
    rows = []
    b1 = [((0,), (0, 1), 0), ((1,), (0, 1), 0), ((2,), (2, 3), 1), ((3,), (2, 3), 1)]
    b2 = [((0,), (0, 3), 0), ((3,), (0, 3), 0), ((1,), (1, 2), 1), ((2,), (1, 2), 1)]
    for comp, pair, letter in b1:
        rows.append(GoldenRow("table1", 4, "B0", comp, "B1", pair, letter))
        rows.append(GoldenRow("table1", 4, "B1", pair, "B0", comp, letter))
    for comp, pair, letter in b2:
        rows.append(GoldenRow("table1", 4, "B0", comp, "B2", pair, letter))
        rows.append(GoldenRow("table1", 4, "B2", pair, "B0", comp, letter))
    return rows


def _table_qudit(d: int, name: str = "table2") -> list[GoldenRow]:
    rows = []
    for m in range(d // 2):
        for basis in ("B1", "B2"):
            a, b = pair_members(d, B1 if basis == "B1" else B2, m)
            for comp in (a, b):
                rows.append(GoldenRow(name, d, "B0", (comp,), basis, (a, b), m))
                rows.append(GoldenRow(name, d, basis, (a, b), "B0", (comp,), m))
    return rows


def _table6b() -> list[GoldenRow]:
    t = "table6b"
    return [
        GoldenRow(t, 6, "B1", (0, 1), "B2", (1, 2), 0),
        GoldenRow(t, 6, "B1", (0, 1), "B2", (5, 0), None),
        GoldenRow(t, 6, "B1", (2, 3), "B2", (1, 2), None),
        GoldenRow(t, 6, "B1", (2, 3), "B2", (3, 4), None),
        GoldenRow(t, 6, "B1", (4, 5), "B2", (3, 4), 1),
        GoldenRow(t, 6, "B1", (4, 5), "B2", (5, 0), None),
    ]


def _table7(d: int) -> list[GoldenRow]:
    """B1 → B2 rows: sender pair m, receiver pairs m-1 and m (mod d/2)."""
    half = d // 2
    name = "table7a" if d % 4 == 0 else "table7b"
    rows = []
    for m in range(half):
        sender = pair_members(d, B1, m)
        for mp in ((m - 1) % half, m):
            receiver = pair_members(d, B2, mp)
            if m % 2:
                letter = None
            elif d % 4 == 2 and mp == half - 1:
                letter = None  # receiver's wrap-around pair (d-1, 0)
            else:
                letter = m // 2
            rows.append(GoldenRow(name, d, "B1", sender, "B2", receiver, letter))
    return rows


def golden_rows(d: int) -> list[GoldenRow]:
    rows = _table_qudit(d)
    if d == 4:
        rows += _table1()
    if d == 6:
        rows += _table_qudit(6, "table6a") + _table6b()
    if d >= 6:
        rows += _table7(d)
    return rows


def _indices(d: int, basis: str, support: tuple) -> list[int]:
    if basis == "B0":
        return [support[0]]
    bid = B1 if basis == "B1" else B2
    for m in range(d // 2):
        if set(pair_members(d, bid, m)) == set(support):
            return [2 * m, 2 * m + 1]
    raise ValueError(f"{support} is not a {basis} pair for d={d}")


def check_golden_row(row: GoldenRow, rule: RuleFn = sift_symbol) -> list[tuple]:
    failures = []
    ab, bb = (B0, B1, B2)[int(row.alice_basis[1])], (B0, B1, B2)[int(row.bob_basis[1])]
    for ai, bi in product(_indices(row.d, row.alice_basis, row.alice_support),
                          _indices(row.d, row.bob_basis, row.bob_support)):
        va, vb = rule(row.d, ab, ai, bb, bi)
        got = []
        for v in (va, vb):
            if not v.is_symbol:
                got.append(None)
            elif row.table == "table1" and B2 in (ab, bb):
                got.append(ququart_b2_letter(v.symbol))
            else:
                got.append(v.symbol)
        if got != [row.letter, row.letter]:
            failures.append((row.table, row.d, row.alice_basis, ai, row.bob_basis, bi,
                             f"expected {row.letter}, got {got}"))
    return failures


def verify_rules(dims: Iterable[int], rule: RuleFn = sift_symbol) -> dict[int, list[tuple]]:
    """Unambiguity enumeration plus every golden row, per dimension."""
    report = {}
    for d in dims:
        failures = list(check_unambiguity(d, rule))
        for row in golden_rows(d):
            failures += check_golden_row(row, rule)
        report[d] = failures
    return report
