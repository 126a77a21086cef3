"""Eavesdropper strategies acting on in-flight states, with a private log."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import DimensionMismatch, DirectionUnsupported, InvalidPartition
from .qudit import (
    AncillaMap,
    BasisId,
    StateVector,
    apply_entangler,
    basis_for,
    block_probabilities,
    check_unitary,
    copy_unitary,
    extract_ancilla_map,
    measure,
    project_subspace,
    validate_partition,
)
from . import rules

FORWARD = "forward"
BACKWARD = "backward"


class EveKind(str, enum.Enum):
    NONE = "none"
    SUBSPACE = "subspace"
    INTERCEPT_RESEND = "intercept_resend"
    COPY = "copy"
    GENERAL = "general"
    TWO_WAY = "two_way"


@dataclass(frozen=True, eq=False)
class EveStrategy:
    """Tagged description of an adversary.

    ``unitary`` acts on travel ⊗ ancilla (travel-major) with a blank ancilla
    of dimension ``d_eve``; for two-way attacks it is the forward unitary and
    ``backward_unitary`` the one applied on the return trip.
    """

    kind: EveKind = EveKind.NONE
    blocks: tuple | None = None
    bases: tuple | None = None
    unitary: np.ndarray | None = None
    d_eve: int | None = None
    backward_unitary: np.ndarray | None = None
    backward_d_eve: int | None = None
    description: dict = field(default_factory=dict)

    @classmethod
    def none(cls) -> "EveStrategy":
        return cls(EveKind.NONE, description={"kind": "none"})

    @classmethod
    def subspace(cls, blocks) -> "EveStrategy":
        blocks = tuple(tuple(int(i) for i in blk) for blk in blocks)
        return cls(EveKind.SUBSPACE, blocks=blocks,
                   description={"kind": "subspace", "blocks": [list(b) for b in blocks]})

    @classmethod
    def intercept_resend(cls, bases) -> "EveStrategy":
        bases = tuple(BasisId(b) for b in bases)
        if not bases:
            raise ValueError("intercept-resend needs at least one basis")
        return cls(EveKind.INTERCEPT_RESEND, bases=bases,
                   description={"kind": "intercept_resend", "bases": [b.value for b in bases]})

    @classmethod
    def copy(cls, d: int) -> "EveStrategy":
        return cls(EveKind.COPY, unitary=copy_unitary(d), d_eve=d, description={"kind": "copy"})

    @classmethod
    def general(cls, unitary, d_eve: int, description: dict | None = None) -> "EveStrategy":
        U = check_unitary(unitary)
        return cls(EveKind.GENERAL, unitary=U, d_eve=d_eve,
                   description=description or {"kind": "general", "d_eve": d_eve})

    @classmethod
    def two_way(cls, forward, backward, d_eve: int, backward_d_eve: int | None = None,
                description: dict | None = None) -> "EveStrategy":
        return cls(EveKind.TWO_WAY, unitary=check_unitary(forward), d_eve=d_eve,
                   backward_unitary=check_unitary(backward),
                   backward_d_eve=backward_d_eve or d_eve,
                   description=description or {"kind": "two_way", "d_eve": d_eve})

    @property
    def entangling(self) -> bool:
        return self.kind in (EveKind.COPY, EveKind.GENERAL, EveKind.TWO_WAY)

    def forward_map(self, d: int) -> AncillaMap:
        return extract_ancilla_map(self.unitary, d, self.d_eve)

    def backward_map(self, d: int) -> AncillaMap:
        return extract_ancilla_map(self.backward_unitary, d, self.backward_d_eve)

    def validate(self, d: int, two_way_protocol: bool) -> None:
        if self.kind is EveKind.SUBSPACE:
            validate_partition(self.blocks, d)
        if self.kind is EveKind.INTERCEPT_RESEND:
            for b in self.bases:
                basis_for(d, b)
        if self.entangling:
            if self.unitary.shape[0] != d * self.d_eve:
                raise DimensionMismatch(f"forward unitary does not act on {d}·{self.d_eve}")
        if self.kind is EveKind.TWO_WAY:
            if not two_way_protocol:
                raise DirectionUnsupported("two-way attacks need a two-way protocol")
            if self.backward_unitary.shape[0] != d * self.backward_d_eve:
                raise DimensionMismatch("backward unitary has the wrong size")


class Observation(NamedTuple):
    """What Eve saw: ``kind`` is a basis name or ``"block"``."""

    kind: str
    value: int


class EveLogEntry(NamedTuple):
    round: int
    direction: str
    observation: Observation | None
    guessed_symbol: int | None = None


class EveLog:
    def __init__(self):
        self.entries: list[EveLogEntry] = []
        self._seen: set = set()

    def add(self, round_: int, direction: str, observation: Observation | None) -> None:
        if (round_, direction) in self._seen:
            raise ValueError(f"round {round_} already has a {direction} entry")
        self._seen.add((round_, direction))
        self.entries.append(EveLogEntry(round_, direction, observation))

    def observations(self, direction: str = FORWARD) -> dict[int, Observation | None]:
        return {e.round: e.observation for e in self.entries if e.direction == direction}

    def __len__(self) -> int:
        return len(self.entries)


def eve_apply(strategy: EveStrategy, direction: str, s: StateVector, eve_registers: dict,
              rng, log: EveLog | None = None, round_: int = 0,
              two_way_protocol: bool = False) -> StateVector:
    """Let Eve act on one in-flight state and return what she forwards.

    Non-two-way strategies attack the forward trip only; their backward
    action is the identity. Entangling strategies keep their ancilla inside
    the returned joint state; ``eve_registers`` records its size per round.
    """
    if direction not in (FORWARD, BACKWARD):
        raise DirectionUnsupported(direction)
    if direction == BACKWARD and not two_way_protocol:
        raise DirectionUnsupported("backward transit only exists in two-way protocols")
    kind = strategy.kind
    if kind is EveKind.NONE or (direction == BACKWARD and kind is not EveKind.TWO_WAY):
        return s
    obs = None
    if kind is EveKind.SUBSPACE:
        k, out = project_subspace(s, strategy.blocks, rng)
        obs = Observation("block", k)
    elif kind is EveKind.INTERCEPT_RESEND:
        bases = strategy.bases
        basis_id = bases[int(rng.random() * len(bases))] if len(bases) > 1 else bases[0]
        k, out = measure(s, basis_for(s.dim, basis_id), rng)
        obs = Observation(basis_id.value, k)
    else:
        if direction == FORWARD:
            U, d_eve = strategy.unitary, strategy.d_eve
        else:
            U, d_eve = strategy.backward_unitary, strategy.backward_d_eve
        if U.shape[0] != s.dim * d_eve:
            raise DimensionMismatch(f"unitary of size {U.shape[0]} vs state dim {s.dim}")
        out = apply_entangler(s, U, d_eve)
        eve_registers.setdefault(round_, []).append((direction, d_eve))
    if log is not None:
        log.add(round_, direction, obs)
    return out


class Eavesdropper:
    """Stateful wrapper around :func:`eve_apply` used by the relay."""

    def __init__(self, strategy: EveStrategy, dim: int, rng, two_way_protocol: bool = False):
        strategy.validate(dim, two_way_protocol)
        self.strategy = strategy
        self.dim = dim
        self.rng = rng
        self.two_way = two_way_protocol
        self.registers: dict = {}
        self.log = EveLog()

    def apply(self, direction: str, round_: int, s: StateVector) -> StateVector:
        if s.dim != self.dim:
            raise DimensionMismatch(f"state dim {s.dim} vs strategy dim {self.dim}")
        return eve_apply(self.strategy, direction, s, self.registers, self.rng,
                         self.log, round_, self.two_way)


# -- Eve's key guesses --------------------------------------------------------


@dataclass(frozen=True)
class EveGuess:
    round: int
    candidates: tuple
    alphabet: int

    @property
    def symbol(self) -> int | None:
        """Deterministic guess, when her observation pins the symbol down."""
        return self.candidates[0] if len(self.candidates) == 1 else None

    @property
    def informative(self) -> bool:
        return 0 < len(self.candidates) < self.alphabet

    @property
    def info_bits(self) -> float:
        if not self.candidates:
            return 0.0
        return math.log2(self.alphabet / len(self.candidates))


def _compatible_indices(d: int, alice_basis: BasisId, obs: Observation, blocks) -> list[int]:
    A = basis_for(d, alice_basis)
    if obs.kind == "block":
        weights = np.array([block_probabilities(A[i], blocks)[obs.value] for i in range(d)])
    else:
        v = basis_for(d, BasisId(obs.kind))[obs.value]
        weights = np.abs(A.adjoint @ v.amps) ** 2
    return [i for i in range(d) if weights[i] > 1e-12]


def alice_key_symbol(protocol: str, d: int, alice_basis: BasisId, alice_index: int,
                     bob_basis: BasisId | None) -> int | None:
    """Alice's symbol for a round if she keeps it, given the revealed bases."""
    if protocol == "bQKD":
        if not rules.sender_keeps(d, alice_basis, alice_index, bob_basis):
            return None
        return rules.alice_symbol(d, alice_basis, alice_index, bob_basis)
    if protocol == "bSQKD":
        return rules.bsqkd_alice_symbol(d, alice_basis, alice_index).symbol
    return alice_index


def eve_guess_key(strategy: EveStrategy, records, dim: int) -> list[EveGuess | None]:
    """Eve's per-round candidate symbols after the public sifting data is out.

    Only strategies with classical observations produce guesses; for every
    other strategy, and for discarded rounds, the entry is ``None``. The
    candidate set holds Alice's symbols over every kept Alice state
    compatible with what Eve observed.
    """
    out: list[EveGuess | None] = []
    classical = strategy.kind in (EveKind.SUBSPACE, EveKind.INTERCEPT_RESEND)
    for rec in records:
        obs = rec.eve_forward
        if not classical or obs is None or rec.sift is None or not rec.sift[0].is_symbol:
            out.append(None)
            continue
        ab = BasisId(rec.alice_basis)
        bb = BasisId(rec.bob_basis) if rec.bob_basis else None
        cands = set()
        for i in _compatible_indices(dim, ab, Observation(*obs), strategy.blocks):
            sym = alice_key_symbol(rec.protocol, dim, ab, i, bb)
            if sym is not None:
                cands.add(sym)
        out.append(EveGuess(rec.round, tuple(sorted(cands)), rec.sift[0].alphabet))
    return out
