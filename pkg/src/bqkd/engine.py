"""Round-by-round execution of the boosted protocols and the two baselines.

Each party is a generator coroutine that yields either ``(SEND, message)``
or ``RECV`` and is resumed with the received message. The same coroutines
run under the in-process scheduler (:func:`run_protocol`) and under the
socket drivers (:func:`drive_party`, :func:`drive_relay`), which is what
makes transcripts identical across transports.

Message flow of a one-way run (bQKD, BB84Qudit)::

    Hello ⇄ Hello, QState × rounds,
    BasisReveal (A→B, B→A), DiscardSet (A→B, B→A),
    CheckSetRequest (A→B), CheckData (B→A, A→B), Abort|Done (A→B),
    Transcript (B→A, A→B)

Two-way runs (bSQKD, SQKD07) send every QState back to Alice, then Bob
announces his measured rounds before Alice reveals her bases.
"""

from __future__ import annotations

import enum
import hashlib
import json
import math
import threading
from collections import deque
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import accumulate

from . import rules
from .adversary import BACKWARD, FORWARD, Eavesdropper, EveKind, EveStrategy, Observation
from .errors import ConfigInvalid, ConfigMismatch, TransportFailure
from .qudit import BasisId, basis_for, measure
from .rules import B0, DISCARD, RoundClass, SiftOutcome, Symbol
from .seeding import ALICE_STREAM, BOB_STREAM, EVE_STREAM, UniformStream, split_seed
from .transport import Kind, WireMessage

SEND = "send"
RECV = ("recv",)
_DONE = ("done",)
NO_ROUND = -1

ALICE, BOB, EVE = "alice", "bob", "eve"


class Protocol(str, enum.Enum):
    BQKD = "bQKD"
    BSQKD = "bSQKD"
    BB84 = "BB84Qudit"
    SQKD07 = "SQKD07"

    @property
    def two_way(self) -> bool:
        return self in (Protocol.BSQKD, Protocol.SQKD07)

    @property
    def bases(self) -> tuple[BasisId, ...]:
        if self in (Protocol.BQKD, Protocol.BSQKD):
            return (BasisId.B0, BasisId.B1, BasisId.B2)
        return (BasisId.B0, BasisId.FOURIER)


def _normalize_probs(probs, n: int, name: str) -> tuple[float, ...]:
    if probs is None:
        return tuple([1.0 / n] * n)
    probs = tuple(float(p) for p in probs)
    if len(probs) != n:
        raise ConfigInvalid(f"{name} needs {n} entries, got {len(probs)}")
    if any(p < 0 or p > 1 for p in probs) or abs(sum(probs) - 1.0) > 1e-9:
        raise ConfigInvalid(f"{name} must be probabilities summing to 1, got {probs}")
    return probs


@dataclass(frozen=True)
class RunConfig:
    protocol: Protocol
    dim: int
    rounds: int
    seed: int = 0
    alice_basis_probs: tuple | None = None
    bob_basis_probs: tuple | None = None
    bob_measure_prob: float = 0.5
    check_fraction: float = 0.1
    abort_qber_threshold: float = 0.0
    eve: EveStrategy = field(default_factory=EveStrategy.none)

    def __post_init__(self):
        try:
            proto = Protocol(self.protocol)
        except ValueError:
            raise ConfigInvalid(f"unknown protocol {self.protocol!r}") from None
        object.__setattr__(self, "protocol", proto)
        d = self.dim
        if not isinstance(d, int) or d % 2:
            raise ConfigInvalid(f"dim must be an even integer, got {d!r}")
        if d < (2 if proto is Protocol.SQKD07 or proto is Protocol.BB84 else 4):
            raise ConfigInvalid(f"dim {d} too small for {proto.value}")
        if not isinstance(self.rounds, int) or self.rounds < 1:
            raise ConfigInvalid("rounds must be a positive integer")
        n = len(proto.bases)
        object.__setattr__(self, "alice_basis_probs",
                           _normalize_probs(self.alice_basis_probs, n, "alice_basis_probs"))
        if proto.two_way:
            if self.bob_basis_probs is not None:
                raise ConfigInvalid("bob_basis_probs does not apply to two-way protocols")
        else:
            object.__setattr__(self, "bob_basis_probs",
                               _normalize_probs(self.bob_basis_probs, n, "bob_basis_probs"))
        if not 0.0 <= self.bob_measure_prob <= 1.0:
            raise ConfigInvalid("bob_measure_prob must lie in [0, 1]")
        if not 0.0 < self.check_fraction < 1.0:
            raise ConfigInvalid("check_fraction must lie in (0, 1)")
        if not 0.0 <= self.abort_qber_threshold <= 1.0:
            raise ConfigInvalid("abort_qber_threshold must lie in [0, 1]")
        try:
            self.eve.validate(d, proto.two_way)
        except Exception as exc:  # surface strategy problems as config errors
            raise ConfigInvalid(f"eve strategy invalid: {exc}") from exc

    @property
    def two_way(self) -> bool:
        return self.protocol.two_way

    @property
    def bases(self) -> tuple[BasisId, ...]:
        return self.protocol.bases

    def shared_dict(self) -> dict:
        """Settings Alice and Bob must agree on (Eve's strategy is not among them)."""
        return {
            "protocol": self.protocol.value,
            "dim": self.dim,
            "rounds": self.rounds,
            "seed": self.seed,
            "alice_basis_probs": list(self.alice_basis_probs),
            "bob_basis_probs": list(self.bob_basis_probs) if self.bob_basis_probs else None,
            "bob_measure_prob": self.bob_measure_prob,
            "check_fraction": self.check_fraction,
            "abort_qber_threshold": self.abort_qber_threshold,
        }

    def config_hash(self) -> str:
        blob = json.dumps(self.shared_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def replace(self, **changes) -> "RunConfig":
        fields = {k: getattr(self, k) for k in self.__dataclass_fields__}
        fields.update(changes)
        if "protocol" in changes and "alice_basis_probs" not in changes:
            fields["alice_basis_probs"] = None
            fields["bob_basis_probs"] = None
        return RunConfig(**fields)


@dataclass(slots=True)
class RoundRecord:
    round: int
    protocol: str
    alice_basis: str
    alice_index: int
    bob_action: str  # "measure" or "reflect"
    bob_basis: str | None
    bob_outcome: int | None
    alice_return_outcome: int | None
    eve_forward: Observation | None
    eve_backward: Observation | None
    sift: tuple
    in_check_set: bool

    @property
    def round_class(self) -> RoundClass:
        return RoundClass(self.alice_basis, self.bob_basis if self.bob_action == "measure" else "reflect")

    def to_json(self) -> dict:
        return {
            "round": self.round,
            "protocol": self.protocol,
            "alice_basis": self.alice_basis,
            "alice_index": self.alice_index,
            "bob_action": self.bob_action,
            "bob_basis": self.bob_basis,
            "bob_outcome": self.bob_outcome,
            "alice_return_outcome": self.alice_return_outcome,
            "eve_forward": list(self.eve_forward) if self.eve_forward else None,
            "eve_backward": list(self.eve_backward) if self.eve_backward else None,
            "sift": [self.sift[0].to_json(), self.sift[1].to_json()],
            "in_check_set": self.in_check_set,
        }


def records_to_jsonl(records) -> bytes:
    """Canonical transcript bytes: one compact JSON object per record."""
    lines = [json.dumps(r.to_json(), separators=(",", ":")) for r in records]
    return ("\n".join(lines) + "\n").encode("utf-8")


# -- party-local sifting ------------------------------------------------------


@lru_cache(maxsize=1 << 16)
def alice_local_view(protocol: Protocol, d: int, ab: BasisId, ai: int,
                     bb: BasisId | None) -> SiftOutcome:
    """Alice's symbol from her own data plus the public bases (before discard sets merge)."""
    if protocol is Protocol.BQKD:
        if not rules.sender_keeps(d, ab, ai, bb):
            return DISCARD
        return Symbol(rules.alice_symbol(d, ab, ai, bb), rules.round_alphabet(d, ab, bb))
    if protocol is Protocol.BB84:
        return Symbol(ai, d) if ab is bb else DISCARD
    if bb is None:  # reflect round
        return DISCARD
    if protocol is Protocol.BSQKD:
        return rules.bsqkd_alice_symbol(d, ab, ai)
    return Symbol(ai, d) if ab is B0 else DISCARD


@lru_cache(maxsize=1 << 16)
def bob_local_view(protocol: Protocol, d: int, ab: BasisId, bb: BasisId | None,
                   bo: int | None) -> SiftOutcome:
    if protocol is Protocol.BQKD:
        if not rules.receiver_keeps(d, ab, bb, bo):
            return DISCARD
        return Symbol(rules.bob_symbol(d, ab, bb, bo), rules.round_alphabet(d, ab, bb))
    if protocol is Protocol.BB84:
        return Symbol(bo, d) if ab is bb else DISCARD
    if bb is None:
        return DISCARD
    if protocol is Protocol.BSQKD:
        return rules.bsqkd_symbol(d, ab, 0, True, bo)
    return Symbol(bo, d) if ab is B0 else DISCARD


@lru_cache(maxsize=1 << 16)
def round_views(protocol: Protocol, d: int, ab: BasisId, ai: int, bb: BasisId | None,
                bo: int | None) -> tuple[SiftOutcome, SiftOutcome]:
    """Both parties' views of one round after discards are exchanged."""
    if protocol is Protocol.BQKD:
        return rules.sift_symbol(d, ab, ai, bb, bo)
    if protocol is Protocol.BB84:
        return rules.matched_basis_symbol(d, ab, ai, bb, bo)
    if bb is None:
        return DISCARD, DISCARD
    a = alice_local_view(protocol, d, ab, ai, bb)
    b = bob_local_view(protocol, d, ab, bb, bo)
    if not (a.is_symbol and b.is_symbol):
        return DISCARD, DISCARD
    return a, b


def return_consistent(protocol: Protocol, ab: BasisId, ai: int, ret: int, measured: bool) -> bool:
    """Alice's check of the returned state in a two-way round.

    Reflected states must come back exactly; after Bob's computational
    measurement a pair state must come back inside the same pair.
    """
    if not measured or ab is B0 or protocol is Protocol.SQKD07:
        return ret == ai
    return ret // 2 == ai // 2


def _class_key(ab: str, bb: str | None) -> str:
    return str(RoundClass(ab, bb if bb is not None else "reflect"))


def _qber(errors: dict, counts: dict) -> dict:
    return {k: errors.get(k, 0) / n for k, n in sorted(counts.items()) if n}


def _abort_decision(qber: dict, threshold: float) -> bool:
    return any(rate > threshold for rate in qber.values())


# -- party coroutines ---------------------------------------------------------


def _hello(cfg: RunConfig, role: str) -> WireMessage:
    return WireMessage(Kind.HELLO, NO_ROUND, {"config_hash": cfg.config_hash(), "role": role})


def _expect(msg: WireMessage, *kinds: Kind) -> WireMessage:
    if msg.kind is Kind.ABORT and Kind.ABORT not in kinds:
        reason = (msg.payload or {}).get("reason", "")
        if "config" in reason:
            raise ConfigMismatch(reason)
        raise TransportFailure(f"peer aborted: {reason}")
    if msg.kind not in kinds:
        raise TransportFailure(f"expected {'/'.join(k.value for k in kinds)}, got {msg.kind.value}")
    return msg


def _check_hello(cfg: RunConfig, msg: WireMessage) -> None:
    _expect(msg, Kind.HELLO)
    theirs = (msg.payload or {}).get("config_hash")
    if theirs != cfg.config_hash():
        raise ConfigMismatch(f"config hash mismatch: ours {cfg.config_hash()[:12]}, theirs {str(theirs)[:12]}")


def _exchange_transcripts(own: dict, role: str, send_first: bool):
    """Swap transcripts; Eve's (if any) arrives just before the peer's."""
    mine = WireMessage(Kind.TRANSCRIPT, NO_ROUND, {"party": role, "data": own})
    if send_first:
        yield SEND, mine
    peer, eve = None, None
    while peer is None:
        msg = _expect((yield RECV), Kind.TRANSCRIPT)
        if msg.payload["party"] == EVE:
            eve = msg.payload["data"]
        else:
            peer = msg.payload["data"]
    if not send_first:
        yield SEND, mine
    return peer, eve


def alice_party(cfg: RunConfig):
    """Alice's side of any protocol; returns ``{"alice", "bob", "eve"}`` data."""
    d, proto = cfg.dim, cfg.protocol
    rng = UniformStream(split_seed(cfg.seed, ALICE_STREAM))
    bases = [basis_for(d, b) for b in cfg.bases]
    cdf = list(accumulate(cfg.alice_basis_probs))
    n = cfg.rounds

    yield SEND, _hello(cfg, ALICE)
    msg = yield RECV
    if msg.kind is Kind.ABORT:
        raise ConfigMismatch((msg.payload or {}).get("reason", "peer refused hello"))
    _check_hello(cfg, msg)

    a_basis = [0] * n
    a_index = [0] * n
    returns = [None] * n if cfg.two_way else None
    choice, below = rng.choice, rng.below
    for r in range(n):
        b = choice(cdf)
        i = below(d)
        a_basis[r], a_index[r] = b, i
        yield SEND, WireMessage(Kind.QSTATE, r, bases[b].vectors[i])
        if returns is not None:
            back = yield RECV
            if back.kind is not Kind.QSTATE or back.round != r:
                _expect(back, Kind.QSTATE)
                raise TransportFailure(f"returned state for round {back.round}, expected {r}")
            returns[r] = measure(back.payload, bases[b], rng)[0]

    ids = cfg.bases
    basis_names = [ids[b].value for b in a_basis]
    errors: dict = {}
    counts: dict = {}

    if not cfg.two_way:
        yield SEND, WireMessage(Kind.BASIS_REVEAL, NO_ROUND, {"bases": basis_names})
        bob_bases = _expect((yield RECV), Kind.BASIS_REVEAL).payload["bases"]
        bob_ids = [BasisId(x) for x in bob_bases]
        views = [alice_local_view(proto, d, ids[a_basis[r]], a_index[r], bob_ids[r]) for r in range(n)]
        own_discards = [r for r in range(n) if not views[r].is_symbol]
        yield SEND, WireMessage(Kind.DISCARD_SET, NO_ROUND, {"rounds": own_discards})
        bob_discards = set(_expect((yield RECV), Kind.DISCARD_SET).payload["rounds"])
        capable = [r for r in range(n) if views[r].is_symbol and r not in bob_discards]
        picks = rng.subset(len(capable), round(cfg.check_fraction * len(capable)))
        check = [capable[t] for t in picks]
        yield SEND, WireMessage(Kind.CHECK_SET_REQUEST, NO_ROUND, {"rounds": check})
        bob_syms = _expect((yield RECV), Kind.CHECK_DATA).payload["symbols"]
        own_syms = [views[r].symbol for r in check]
        yield SEND, WireMessage(Kind.CHECK_DATA, NO_ROUND, {"symbols": own_syms})
        for r, x, y in zip(check, own_syms, bob_syms):
            key = _class_key(basis_names[r], bob_bases[r])
            counts[key] = counts.get(key, 0) + 1
            if x != y:
                errors[key] = errors.get(key, 0) + 1
    else:
        measured = _expect((yield RECV), Kind.MEASURED_ROUNDS_REVEAL).payload["rounds"]
        measured_set = set(measured)
        yield SEND, WireMessage(Kind.BASIS_REVEAL, NO_ROUND, {"bases": basis_names})
        for r in range(n):
            if r in measured_set:
                continue
            key = _class_key(basis_names[r], None)
            counts[key] = counts.get(key, 0) + 1
            if returns[r] != a_index[r]:
                errors[key] = errors.get(key, 0) + 1
        views = {r: alice_local_view(proto, d, ids[a_basis[r]], a_index[r], B0) for r in measured}
        capable = [r for r in measured if views[r].is_symbol]
        picks = rng.subset(len(capable), round(cfg.check_fraction * len(capable)))
        check = [capable[t] for t in picks]
        yield SEND, WireMessage(Kind.CHECK_SET_REQUEST, NO_ROUND, {"rounds": check})
        bob_syms = _expect((yield RECV), Kind.CHECK_DATA).payload["symbols"]
        own_syms = [views[r].symbol for r in check]
        yield SEND, WireMessage(Kind.CHECK_DATA, NO_ROUND, {"symbols": own_syms})
        for r, x, y in zip(check, own_syms, bob_syms):
            key = _class_key(basis_names[r], B0.value)
            counts[key] = counts.get(key, 0) + 1
            ab = ids[a_basis[r]]
            if x != y or not return_consistent(proto, ab, a_index[r], returns[r], True):
                errors[key] = errors.get(key, 0) + 1
        # reflect rounds are all checked as well
        check = sorted(set(check) | (set(range(n)) - measured_set))

    qber = _qber(errors, counts)
    abort = _abort_decision(qber, cfg.abort_qber_threshold)
    kind = Kind.ABORT if abort else Kind.DONE
    reason = "check error rate above threshold" if abort else None
    yield SEND, WireMessage(kind, NO_ROUND, {"reason": reason, "qber": qber})

    own = {"bases": basis_names, "indices": a_index, "returns": returns,
           "check": check, "abort": abort, "qber": qber}
    bob, eve = yield from _exchange_transcripts(own, ALICE, send_first=False)
    return {"alice": own, "bob": bob, "eve": eve}


def bob_party(cfg: RunConfig):
    d, proto = cfg.dim, cfg.protocol
    rng = UniformStream(split_seed(cfg.seed, BOB_STREAM))
    n = cfg.rounds

    hello = yield RECV
    try:
        _check_hello(cfg, hello)
    except ConfigMismatch as exc:
        yield SEND, WireMessage(Kind.ABORT, NO_ROUND, {"reason": f"config mismatch: {exc}"})
        raise
    yield SEND, _hello(cfg, BOB)

    b_bases: list = [None] * n
    outcomes: list = [None] * n
    if not cfg.two_way:
        bases = [basis_for(d, b) for b in cfg.bases]
        cdf = list(accumulate(cfg.bob_basis_probs))
        names = [b.value for b in cfg.bases]
        for r in range(n):
            msg = yield RECV
            if msg.kind is not Kind.QSTATE or msg.round != r:
                _expect(msg, Kind.QSTATE)
                raise TransportFailure(f"state for round {msg.round}, expected {r}")
            b = rng.choice(cdf)
            b_bases[r] = names[b]
            outcomes[r] = measure(msg.payload, bases[b], rng)[0]
    else:
        comp = basis_for(d, B0)
        q = cfg.bob_measure_prob
        for r in range(n):
            msg = yield RECV
            if msg.kind is not Kind.QSTATE or msg.round != r:
                _expect(msg, Kind.QSTATE)
                raise TransportFailure(f"state for round {msg.round}, expected {r}")
            if rng.random() < q:
                k, post = measure(msg.payload, comp, rng)
                b_bases[r], outcomes[r] = B0.value, k
                yield SEND, WireMessage(Kind.QSTATE, r, post)
            else:
                yield SEND, WireMessage(Kind.QSTATE, r, msg.payload)

    if not cfg.two_way:
        alice_bases = _expect((yield RECV), Kind.BASIS_REVEAL).payload["bases"]
        yield SEND, WireMessage(Kind.BASIS_REVEAL, NO_ROUND, {"bases": b_bases})
        _expect((yield RECV), Kind.DISCARD_SET)
        a_ids = [BasisId(x) for x in alice_bases]
        views = [bob_local_view(proto, d, a_ids[r], BasisId(b_bases[r]), outcomes[r]) for r in range(n)]
        own_discards = [r for r in range(n) if not views[r].is_symbol]
        yield SEND, WireMessage(Kind.DISCARD_SET, NO_ROUND, {"rounds": own_discards})
    else:
        measured = [r for r in range(n) if outcomes[r] is not None]
        yield SEND, WireMessage(Kind.MEASURED_ROUNDS_REVEAL, NO_ROUND, {"rounds": measured})
        alice_bases = _expect((yield RECV), Kind.BASIS_REVEAL).payload["bases"]
        views = {r: bob_local_view(proto, d, BasisId(alice_bases[r]), B0, outcomes[r]) for r in measured}

    check = _expect((yield RECV), Kind.CHECK_SET_REQUEST).payload["rounds"]
    yield SEND, WireMessage(Kind.CHECK_DATA, NO_ROUND, {"symbols": [views[r].symbol for r in check]})
    _expect((yield RECV), Kind.CHECK_DATA)
    verdict = _expect((yield RECV), Kind.ABORT, Kind.DONE)

    own = {"bases": b_bases, "outcomes": outcomes}
    alice, eve = yield from _exchange_transcripts(own, BOB, send_first=True)
    return {"alice": alice, "bob": own, "eve": eve, "abort": verdict.kind is Kind.ABORT}


# -- Eve in the middle ----------------------------------------------------------


class Relay:
    """Eve's position on the line: she acts on QState frames only.

    Frames from Alice travel forward, frames from Bob travel backward.
    Classical frames pass untouched, except that Eve hands each party her
    own log just before the peer's transcript.
    """

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        rng = UniformStream(split_seed(cfg.seed, EVE_STREAM))
        self.eve = Eavesdropper(cfg.eve, cfg.dim, rng, cfg.two_way)
        self.transcripts_forwarded = 0

    def eve_data(self) -> dict:
        return {"strategy": self.cfg.eve.description,
                "log": [[e.round, e.direction, list(e.observation) if e.observation else None]
                        for e in self.eve.log.entries]}

    def on_frame(self, sender: str, msg: WireMessage) -> list[WireMessage]:
        kind = msg.kind
        if kind is Kind.QSTATE:
            direction = FORWARD if sender == ALICE else BACKWARD
            return [WireMessage(kind, msg.round, self.eve.apply(direction, msg.round, msg.payload))]
        if kind is Kind.HELLO and sender == ALICE:
            theirs = (msg.payload or {}).get("config_hash")
            if theirs != self.cfg.config_hash():
                raise ConfigMismatch("relay configuration does not match Alice's")
        if kind is Kind.TRANSCRIPT:
            self.transcripts_forwarded += 1
            eve = WireMessage(Kind.TRANSCRIPT, NO_ROUND, {"party": EVE, "data": self.eve_data()})
            return [eve, msg]
        return [msg]

    @property
    def finished(self) -> bool:
        return self.transcripts_forwarded >= 2


def _eve_maps(eve: dict | None, n: int) -> tuple[list, list]:
    fwd: list = [None] * n
    bwd: list = [None] * n
    if eve:
        for round_, direction, obs in eve["log"]:
            target = fwd if direction == FORWARD else bwd
            target[round_] = Observation(*obs) if obs else None
    return fwd, bwd


def assemble_records(cfg: RunConfig, alice: dict, bob: dict, eve: dict | None) -> list[RoundRecord]:
    """Join both parties' transcripts (and Eve's log) into per-round records."""
    d, proto, n = cfg.dim, cfg.protocol, cfg.rounds
    fwd, bwd = _eve_maps(eve, n)
    check = set(alice["check"])
    returns = alice["returns"]
    name = proto.value
    by_name = {b.value: b for b in BasisId}
    out = []
    for r in range(n):
        ab_name, ai = alice["bases"][r], alice["indices"][r]
        bb_name, bo = bob["bases"][r], bob["outcomes"][r]
        ab = by_name[ab_name]
        bb = by_name[bb_name] if bb_name is not None else None
        out.append(RoundRecord(
            r, name, ab_name, ai,
            "measure" if bo is not None else "reflect", bb_name, bo,
            returns[r] if returns is not None else None,
            fwd[r], bwd[r],
            round_views(proto, d, ab, ai, bb, bo),
            r in check,
        ))
    return out


# -- scheduling -----------------------------------------------------------------


def _step(gen, value):
    try:
        return gen.send(value)
    except StopIteration as stop:
        return _DONE + (stop.value,)


def _schedule(alice_gen, bob_gen, relay: Relay | None = None, wire=None) -> dict:
    """Run both party coroutines to completion with eager message delivery."""
    gens = {ALICE: alice_gen, BOB: bob_gen}
    peer = {ALICE: BOB, BOB: ALICE}
    inbox = {ALICE: deque(), BOB: deque()}
    op = {ALICE: _step(alice_gen, None), BOB: _step(bob_gen, None)}
    current = ALICE
    while True:
        o = op[current]
        other = peer[current]
        if o[0] == "done":
            if op[other][0] == "done":
                break
            current = other
            continue
        if o is RECV:
            box = inbox[current]
            if box:
                op[current] = _step(gens[current], box.popleft())
                continue
            if op[other] is RECV and not inbox[other] or op[other][0] == "done":
                raise TransportFailure(f"{current} is waiting but no message can arrive")
            current = other
            continue
        msg = o[1]
        frames = relay.on_frame(current, msg) if relay is not None else (msg,)
        for m in frames:
            if wire is not None:
                wire.send(m)
                m = wire.recv()
            inbox[other].append(m)
        op[current] = _step(gens[current], None)
        if op[other] is RECV:
            current = other
    return {ALICE: op[ALICE][1], BOB: op[BOB][1]}


def _relay_for(cfg: RunConfig) -> Relay | None:
    return Relay(cfg) if cfg.eve.kind is not EveKind.NONE else None


def run_protocol(cfg: RunConfig, transport=None, rng=None) -> list[RoundRecord]:
    """Execute one run in-process and return Alice's assembled records.

    ``transport`` is an optional :class:`~bqkd.transport.InProcessChannel`
    used as the wire (for example with ``serialize=True``). ``rng`` is an
    optional integer that replaces ``cfg.seed``.
    """
    if rng is not None:
        cfg = cfg.replace(seed=int(rng))
    out = _schedule(alice_party(cfg), bob_party(cfg), _relay_for(cfg), transport)
    a = out[ALICE]
    return assemble_records(cfg, a["alice"], a["bob"], a["eve"])


def run_protocol_views(cfg: RunConfig, transport=None) -> tuple[list, list]:
    """Records as assembled independently by Alice and by Bob."""
    out = _schedule(alice_party(cfg), bob_party(cfg), _relay_for(cfg), transport)
    a, b = out[ALICE], out[BOB]
    return (assemble_records(cfg, a["alice"], a["bob"], a["eve"]),
            assemble_records(cfg, b["alice"], b["bob"], b["eve"]))


def _require(cfg: RunConfig, *protocols: Protocol) -> None:
    if cfg.protocol not in protocols:
        raise ConfigInvalid(f"protocol {cfg.protocol.value} not handled here")


def run_bqkd(cfg: RunConfig, transport=None, rng=None) -> list[RoundRecord]:
    _require(cfg, Protocol.BQKD)
    return run_protocol(cfg, transport, rng)


def run_bsqkd(cfg: RunConfig, transport=None, rng=None) -> list[RoundRecord]:
    _require(cfg, Protocol.BSQKD)
    return run_protocol(cfg, transport, rng)


def run_baseline(cfg: RunConfig, transport=None, rng=None) -> list[RoundRecord]:
    _require(cfg, Protocol.BB84, Protocol.SQKD07)
    return run_protocol(cfg, transport, rng)


# -- socket drivers ---------------------------------------------------------------


def drive_party(gen, channel):
    """Run a party coroutine over a blocking channel; returns its result."""
    o = _step(gen, None)
    while o[0] != "done":
        if o is RECV:
            o = _step(gen, channel.recv())
        else:
            channel.send(o[1])
            o = _step(gen, None)
    return o[1]


def drive_relay(relay: Relay, alice_ch, bob_ch) -> dict:
    """Forward frames between two socket channels until both transcripts passed."""
    import selectors

    sel = selectors.DefaultSelector()
    sel.register(alice_ch.sock, selectors.EVENT_READ, ALICE)
    sel.register(bob_ch.sock, selectors.EVENT_READ, BOB)
    chans = {ALICE: alice_ch, BOB: bob_ch}
    peer = {ALICE: BOB, BOB: ALICE}
    try:
        while not relay.finished:
            ready = [s for s in (ALICE, BOB) if chans[s].has_buffered_frame()]
            if not ready:
                ready = [key.data for key, _ in sel.select(timeout=120)]
                if not ready:
                    raise TransportFailure("relay timed out waiting for traffic")
            for side in ready:
                msg = chans[side].recv()
                try:
                    frames = relay.on_frame(side, msg)
                except ConfigMismatch as exc:
                    chans[side].send(WireMessage(Kind.ABORT, NO_ROUND, {"reason": f"config mismatch: {exc}"}))
                    raise
                for m in frames:
                    chans[peer[side]].send(m)
    finally:
        sel.close()
    return relay.eve_data()


def run_socket_local(cfg: RunConfig, with_relay: bool | None = None, host: str = "127.0.0.1"):
    """Run Alice, Bob (and Eve's relay) as threads talking over loopback TCP.

    Returns Alice's assembled records. Used for transport-equivalence checks
    without spawning processes.
    """
    from .transport import accept, connect, listen

    if with_relay is None:
        with_relay = cfg.eve.kind is not EveKind.NONE
    results: dict = {}
    failures: list = []

    def guard(name, fn):
        try:
            results[name] = fn()
        except BaseException as exc:  # re-raised in the caller
            failures.append((name, exc))

    bob_srv = listen(f"{host}:0")
    bob_ep = "%s:%d" % bob_srv.getsockname()[:2]
    threads = []

    def bob_main():
        ch = accept(bob_srv)
        try:
            return drive_party(bob_party(cfg), ch)
        finally:
            ch.close()
            bob_srv.close()

    threads.append(threading.Thread(target=guard, args=(BOB, bob_main)))
    alice_ep = bob_ep
    if with_relay:
        relay_srv = listen(f"{host}:0")
        alice_ep = "%s:%d" % relay_srv.getsockname()[:2]

        def relay_main():
            to_bob = connect(bob_ep)
            from_alice = accept(relay_srv)
            try:
                return drive_relay(Relay(cfg), from_alice, to_bob)
            finally:
                from_alice.close()
                to_bob.close()
                relay_srv.close()

        threads.append(threading.Thread(target=guard, args=(EVE, relay_main)))

    def alice_main():
        ch = connect(alice_ep)
        try:
            return drive_party(alice_party(cfg), ch)
        finally:
            ch.close()

    threads.append(threading.Thread(target=guard, args=(ALICE, alice_main)))
    for t in threads:
        t.start()
    for t in threads:
        t.join(timeout=600)
    if failures:
        raise failures[0][1]
    a = results[ALICE]
    return assemble_records(cfg, a["alice"], a["bob"], a["eve"])


# -- sifting aggregation ----------------------------------------------------------


@dataclass
class SiftResult:
    alice_key: list
    bob_key: list
    check_pairs: list
    qber_by_class: dict
    checked_by_class: dict
    abort: bool

    @property
    def keys_agree(self) -> bool:
        return self.alice_key == self.bob_key


def round_error(rec: RoundRecord) -> bool | None:
    """Whether a round shows an error when compared; ``None`` if it has no check."""
    proto = Protocol(rec.protocol)
    a, b = rec.sift
    if proto.two_way:
        ab = BasisId(rec.alice_basis)
        if rec.bob_action == "reflect":
            return rec.alice_return_outcome != rec.alice_index
        if not a.is_symbol:
            return None
        consistent = return_consistent(proto, ab, rec.alice_index, rec.alice_return_outcome, True)
        return a != b or not consistent
    if not a.is_symbol:
        return None
    return a != b


def sift(records, cfg: RunConfig) -> SiftResult:
    """Split records into key and check rounds and compute per-class error rates.

    The check set itself is chosen by Alice during the run (``in_check_set``);
    this function only aggregates.
    """
    alice_key, bob_key, check_pairs = [], [], []
    errors: dict = {}
    counts: dict = {}
    for rec in records:
        a, b = rec.sift
        if rec.in_check_set:
            err = round_error(rec)
            if err is None:
                continue
            cls = rec.round_class
            counts[cls] = counts.get(cls, 0) + 1
            errors[cls] = errors.get(cls, 0) + int(err)
            if a.is_symbol:
                check_pairs.append((rec.round, a, b))
        elif a.is_symbol:
            alice_key.append(a)
            bob_key.append(b)
    qber = {cls: errors[cls] / counts[cls] for cls in sorted(counts)}
    abort = any(v > cfg.abort_qber_threshold for v in qber.values())
    return SiftResult(alice_key, bob_key, check_pairs, qber, dict(sorted(counts.items())), abort)


def error_by_class(records) -> dict:
    """Error rate over every comparable round (check set or not), per class.

    A diagnostic the parties could not compute publicly; used to compare
    simulation frequencies with closed forms.
    """
    errors: dict = {}
    counts: dict = {}
    for rec in records:
        err = round_error(rec)
        if err is None:
            continue
        cls = rec.round_class
        counts[cls] = counts.get(cls, 0) + 1
        errors[cls] = errors.get(cls, 0) + int(err)
    return {cls: (errors[cls] / counts[cls], counts[cls]) for cls in sorted(counts)}


def log2_alphabet(outcome: SiftOutcome) -> float:
    return math.log2(outcome.alphabet) if outcome.is_symbol else 0.0
