"""Closed-form rates and detection probabilities, plus Monte Carlo estimators.

Key-generation rates are expected sifted bits per transmitted state.
Detection probabilities are per compared round of one class unless a
number of rounds ``l`` is given, in which case the value is the chance
that at least one of ``l`` such rounds shows an error.
"""

from __future__ import annotations

import csv
import io
import json
import math
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from . import rules
from .adversary import EveKind, EveStrategy, eve_guess_key
from .engine import (
    Protocol,
    RoundRecord,
    RunConfig,
    error_by_class,
    return_consistent,
    round_views,
    run_protocol,
    sift,
)
from .errors import IndexOutOfRange, MissingAncillaMap, NotNormalized, UnsupportedDimension
from .qudit import AncillaMap, BasisId, basis_for, block_probabilities
from .rules import B0, B1, B2, RoundClass
from .seeding import split_seed

TOL = 1e-9


def shannon_entropy(p) -> float:
    """``-Σ p_i log2 p_i`` in bits, with ``0 log 0 = 0``."""
    p = np.asarray(p, dtype=float)
    if (p < -TOL).any() or abs(p.sum() - 1.0) > TOL:
        raise NotNormalized(f"not a probability vector: {p.tolist()}")
    nz = p[p > 0]
    return float(-(nz * np.log2(nz)).sum()) + 0.0


# -- key-generation rates ---------------------------------------------------------


@dataclass
class KgrBreakdown:
    """Per basis-pair class: probability of the class and expected bits per round of it."""

    d: int
    class_prob: dict
    class_bits: dict
    total: float

    def rows(self):
        for cls in self.class_prob:
            yield cls, self.class_prob[cls], self.class_bits[cls]


def cross_class_bits(d: int) -> float:
    """Expected bits per round of one ordered B1×B2 class."""
    if d == 4:
        return 0.0
    if d % 4 == 0:
        return 0.5 * math.log2(d / 4)
    n = (d - 2) // 4
    dist = [1 / (2 * n), 1 / (2 * n)] + [1 / n] * (n - 1)
    return n / (2 * n + 1) * shannon_entropy(dist)


def class_bits(d: int, alice_basis: BasisId, bob_basis: BasisId) -> float:
    if alice_basis is bob_basis:
        return math.log2(d)
    if B0 in (alice_basis, bob_basis):
        return math.log2(d / 2)
    return cross_class_bits(d)


def kgr_bqkd(d: int, basis_probs=None, bob_basis_probs=None) -> KgrBreakdown:
    """Analytic rate of the three-basis protocol; probabilities default to uniform."""
    if d % 2 or d < 4:
        raise UnsupportedDimension(f"kgr_bqkd needs even d >= 4, got {d}")
    pa = tuple(basis_probs) if basis_probs is not None else (1 / 3, 1 / 3, 1 / 3)
    pb = tuple(bob_basis_probs) if bob_basis_probs is not None else pa
    probs, bits = {}, {}
    for (a, ab), (b, bb) in product(enumerate((B0, B1, B2)), repeat=2):
        cls = RoundClass(ab.value, bb.value)
        probs[cls] = pa[a] * pb[b]
        bits[cls] = class_bits(d, ab, bb)
    total = sum(probs[c] * bits[c] for c in probs)
    return KgrBreakdown(d, probs, bits, total)


def kgr_bb84(d: int) -> float:
    """Two-basis qudit prepare-and-measure baseline with uniform basis choice."""
    if d < 2:
        raise UnsupportedDimension(f"d must be >= 2, got {d}")
    return math.log2(d) / 2


def kgr_baselines(d: int) -> float:
    return kgr_bb84(d)


def kgr_bsqkd(d: int, q: float = 0.5, basis_probs=None) -> float:
    """Semi-quantum rate: Bob measures w.p. ``q``; B0 carries log2 d, pairs log2(d/2)."""
    if d % 2 or d < 4:
        raise UnsupportedDimension(f"kgr_bsqkd needs even d >= 4, got {d}")
    pa = tuple(basis_probs) if basis_probs is not None else (1 / 3, 1 / 3, 1 / 3)
    return q * (pa[0] * math.log2(d) + (pa[1] + pa[2]) * math.log2(d / 2))


def kgr_sqkd07(d: int, q: float = 0.5, basis_probs=None) -> float:
    """Two-basis semi-quantum baseline: only measured computational rounds are kept."""
    pa = tuple(basis_probs) if basis_probs is not None else (0.5, 0.5)
    return q * pa[0] * math.log2(d)


def analytic_kgr(cfg: RunConfig) -> float:
    proto, d = cfg.protocol, cfg.dim
    if proto is Protocol.BQKD:
        return kgr_bqkd(d, cfg.alice_basis_probs, cfg.bob_basis_probs).total
    if proto is Protocol.BSQKD:
        return kgr_bsqkd(d, cfg.bob_measure_prob, cfg.alice_basis_probs)
    if proto is Protocol.SQKD07:
        return kgr_sqkd07(d, cfg.bob_measure_prob, cfg.alice_basis_probs)
    pa, pb = cfg.alice_basis_probs, cfg.bob_basis_probs
    return (pa[0] * pb[0] + pa[1] * pb[1]) * math.log2(d)


def kgr_ratio_curve(d_list) -> list[dict]:
    rows = []
    for d in d_list:
        a, b = kgr_bqkd(d).total, kgr_bb84(d)
        rows.append({"d": d, "kgr_bqkd": a, "kgr_bb84": b, "ratio": a / b})
    return rows


RATIO_COLUMNS = ("d", "kgr_bqkd", "kgr_bb84", "ratio")
DETECTION_COLUMNS = ("l", "p_detect_analytic", "p_detect_empirical")


def write_csv(rows, columns, fh) -> None:
    w = csv.DictWriter(fh, fieldnames=list(columns), extrasaction="ignore", lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow(row)


def csv_text(rows, columns) -> str:
    buf = io.StringIO()
    write_csv(rows, columns, buf)
    return buf.getvalue()


# -- detection probabilities: classical attacks ----------------------------------------


def detect_within(p: float, l: int) -> float:
    """Chance that at least one of ``l`` independent rounds shows an error."""
    return 1.0 - (1.0 - p) ** l


def subspace_detection(l: int) -> float:
    """Block-measuring Eve on a split pair: per-round error 1/2."""
    return detect_within(0.5, l)


# Per-round error in a compared round for d=4 intercept-resend, keyed by
# (basis shared by Alice and Bob, Eve's basis).
INTERCEPT_RESEND_TABLE = {
    ("B0", "B0"): 0.0, ("B0", "B1"): 0.5, ("B0", "B2"): 0.5,
    ("B1", "B0"): 0.5, ("B1", "B1"): 0.0, ("B1", "B2"): 0.75,
    ("B2", "B0"): 0.5, ("B2", "B1"): 0.75, ("B2", "B2"): 0.0,
}


def _post_eve_states(d: int, eve: EveStrategy, sent):
    """Distribution over (observation, forwarded state) for a classical Eve."""
    if eve.kind is EveKind.NONE:
        return [(1.0, None, sent)]
    if eve.kind is EveKind.SUBSPACE:
        out = []
        for k, w in enumerate(block_probabilities(sent, eve.blocks)):
            if w < 1e-15:
                continue
            proj = np.zeros(d, dtype=complex)
            idx = list(eve.blocks[k])
            proj[idx] = sent.amps[idx]
            out.append((float(w), ("block", k), proj / np.linalg.norm(proj)))
        return out
    if eve.kind is EveKind.INTERCEPT_RESEND:
        out = []
        for bid in eve.bases:
            E = basis_for(d, bid)
            probs = np.abs(E.adjoint @ sent.amps) ** 2
            for k, w in enumerate(probs):
                if w > 1e-15:
                    out.append((float(w) / len(eve.bases), (bid.value, k), E[k].amps))
        return out
    raise ValueError("exact enumeration covers classical strategies only")


def exact_class_errors(d: int, eve: EveStrategy, protocol: Protocol = Protocol.BQKD) -> dict:
    """Exact per-class error rate among kept rounds of a one-way protocol.

    Enumerates Alice's uniform index, Eve's observation and Bob's outcome
    with Born weights; classes with no kept rounds are omitted.
    """
    out = {}
    for ab, bb in product(protocol.bases, repeat=2):
        A, Bm = basis_for(d, ab), basis_for(d, bb)
        kept = err = 0.0
        for i in range(d):
            for w_e, _, fwd in _post_eve_states(d, eve, A[i]):
                amps = fwd.amps if hasattr(fwd, "amps") else fwd
                probs = np.abs(Bm.adjoint @ amps) ** 2
                for k, w_b in enumerate(probs):
                    if w_b < 1e-15:
                        continue
                    va, vb = round_views(protocol, d, ab, i, bb, k)
                    if va.is_symbol:
                        w = w_e * w_b / d
                        kept += w
                        err += w * (va != vb)
        if kept > 0:
            out[RoundClass(ab.value, bb.value)] = float(err / kept)
    return out


# -- detection probabilities: entangling attacks (closed forms) -----------------------


def _pair(d: int, basis: BasisId, index: int) -> tuple[int, int, int]:
    """Members ``(a, b)`` and sign of the pair-basis vector ``(|a⟩ + σ|b⟩)/√2``."""
    a, b = rules.pair_members(d, basis, index // 2)
    return a, b, 1 if index % 2 == 0 else -1


def _nsq(v) -> float:
    return float(np.vdot(v, v).real)


def _require_map(E, name="forward"):
    if E is None:
        raise MissingAncillaMap(f"{name} ancilla map is required")


def gea_detection(E: AncillaMap, alice_basis, alice_index: int, bob_basis) -> float:
    """Per-round detection probability of a one-way entangling attack.

    Covers the same-basis classes and the classes with one computational
    side; the B1×B2 classes are discarded at d = 4 and have no table entry.
    """
    _require_map(E)
    d = E.d_travel
    ab, bb = BasisId(alice_basis), BasisId(bob_basis)
    i = alice_index
    if not 0 <= i < d:
        raise IndexOutOfRange(f"index {i} outside [0, {d})")
    V = E.vectors
    if ab is B0 and bb is B0:
        return 1.0 - _nsq(V[i, i])
    if ab is bb:
        a, b, s = _pair(d, ab, i)
        p = 0.25 * _nsq(V[a, a] + s * V[a, b] + s * V[b, a] + V[b, b])
        return 1.0 - p
    if ab is B0:
        m = rules.pair_containing(d, bb, i)
        a, b = rules.pair_members(d, bb, m)
        k = b if a == i else a
        p_plus = 0.5 * _nsq(V[i, i] + V[i, k])
        p_minus = 0.5 * _nsq(V[i, i] - V[i, k])
        return 1.0 - p_plus - p_minus
    if bb is B0:
        a, b, s = _pair(d, ab, i)
        p_a = 0.5 * _nsq(V[a, a] + s * V[b, a])
        p_b = 0.5 * _nsq(V[a, b] + s * V[b, b])
        return 1.0 - p_a - p_b
    raise ValueError(f"no closed form for the {ab.value}×{bb.value} class")


def gea_cases(d: int = 4):
    """Every (alice_basis, alice_index, bob_basis) case with a closed form."""
    cases = []
    for ab, bb in product((B0, B1, B2), repeat=2):
        if {ab, bb} == {B1, B2}:
            continue
        cases += [(ab, i, bb) for i in range(d)]
    return cases


def two_way_detection(E: AncillaMap, F: AncillaMap, alice_basis, alice_index: int,
                      bob_measures: bool) -> float:
    """Per-round detection probability of a two-way entangling attack on bSQKD."""
    _require_map(E, "forward")
    _require_map(F, "backward")
    d = E.d_travel
    ab, i = BasisId(alice_basis), alice_index
    if not 0 <= i < d:
        raise IndexOutOfRange(f"index {i} outside [0, {d})")
    Ev, Fv = E.vectors, F.vectors
    if bob_measures:
        if ab is B0:
            return 1.0 - _nsq(Ev[i, i]) * _nsq(Fv[i, i])
        a, b, s = _pair(d, ab, i)
        p_sa = 0.5 * _nsq(Ev[a, a] + s * Ev[b, a])
        p_sb = 0.5 * _nsq(Ev[a, b] + s * Ev[b, b])
        p_a = _nsq(Fv[a, a]) + _nsq(Fv[a, b])
        p_b = _nsq(Fv[b, b]) + _nsq(Fv[b, a])
        return 1.0 - p_sa * p_a - p_sb * p_b
    if ab is B0:
        amp = sum(np.kron(Ev[i, j], Fv[j, i]) for j in range(d))
        return 1.0 - _nsq(amp)
    a, b, s = _pair(d, ab, i)
    sign = {a: 1, b: s}
    amp = sum(sign[m] * sign[n] * np.kron(Ev[m, k], Fv[k, n])
              for k in range(d) for m in (a, b) for n in (a, b))
    return 1.0 - 0.25 * _nsq(amp)


def two_way_cases(d: int = 4):
    return [(ab, i, meas) for meas in (True, False) for ab in (B0, B1, B2) for i in range(d)]


def detection_closed_forms(attack: str, **params) -> float:
    """Dispatch to the closed form for ``attack``.

    ``subspace``: ``l``. ``intercept_resend``: ``basis`` (shared by Alice
    and Bob) and ``eve_basis``, optional ``l``. ``general``: ``E``,
    ``alice_basis``, ``alice_index``, ``bob_basis``, optional ``l``.
    ``two_way``: ``E``, ``F``, ``alice_basis``, ``alice_index``,
    ``bob_measures``, optional ``l``.
    """
    l = params.get("l", 1)
    if attack == "subspace":
        return subspace_detection(l)
    if attack == "intercept_resend":
        p = INTERCEPT_RESEND_TABLE[(str(BasisId(params["basis"]).value), BasisId(params["eve_basis"]).value)]
        return detect_within(p, l)
    if attack in ("general", "copy"):
        p = gea_detection(params.get("E"), params["alice_basis"], params["alice_index"], params["bob_basis"])
        return detect_within(p, l)
    if attack == "two_way":
        if params.get("E") is None or params.get("F") is None:
            raise MissingAncillaMap("two-way closed forms need both E and F")
        p = two_way_detection(params["E"], params["F"], params["alice_basis"], params["alice_index"],
                              params["bob_measures"])
        return detect_within(p, l)
    raise ValueError(f"unknown attack {attack!r}")


# -- Monte Carlo estimators ----------------------------------------------------------


def gea_monte_carlo(U: np.ndarray, d_eve: int, alice_basis, alice_index: int, bob_basis,
                    rounds: int, rng: np.random.Generator) -> tuple[int, int]:
    """Batched joint-state simulation of one case; returns (errors, kept rounds).

    ``U`` acts on ``|ψ⟩⊗|0⟩``; Bob's outcome is drawn from the partial
    projection of the joint state onto his basis, and rounds are classified
    with the key rule.
    """
    d = U.shape[0] // d_eve
    ab, bb = BasisId(alice_basis), BasisId(bob_basis)
    psi = basis_for(d, ab)[alice_index].amps
    joint = (U @ np.kron(psi, np.eye(d_eve)[0])).reshape(d, d_eve)
    overlaps = basis_for(d, bb).adjoint @ joint
    probs = np.einsum("ke,ke->k", overlaps, overlaps.conj()).real
    cdf = np.cumsum(probs)
    outcomes = np.minimum(np.searchsorted(cdf, rng.random(rounds), side="right"), d - 1)
    counts = np.bincount(outcomes, minlength=d)
    errors = kept = 0
    for k in range(d):
        if not counts[k]:
            continue
        va, vb = round_views(Protocol.BQKD, d, ab, alice_index, bb, k)
        if va.is_symbol:
            kept += int(counts[k])
            errors += int(counts[k]) * (va != vb)
    return errors, kept


def two_way_case_stats(records) -> dict:
    """Errors per (alice_basis, alice_index, measured) case of a bSQKD run."""
    stats: dict = {}
    for rec in records:
        measured = rec.bob_action == "measure"
        ab = BasisId(rec.alice_basis)
        proto = Protocol(rec.protocol)
        if measured:
            a, b = rec.sift
            err = a != b or not return_consistent(proto, ab, rec.alice_index, rec.alice_return_outcome, True)
        else:
            err = rec.alice_return_outcome != rec.alice_index
        key = (ab, rec.alice_index, measured)
        e, n = stats.get(key, (0, 0))
        stats[key] = (e + int(err), n + 1)
    return stats


def within_sigma(p: float, errors: int, n: int, k: float = 3.0) -> bool:
    """``|errors/n − p| ≤ k·σ`` with the binomial standard error of ``p``.

    When ``p`` is exactly 0 or 1 the frequency must match exactly.
    """
    if n == 0:
        return False
    sigma = math.sqrt(max(p * (1 - p), 0.0) / n)
    return abs(errors / n - p) <= k * sigma + 1e-12


# -- reports -----------------------------------------------------------------------


def _class_entropy_bits(records) -> tuple[float, float, int]:
    """Plug-in entropy bits and log2-alphabet bits of the key rounds."""
    per_class: dict = {}
    log_bits = 0.0
    for rec in records:
        a, _ = rec.sift
        if rec.in_check_set or not a.is_symbol:
            continue
        per_class.setdefault(rec.round_class, Counter())[a.symbol] += 1
        log_bits += math.log2(a.alphabet)
    entropy_bits = 0.0
    n_key = 0
    for counts in per_class.values():
        m = sum(counts.values())
        n_key += m
        entropy_bits += m * shannon_entropy([c / m for c in counts.values()])
    return entropy_bits, log_bits, n_key


def detection_indicators(records, cls: RoundClass, l_max: int) -> list[int]:
    """For l = 1..l_max: 1 if an error shows in the first l checked rounds of ``cls``."""
    errs = []
    for rec in records:
        if rec.in_check_set and rec.round_class == cls:
            a, b = rec.sift
            if rec.bob_action == "reflect":
                errs.append(rec.alice_return_outcome != rec.alice_index)
            elif a.is_symbol:
                errs.append(a != b)
        if len(errs) >= l_max:
            break
    out, seen = [], False
    for l in range(1, l_max + 1):
        seen = seen or (l <= len(errs) and errs[l - 1])
        out.append(int(seen))
    return out


@dataclass
class SimReport:
    protocol: str
    dim: int
    rounds: int
    empirical_kgr: float
    empirical_kgr_log2_alphabet: float
    empirical_kgr_with_check: float
    analytic_kgr: float
    qber_by_class: dict
    error_by_class: dict
    detection_probability: dict
    eve_correct_rate: float | None
    eve_guessed_rounds: int
    abort: bool
    keys_agree: bool
    key_length: int
    deltas: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "protocol": self.protocol,
            "dim": self.dim,
            "rounds": self.rounds,
            "empirical_kgr": self.empirical_kgr,
            "empirical_kgr_log2_alphabet": self.empirical_kgr_log2_alphabet,
            "empirical_kgr_with_check": self.empirical_kgr_with_check,
            "analytic_kgr": self.analytic_kgr,
            "deltas": self.deltas,
            "qber_by_class": {str(k): v for k, v in self.qber_by_class.items()},
            "error_by_class": {str(k): {"rate": v[0], "rounds": v[1]} for k, v in self.error_by_class.items()},
            "detection_probability": {str(k): v for k, v in self.detection_probability.items()},
            "eve_correct_rate": self.eve_correct_rate,
            "eve_guessed_rounds": self.eve_guessed_rounds,
            "abort": self.abort,
            "keys_agree": self.keys_agree,
            "key_length": self.key_length,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True)

    def qber_csv(self) -> str:
        rows = [{"alice_basis": k.alice_basis, "bob_basis": k.bob_basis, "qber": v}
                for k, v in self.qber_by_class.items()]
        return csv_text(rows, ("alice_basis", "bob_basis", "qber"))


def eve_correct_rate(strategy: EveStrategy, records, dim: int, matched_only: bool = False):
    """Fraction of deterministic Eve guesses that equal Alice's key symbol.

    With ``matched_only`` only rounds where Alice, Bob and Eve used the same
    basis count. Returns ``(rate or None, number of guessed rounds)``.
    """
    guesses = eve_guess_key(strategy, records, dim)
    hits = total = 0
    for rec, g in zip(records, guesses):
        if g is None or g.symbol is None:
            continue
        if matched_only and not (rec.alice_basis == rec.bob_basis == rec.eve_forward[0]):
            continue
        total += 1
        hits += g.symbol == rec.sift[0].symbol
    return (hits / total if total else None), total


def summarize(records, cfg: RunConfig, l_max: int = 6) -> SimReport:
    n = len(records)
    res = sift(records, cfg)
    entropy_bits, log_bits, _ = _class_entropy_bits(records)
    with_check = sum(math.log2(r.sift[0].alphabet) for r in records if r.sift[0].is_symbol)
    analytic = analytic_kgr(cfg)
    det = {cls: detection_indicators(records, cls, l_max) for cls in res.qber_by_class}
    rate, guessed = eve_correct_rate(cfg.eve, records, cfg.dim)
    rep = SimReport(
        protocol=cfg.protocol.value, dim=cfg.dim, rounds=n,
        empirical_kgr=entropy_bits / n,
        empirical_kgr_log2_alphabet=log_bits / n,
        empirical_kgr_with_check=with_check / n,
        analytic_kgr=analytic,
        qber_by_class=res.qber_by_class,
        error_by_class=error_by_class(records),
        detection_probability=det,
        eve_correct_rate=rate,
        eve_guessed_rounds=guessed,
        abort=res.abort,
        keys_agree=res.keys_agree,
        key_length=len(res.alice_key),
    )
    rep.deltas = {"kgr": rep.empirical_kgr - analytic,
                  "kgr_with_check": rep.empirical_kgr_with_check - analytic}
    return rep


# -- repeated trials ----------------------------------------------------------------


def _trial(args) -> list[int]:
    cfg, cls, l_max = args
    return detection_indicators(run_protocol(cfg), cls, l_max)


def trial_configs(cfg: RunConfig, trials: int, master_seed: int):
    return [cfg.replace(seed=split_seed(master_seed, i)) for i in range(trials)]


def detection_curve(cfg: RunConfig, cls: RoundClass, trials: int, master_seed: int,
                    l_max: int = 6, p_round: float | None = None, jobs: int = 1) -> list[dict]:
    """Empirical P(detect within l checked rounds of ``cls``) over independent runs.

    Trial ``i`` uses seed ``split_seed(master_seed, i)``. ``p_round`` is the
    per-round error used for the analytic column; by default it is taken
    from :func:`exact_class_errors` for classical strategies.
    """
    if p_round is None:
        p_round = exact_class_errors(cfg.dim, cfg.eve, cfg.protocol).get(cls, 0.0)
    work = [(c, cls, l_max) for c in trial_configs(cfg, trials, master_seed)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_trial, work, chunksize=max(1, trials // (4 * jobs))))
    else:
        results = [_trial(w) for w in work]
    hits = np.array(results).sum(axis=0)
    return [{"l": l, "p_detect_analytic": detect_within(p_round, l),
             "p_detect_empirical": hits[l - 1] / trials, "trials": trials}
            for l in range(1, l_max + 1)]
