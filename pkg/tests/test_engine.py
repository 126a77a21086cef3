import numpy as np
import pytest

from bqkd.adversary import EveStrategy
from bqkd.engine import (
    Protocol,
    RunConfig,
    error_by_class,
    records_to_jsonl,
    run_baseline,
    run_bqkd,
    run_bsqkd,
    run_protocol,
    run_protocol_views,
    run_socket_local,
    sift,
)
from bqkd.errors import ConfigInvalid, ConfigMismatch
from bqkd.rules import RoundClass
from bqkd.transport import InProcessChannel


def test_noiseless_bqkd_keys_agree():
    cfg = RunConfig("bQKD", 4, 20_000, seed=1)
    res = sift(run_bqkd(cfg), cfg)
    assert not res.abort and res.keys_agree and len(res.alice_key) > 10_000
    assert all(v == 0 for v in res.qber_by_class.values())


@pytest.mark.parametrize("proto,d", [("bQKD", 6), ("bSQKD", 8), ("BB84Qudit", 4), ("SQKD07", 2)])
def test_seed_determinism(proto, d):
    cfg = RunConfig(proto, d, 2000, seed=77)
    assert records_to_jsonl(run_protocol(cfg)) == records_to_jsonl(run_protocol(cfg))
    other = records_to_jsonl(run_protocol(cfg.replace(seed=78)))
    assert other != records_to_jsonl(run_protocol(cfg))


def test_alice_and_bob_assemble_identical_records():
    cfg = RunConfig("bQKD", 10, 3000, seed=3, eve=EveStrategy.intercept_resend(["B1"]),
                    abort_qber_threshold=1.0)
    a, b = run_protocol_views(cfg)
    assert records_to_jsonl(a) == records_to_jsonl(b)


def test_serialized_wire_matches_direct_delivery():
    cfg = RunConfig("bSQKD", 4, 500, seed=4, eve=EveStrategy.two_way(np.eye(16), np.eye(16), 4))
    direct = records_to_jsonl(run_protocol(cfg))
    wired = records_to_jsonl(run_protocol(cfg, InProcessChannel(serialize=True)))
    assert direct == wired


def test_socket_threads_match_in_process():
    cfg = RunConfig("BB84Qudit", 6, 400, seed=12, eve=EveStrategy.intercept_resend(["F"]),
                    abort_qber_threshold=1.0)
    assert records_to_jsonl(run_socket_local(cfg)) == records_to_jsonl(run_protocol(cfg))


def test_record_invariants():
    cfg = RunConfig("bSQKD", 4, 2000, seed=5)
    for rec in run_bsqkd(cfg):
        assert (rec.bob_outcome is not None) == (rec.bob_action == "measure")
        assert rec.alice_return_outcome is not None
        if rec.bob_action == "reflect":
            assert rec.alice_return_outcome == rec.alice_index
            assert rec.in_check_set
        elif rec.alice_basis != "B0":
            assert rec.alice_return_outcome // 2 == rec.alice_index // 2
    for rec in run_bqkd(RunConfig("bQKD", 4, 500, seed=5)):
        assert rec.alice_return_outcome is None and rec.bob_action == "measure"


def test_subspace_attack_hits_only_b2b2():
    cfg = RunConfig("bQKD", 4, 30_000, seed=9, eve=EveStrategy.subspace([[0, 1], [2, 3]]))
    recs = run_bqkd(cfg)
    errs = error_by_class(recs)
    for cls, (rate, n) in errs.items():
        if cls == RoundClass("B2", "B2"):
            assert abs(rate - 0.5) < 3 * np.sqrt(0.25 / n)
        else:
            assert rate == 0.0
    res = sift(recs, cfg)
    assert res.abort
    assert set(k for k, v in res.qber_by_class.items() if v > 0) == {RoundClass("B2", "B2")}


def test_copy_entangler_matched_superposition_rate():
    cfg = RunConfig("bQKD", 4, 30_000, seed=10, eve=EveStrategy.copy(4))
    errs = error_by_class(run_bqkd(cfg))
    for cls in (RoundClass("B1", "B1"), RoundClass("B2", "B2")):
        rate, n = errs[cls]
        assert abs(rate - 0.5) < 3 * np.sqrt(0.25 / n)
    assert errs[RoundClass("B0", "B0")][0] == 0.0


def test_two_way_identity_attack_is_invisible():
    base = RunConfig("bSQKD", 4, 5000, seed=21)
    attacked = base.replace(eve=EveStrategy.two_way(np.eye(16), np.eye(16), 4))
    assert records_to_jsonl(run_bsqkd(base)) == records_to_jsonl(run_bsqkd(attacked))


def test_copy_forward_identity_backward_reflect_errors():
    cfg = RunConfig("bSQKD", 4, 30_000, seed=22,
                    eve=EveStrategy.two_way(EveStrategy.copy(4).unitary, np.eye(16), 4))
    errs = error_by_class(run_bsqkd(cfg))
    for basis in ("B1", "B2"):
        rate, n = errs[RoundClass(basis, "reflect")]
        assert abs(rate - 0.5) < 3 * np.sqrt(0.25 / n)
    assert errs[RoundClass("B0", "reflect")][0] == 0.0


def test_baselines_and_yield():
    cfg = RunConfig("SQKD07", 2, 40_000, seed=3)
    res = sift(run_baseline(cfg), cfg)
    assert res.keys_agree
    n_key = sum(1 for r in run_baseline(cfg) if r.sift[0].is_symbol)
    assert abs(n_key / 40_000 - 0.25) < 0.01
    with pytest.raises(ConfigInvalid):
        run_baseline(RunConfig("bQKD", 4, 10))


def test_biased_probabilities_are_respected():
    cfg = RunConfig("bQKD", 4, 3000, seed=1, alice_basis_probs=(0, 0, 1), bob_basis_probs=(0, 1, 0))
    recs = run_bqkd(cfg)
    assert {(r.alice_basis, r.bob_basis) for r in recs} == {("B2", "B1")}
    assert all(not r.sift[0].is_symbol for r in recs)


@pytest.mark.parametrize("kwargs", [
    dict(protocol="bQKD", dim=5, rounds=10),
    dict(protocol="bQKD", dim=2, rounds=10),
    dict(protocol="nope", dim=4, rounds=10),
    dict(protocol="bQKD", dim=4, rounds=0),
    dict(protocol="bQKD", dim=4, rounds=10, check_fraction=0.0),
    dict(protocol="bQKD", dim=4, rounds=10, alice_basis_probs=(0.5, 0.5, 0.5)),
    dict(protocol="bSQKD", dim=4, rounds=10, bob_basis_probs=(1, 0, 0)),
    dict(protocol="bQKD", dim=4, rounds=10, eve=EveStrategy.two_way(np.eye(16), np.eye(16), 4)),
])
def test_config_validation(kwargs):
    with pytest.raises(ConfigInvalid):
        RunConfig(**kwargs)


def test_config_hash_ignores_eve_but_not_shared_fields():
    a = RunConfig("bQKD", 4, 10, seed=1)
    assert a.config_hash() == a.replace(eve=EveStrategy.copy(4)).config_hash()
    assert a.config_hash() != a.replace(seed=2).config_hash()
    assert a.protocol is Protocol.BQKD


def test_hello_mismatch_raises():
    from bqkd.engine import _schedule, alice_party, bob_party

    a = RunConfig("bQKD", 4, 10, seed=1)
    with pytest.raises(ConfigMismatch):
        _schedule(alice_party(a), bob_party(a.replace(seed=2)))
