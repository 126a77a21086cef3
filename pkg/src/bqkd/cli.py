"""Command-line entry point.

Exit codes: 0 ok, 1 usage or configuration error, 2 run aborted because
the check rounds exposed errors, 3 transport error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import analysis
from .engine import (
    Relay,
    alice_party,
    assemble_records,
    bob_party,
    drive_party,
    drive_relay,
    records_to_jsonl,
    run_protocol,
)
from .errors import BQKDError, ConfigInvalid, ConfigMismatch, TransportFailure
from .golden import verify_rules
from .rules import RoundClass, sift_symbol
from .transport import accept, connect, listen

EXIT_OK, EXIT_CONFIG, EXIT_ABORT, EXIT_TRANSPORT = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def parse_dims(text: str) -> list[int]:
    """``"6"``, ``"4,6,10"`` or an inclusive even range ``"4:32"``."""
    dims: list[int] = []
    for part in text.split(","):
        if ":" in part:
            lo, hi = (int(x) for x in part.split(":"))
            dims += [d for d in range(lo, hi + 1) if d % 2 == 0]
        else:
            dims.append(int(part))
    return dims


def _write(path: str | None, text: str) -> None:
    if path:
        p = Path(path)
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(text, encoding="utf-8")


# -- kgr ---------------------------------------------------------------------------


def cmd_kgr(args) -> int:
    dims = parse_dims(args.dim)
    proto = args.protocol
    if proto == "bsqkd":
        for d in dims:
            print(f"d={d} kgr_bsqkd={analysis.kgr_bsqkd(d, args.q):.4f}")
        return EXIT_OK
    if proto == "sqkd07":
        for d in dims:
            print(f"d={d} kgr_sqkd07={analysis.kgr_sqkd07(d, args.q):.4f}")
        return EXIT_OK
    if proto == "bb84":
        for d in dims:
            print(f"d={d} kgr_bb84={analysis.kgr_bb84(d):.4f}")
        return EXIT_OK
    rows = analysis.kgr_ratio_curve(dims)
    print(f"{'d':>4} {'bQKD':>8} {'BB84':>8} {'ratio':>8}")
    for r in rows:
        print(f"{r['d']:>4} {r['kgr_bqkd']:>8.4f} {r['kgr_bb84']:>8.4f} {r['ratio']:>8.4f}")
    if args.csv:
        _write(args.csv, analysis.csv_text(rows, analysis.RATIO_COLUMNS))
    return EXIT_OK


# -- run ---------------------------------------------------------------------------


def _detection_class(cf) -> RoundClass:
    if cf.detection_class:
        return RoundClass(*cf.detection_class)
    raise ConfigInvalid("repeated trials need 'detection_class', e.g. [\"B2\", \"B2\"]")


def cmd_run(args) -> int:
    from .config import load_config

    cf = load_config(args.config, args.seed)
    cfg = cf.run
    out = cf.output
    if cf.trials > 1:
        rows = analysis.detection_curve(cfg, _detection_class(cf), cf.trials, cfg.seed,
                                        cf.l_max, jobs=args.jobs)
        text = analysis.csv_text(rows, analysis.DETECTION_COLUMNS)
        _write(out.get("detection_csv"), text)
        _write(out.get("report"), json.dumps({"detection_curve": rows}, indent=2))
        sys.stdout.write(text)
        return EXIT_OK
    records = run_protocol(cfg)
    report = analysis.summarize(records, cfg, cf.l_max)
    _write(out.get("report"), report.dumps() + "\n")
    _write(out.get("qber_csv"), report.qber_csv())
    if out.get("transcript"):
        p = Path(out["transcript"])
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_bytes(records_to_jsonl(records))
    print(report.dumps())
    return EXIT_ABORT if report.abort else EXIT_OK


# -- verify-rules ------------------------------------------------------------------


def corrupted_rule(d, ab, ai, bb, bi):
    """Negative control: the real rule with one table entry flipped."""
    va, vb = sift_symbol(d, ab, ai, bb, bi)
    if ab.value == "B0" and bb.value == "B1" and ai == 0 and va.is_symbol:
        flipped = type(va)((va.symbol + 1) % va.alphabet, va.alphabet)
        return flipped, flipped
    return va, vb


def cmd_verify_rules(args) -> int:
    dims = parse_dims(args.dims)
    bad = [d for d in dims if d % 2 or not 4 <= d <= 32]
    if bad:
        raise ConfigInvalid(f"verify-rules covers even 4 <= d <= 32, got {bad}")
    rule = corrupted_rule if args.corrupt else sift_symbol
    report = verify_rules(dims, rule)
    failed = False
    for d, failures in report.items():
        if failures:
            failed = True
            print(f"d={d}: FAIL ({len(failures)} violations)")
            for f in failures[:20]:
                print("   ", f)
        else:
            print(f"d={d}: pass")
    return EXIT_CONFIG if failed else EXIT_OK


# -- party -------------------------------------------------------------------------


def _bound(server) -> str:
    host, port = server.getsockname()[:2]
    return f"{host}:{port}"


def cmd_party(args) -> int:
    from .config import load_config

    cf = load_config(args.config, args.seed)
    cfg = cf.run
    role = args.role
    if role == "eve-relay":
        if not (args.listen and args.connect):
            raise ConfigInvalid("eve-relay needs --listen (for Alice) and --connect (to Bob)")
        relay = Relay(cfg)
        srv = listen(args.listen)
        print(f"LISTENING {_bound(srv)}", flush=True)
        to_bob = connect(args.connect)
        from_alice = accept(srv, timeout=args.timeout)
        try:
            drive_relay(relay, from_alice, to_bob)
        finally:
            from_alice.close()
            to_bob.close()
            srv.close()
        print(json.dumps({"role": role, "eve_log_entries": len(relay.eve.log)}))
        return EXIT_OK
    if role == "bob":
        if not args.listen:
            raise ConfigInvalid("bob needs --listen host:port")
        srv = listen(args.listen)
        print(f"LISTENING {_bound(srv)}", flush=True)
        ch = accept(srv, timeout=args.timeout)
        srv.close()
        gen = bob_party(cfg)
    else:
        if not args.connect:
            raise ConfigInvalid("alice needs --connect host:port")
        ch = connect(args.connect)
        gen = alice_party(cfg)
    try:
        result = drive_party(gen, ch)
    finally:
        ch.close()
    records = assemble_records(cfg, result["alice"], result["bob"], result["eve"])
    report = analysis.summarize(records, cfg, cf.l_max)
    if args.transcript:
        Path(args.transcript).write_bytes(records_to_jsonl(records))
    _write(args.report, report.dumps() + "\n")
    print(json.dumps({"role": role, "abort": report.abort, "key_length": report.key_length}))
    return EXIT_ABORT if report.abort else EXIT_OK


# -- entry -------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="bqkd", description="Boosted QKD / semi-quantum KD simulator and analysis tools.")
    p.add_argument("--seed", type=int, default=None,
                   help="master seed; overrides BQKD_SEED and the config file")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    k = sub.add_parser("kgr", help="closed-form key-generation rates")
    k.add_argument("--dim", default="4", help="dimension, list (4,6) or even range (4:32)")
    k.add_argument("--protocol", default="bqkd", choices=["bqkd", "bsqkd", "bb84", "sqkd07"],
                   help="which protocol's rate to print (bqkd prints the ratio table)")
    k.add_argument("--q", type=float, default=0.5, help="Bob's measure probability (semi-quantum)")
    k.add_argument("--csv", default=None, help="write d,kgr_bqkd,kgr_bb84,ratio rows here")
    k.set_defaults(func=cmd_kgr)

    r = sub.add_parser("run", help="run a configured simulation and write reports")
    r.add_argument("config", help="JSON configuration file")
    r.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="master seed")
    r.add_argument("--jobs", type=int, default=1, help="worker processes for repeated trials")
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("verify-rules", help="exhaustive key-rule checks plus golden tables")
    v.add_argument("--dims", default="4:12", help="dimensions, list or even range")
    v.add_argument("--corrupt", action="store_true",
                   help="negative control: check a rule with one flipped entry (must fail)")
    v.set_defaults(func=cmd_verify_rules)

    pa = sub.add_parser("party", help="run one party of a socket-mode protocol run")
    pa.add_argument("--role", required=True, choices=["alice", "bob", "eve-relay"])
    pa.add_argument("--config", required=True, help="JSON configuration file (same for all parties)")
    pa.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="master seed")
    pa.add_argument("--listen", default=None, help="host:port to accept on (bob, eve-relay); port 0 picks one")
    pa.add_argument("--connect", default=None, help="host:port to connect to (alice, eve-relay)")
    pa.add_argument("--timeout", type=float, default=60.0, help="seconds to wait for the peer to connect")
    pa.add_argument("--report", default=None, help="write the SimReport JSON here")
    pa.add_argument("--transcript", default=None, help="write the per-round transcript (JSON lines) here")
    pa.set_defaults(func=cmd_party)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigInvalid, ConfigMismatch) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TransportFailure as exc:
        print(f"transport error: {exc}", file=sys.stderr)
        return EXIT_TRANSPORT
    except BQKDError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
