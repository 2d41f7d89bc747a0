"""Command-line entry point.

Exit codes: 0 success, 1 other failure (e.g. record not found),
2 infeasible offloading instance, 3 integrity violation, 4 config error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from medshare.crypto import AuthenticationError, KeyMaterial, NonceSource
from medshare.ledger import Identity, PatientAddress, verify_export
from medshare.protocol import AccessRequest
from medshare.scenario import (
    ConfigError,
    build_network,
    calibration_report,
    csv_text,
    emit_report,
    gas_report,
    load_config,
    run_all,
    run_offload_experiment,
    run_sharing_experiment,
)
from medshare.storage import ContentStore, HealthResult, IntegrityError, NotFound, open_record, seal_record

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_INFEASIBLE = 2
EXIT_INTEGRITY = 3
EXIT_CONFIG = 4


def _print_json(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


def _storage_key(seed: int) -> KeyMaterial:
    return KeyMaterial.derive("storage", str(seed))


def cmd_offload(args, cfg) -> int:
    report = run_offload_experiment(cfg)
    emit_report(report, cfg.out_dir)
    print(csv_text(*report.tables["fig4"]), end="")
    d = report.decision
    _print_json({"x": list(d.x), "objective": d.objective, "feasible": d.feasible, "constraints": d.constraint_report.as_dict()})
    return EXIT_OK if d.feasible else EXIT_INFEASIBLE


def cmd_share(args, cfg) -> int:
    report = run_sharing_experiment(cfg)
    emit_report(report, cfg.out_dir)
    print(csv_text(*report.tables["table1_latency"]), end="")
    verdicts: dict[str, int] = {}
    for o in report.outcomes:
        verdicts[o.verdict.value] = verdicts.get(o.verdict.value, 0) + 1
    _print_json({"outcomes": verdicts, "chain": str(cfg.out_dir / "chain.ndjson")})
    return EXIT_OK


def cmd_gas(args, cfg) -> int:
    report = gas_report(cfg)
    emit_report(report, cfg.out_dir)
    print(csv_text(*report.tables["table2_gas"]), end="")
    return EXIT_OK


def cmd_calibrate(args, cfg) -> int:
    report = calibration_report(cfg)
    emit_report(report, cfg.out_dir)
    for name in ("calibration_coefficients", "calibration_affine"):
        print(f"# {name}")
        print(csv_text(*report.tables[name]), end="")
    return EXIT_OK


def cmd_all(args, cfg) -> int:
    report = run_all(cfg)
    emit_report(report, cfg.out_dir)
    print(f"wrote {len(report.tables)} tables to {cfg.out_dir}")
    return EXIT_OK if report.decision.feasible else EXIT_INFEASIBLE


def cmd_request(args, cfg) -> int:
    net = build_network(cfg)
    requester = Identity.from_secret_hex("requester", Path(args.key).read_text())
    addr = PatientAddress(args.area, args.patient)
    req = AccessRequest.make(requester, addr, args.device, net.ledger.tick, nonce=1)
    try:
        outcome = net.process_request(req)
    except IntegrityError as exc:
        print(f"integrity violation: {exc}", file=sys.stderr)
        return EXIT_INTEGRITY
    result = outcome.to_dict()
    if outcome.granted:
        result["severity_score"] = net.read_result(outcome.record).severity_score
    _print_json(result)
    return EXIT_OK


def cmd_store(args, cfg) -> int:
    directory = Path(args.store_dir)
    store = ContentStore.load(directory) if (directory / "dht.json").exists() else ContentStore()
    data = Path(args.data_file).read_bytes() if args.data_file else b""
    addr = PatientAddress(args.area, args.patient)
    nonces = NonceSource(cfg.seed + store.object_count())
    h = store.store(seal_record(addr, HealthResult(args.score, data), _storage_key(cfg.seed), nonces))
    store.save(directory)
    _print_json({"patient": str(addr), "hash": str(h), "node": store.dht[addr].node_id})
    return EXIT_OK


def cmd_fetch(args, cfg) -> int:
    store = ContentStore.load(args.store_dir)
    addr = PatientAddress(args.area, args.patient)
    try:
        record = store.fetch(addr)
        result = open_record(record, _storage_key(cfg.seed))
    except (IntegrityError, AuthenticationError) as exc:
        print(f"integrity violation: {exc}", file=sys.stderr)
        return EXIT_INTEGRITY
    except NotFound:
        print(f"no record for {addr}", file=sys.stderr)
        return EXIT_FAILURE
    _print_json(
        {
            "patient": str(addr),
            "hash": str(store.dht[addr].content_hash),
            "severity_score": result.severity_score,
            "data_bytes": len(result.data),
        }
    )
    return EXIT_OK


def cmd_inspect(args, cfg) -> int:
    path = Path(args.chain) if args.chain else cfg.out_dir / "chain.ndjson"
    raw = path.read_bytes()
    check = verify_export(raw)
    summary: dict = {"chain": str(path), "ok": check.ok}
    if check.ok:
        methods: dict[str, int] = {}
        lines = raw.decode().splitlines()
        for line in lines:
            for tx in json.loads(line)["transactions"]:
                methods[tx["method"]] = methods.get(tx["method"], 0) + 1
        summary.update(blocks=len(lines), transactions=methods, head=json.loads(lines[-1])["hash"])
    else:
        summary.update(corrupt_height=check.height, reason=check.reason)
    _print_json(summary)
    return EXIT_OK if check.ok else EXIT_INTEGRITY


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="override the config seed")
    common.add_argument("--config", default=argparse.SUPPRESS, help="scenario TOML file (default: bundled)")
    common.add_argument("--out", default=argparse.SUPPRESS, help="output directory")

    parser = argparse.ArgumentParser(prog="medshare", description=__doc__.splitlines()[0], parents=[common])
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("offload", parents=[common], help="cost grid per scheme and size, plus the optimised decision").set_defaults(func=cmd_offload)
    sub.add_parser("share", parents=[common], help="access scripts, retrieval latency and gas receipts").set_defaults(func=cmd_share)
    sub.add_parser("gas", parents=[common], help="gas/ether/USD for one call of each contract function").set_defaults(func=cmd_gas)
    sub.add_parser("calibrate", parents=[common], help="print fitted profile coefficients").set_defaults(func=cmd_calibrate)
    sub.add_parser("all", parents=[common], help="run every experiment into one output tree").set_defaults(func=cmd_all)

    p = sub.add_parser("request", parents=[common], help="send one record request through the access protocol")
    p.add_argument("--key", required=True, help="file holding the requester's Ed25519 secret key (hex)")
    p.add_argument("--area", required=True)
    p.add_argument("--patient", required=True)
    p.add_argument("--device", required=True)
    p.set_defaults(func=cmd_request)

    p = sub.add_parser("store", parents=[common], help="encrypt and store a health result")
    p.add_argument("--store-dir", required=True)
    p.add_argument("--area", required=True)
    p.add_argument("--patient", required=True)
    p.add_argument("--score", type=float, required=True)
    p.add_argument("--data-file")
    p.set_defaults(func=cmd_store)

    p = sub.add_parser("fetch", parents=[common], help="fetch, verify and decrypt a stored result")
    p.add_argument("--store-dir", required=True)
    p.add_argument("--area", required=True)
    p.add_argument("--patient", required=True)
    p.set_defaults(func=cmd_fetch)

    p = sub.add_parser("inspect", parents=[common], help="verify an exported chain")
    p.add_argument("chain", nargs="?", help="NDJSON chain file (default: <out>/chain.ndjson)")
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(getattr(args, "config", None), getattr(args, "seed", None), getattr(args, "out", None))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return args.func(args, cfg)


if __name__ == "__main__":
    sys.exit(main())
