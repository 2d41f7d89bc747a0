"""Experiment harness: offloading grid, sharing runs, gas table and reports.

Every number written to a CSV also appears as a line of ``run_log.jsonl``
in the same output directory.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np

from medshare.calibration import (
    METRICS,
    SCHEMES,
    Anchors,
    HardwareSettings,
    affine_fits,
    calibrated_profile,
    load_fig4_anchors,
    profile_coefficients,
)
from medshare.contract import GasReceipt, GasSchedule, Role, decimal_str
from medshare.costs import ConstraintBounds, CostWeights, TaskProfile, blended_costs
from medshare.ledger import PatientAddress
from medshare.optimizer import OffloadDecision, PsoConfig, brute_force_solve, solve_pso
from medshare.protocol import AccessOutcome, AccessRequest, HealthNetwork
from medshare.storage import LATENCY_MODES, HealthResult, LatencyTable

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

FIG4_HEADER = ("scheme", "size_kb", "time_s", "energy_mah", "memory_mb")
SAVINGS_HEADER = ("size_kb", "metric", "edge_vs_local", "edge_vs_cloud")
LATENCY_HEADER = ("n_users", "centralized_s", "distributed_s", "savings")
GAS_HEADER = ("function", "gas_used", "ether", "usd")
CANONICAL_GAS_SEQUENCE = ("AddUser", "DeleteUser", "PolicyList", "RetrieveEHRs", "Penalty")


class ConfigError(Exception):
    pass


def fmt(x: float) -> str:
    """Stable text form for floats in reports."""
    return format(float(x), ".12g")


@dataclass
class UserSpec:
    name: str
    role: str
    address: PatientAddress | None = None
    patients: list[PatientAddress] = field(default_factory=list)
    devices: list[str] = field(default_factory=list)


@dataclass
class OffloadSettings:
    sizes_kb: list[float]
    scheme: str = "edge"
    weights: CostWeights = field(default_factory=CostWeights)
    bounds: ConstraintBounds = field(default_factory=lambda: ConstraintBounds(16.0, 300.0))
    hardware: HardwareSettings = field(default_factory=HardwareSettings)
    pso: PsoConfig = field(default_factory=PsoConfig)
    anchors_path: Path | None = None


@dataclass
class SharingSettings:
    users: list[UserSpec]
    intruders: list[str] = field(default_factory=list)
    miners: list[str] = field(default_factory=lambda: ["miner-1", "miner-2"])
    storage_nodes: int = 4
    latency_users: list[int] = field(default_factory=lambda: [2, 4, 6, 8, 10, 12])
    latency_path: Path | None = None
    gas_path: Path | None = None


@dataclass
class ScenarioConfig:
    seed: int
    offload: OffloadSettings
    sharing: SharingSettings
    out_dir: Path = Path("out")

    def anchors(self) -> Anchors:
        return load_fig4_anchors(self.offload.anchors_path)

    def gas_schedule(self) -> GasSchedule:
        return GasSchedule.load(self.sharing.gas_path)

    def latency_table(self) -> LatencyTable:
        return LatencyTable.load(self.sharing.latency_path)


def _path(base: Path | None, value: Any, key: str) -> Path | None:
    if value is None:
        return None
    p = Path(value)
    if not p.is_absolute() and base is not None:
        p = base / p
    if not p.exists():
        raise ConfigError(f"{key}: file not found: {p}")
    return p


def load_config(path: str | Path | None = None, seed: int | None = None, out: str | Path | None = None) -> ScenarioConfig:
    """Parse a scenario TOML file; ``None`` loads the bundled default."""
    try:
        if path is None:
            text = resources.files("medshare").joinpath("data", "default_scenario.toml").read_text()
            base = None
        else:
            path = Path(path)
            if not path.exists():
                raise ConfigError(f"config file not found: {path}")
            text, base = path.read_text(), path.parent
        raw = tomllib.loads(text)
        return _build_config(raw, base, seed, out)
    except ConfigError:
        raise
    except (tomllib.TOMLDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config: {exc}") from exc


def _build_config(raw: dict, base: Path | None, seed: int | None, out: str | Path | None) -> ScenarioConfig:
    if seed is None:
        if "seed" not in raw:
            raise ConfigError("seed is mandatory")
        seed = raw["seed"]
    if not isinstance(seed, int):
        raise ConfigError("seed must be an integer")

    off = raw.get("offload", {})
    weights = off.get("weights", [1 / 3, 1 / 3, 1 / 3])
    if len(weights) != 3:
        raise ConfigError("offload.weights needs three entries")
    pso = dict(off.get("pso", {}))
    pso.setdefault("rng_seed", seed)
    offload = OffloadSettings(
        sizes_kb=[float(s) for s in off.get("sizes_kb", [200, 400, 600, 800, 1000])],
        scheme=off.get("scheme", "edge"),
        weights=CostWeights(*map(float, weights)),
        bounds=ConstraintBounds(float(off.get("tau", 16.0)), float(off.get("zeta", 300.0))),
        hardware=HardwareSettings(**{k: float(v) for k, v in off.get("hardware", {}).items()}),
        pso=PsoConfig(**pso),
        anchors_path=_path(base, off.get("anchors"), "offload.anchors"),
    )
    if offload.scheme not in ("edge", "cloud"):
        raise ConfigError("offload.scheme must be 'edge' or 'cloud'")

    sh = raw.get("sharing", {})
    users = []
    for u in sh.get("users", []):
        users.append(
            UserSpec(
                name=u["name"],
                role=Role(u["role"]).value,
                address=PatientAddress.parse(u["address"]) if "address" in u else None,
                patients=[PatientAddress.parse(a) for a in u.get("patients", [])],
                devices=list(u.get("devices", [])),
            )
        )
    names = [u.name for u in users] + list(sh.get("intruders", []))
    if len(set(names)) != len(names):
        raise ConfigError("user and intruder names must be unique")
    sharing = SharingSettings(
        users=users,
        intruders=list(sh.get("intruders", [])),
        miners=list(sh.get("miners", ["miner-1", "miner-2"])),
        storage_nodes=int(sh.get("storage_nodes", 4)),
        latency_users=[int(n) for n in sh.get("latency_users", [2, 4, 6, 8, 10, 12])],
        latency_path=_path(base, sh.get("latency_table"), "sharing.latency_table"),
        gas_path=_path(base, sh.get("gas_schedule"), "sharing.gas_schedule"),
    )
    out_dir = Path(out) if out is not None else Path(raw.get("out", "out"))
    return ScenarioConfig(seed, offload, sharing, out_dir)


@dataclass
class MetricsReport:
    """Tables produced by a run, plus the log lines that back every value."""

    tables: dict[str, tuple[tuple[str, ...], list[tuple[str, ...]]]] = field(default_factory=dict)
    documents: dict[str, str] = field(default_factory=dict)
    log: list[dict[str, Any]] = field(default_factory=list)
    decision: OffloadDecision | None = None
    outcomes: list[AccessOutcome] = field(default_factory=list)

    def add_table(self, name: str, header: tuple[str, ...], rows: list[tuple[str, ...]]) -> None:
        self.tables[name] = (header, rows)
        for row in rows:
            self.log.append({"table": name, **dict(zip(header, row))})

    def table(self, name: str) -> list[dict[str, str]]:
        header, rows = self.tables[name]
        return [dict(zip(header, r)) for r in rows]

    def merge(self, other: MetricsReport) -> MetricsReport:
        self.tables.update(other.tables)
        self.documents.update(other.documents)
        self.log.extend(other.log)
        self.decision = other.decision or self.decision
        self.outcomes.extend(other.outcomes)
        return self


def offload_profiles(cfg: ScenarioConfig, anchors: Anchors | None = None) -> dict[str, list[TaskProfile]]:
    anchors = anchors or cfg.anchors()
    return {
        scheme: [
            calibrated_profile(s, scheme, anchors, cfg.offload.hardware, task_id=f"task-{s:g}kb")
            for s in cfg.offload.sizes_kb
        ]
        for scheme in ("edge", "cloud")
    }


def fig4_grid(cfg: ScenarioConfig, anchors: Anchors | None = None) -> list[dict[str, float | str]]:
    """Time, energy and memory per scheme and size from the cost model."""
    profiles = offload_profiles(cfg, anchors)
    rows = []
    for scheme in SCHEMES:
        source = profiles["edge" if scheme == "local" else scheme]
        x = 0 if scheme == "local" else 1
        for size, p in zip(cfg.offload.sizes_kb, source):
            t, e, m = blended_costs(p, x)
            rows.append({"scheme": scheme, "size_kb": size, "time": t, "energy": e, "memory": m})
    return rows


def run_offload_experiment(cfg: ScenarioConfig) -> MetricsReport:
    anchors = cfg.anchors()
    report = MetricsReport()
    grid = fig4_grid(cfg, anchors)
    report.add_table(
        "fig4",
        FIG4_HEADER,
        [(r["scheme"], fmt(r["size_kb"]), fmt(r["time"]), fmt(r["energy"]), fmt(r["memory"])) for r in grid],
    )

    by_key = {(r["scheme"], r["size_kb"], metric): r[metric] for r in grid for metric in METRICS}
    savings = []
    for size in cfg.offload.sizes_kb:
        for metric in METRICS:
            edge = by_key[("edge", size, metric)]
            vs_local = (by_key[("local", size, metric)] - edge) / by_key[("local", size, metric)]
            vs_cloud = (by_key[("cloud", size, metric)] - edge) / by_key[("cloud", size, metric)]
            savings.append((fmt(size), metric, fmt(vs_local), fmt(vs_cloud)))
    report.add_table("offload_savings", SAVINGS_HEADER, savings)

    tasks = offload_profiles(cfg, anchors)[cfg.offload.scheme]
    o = cfg.offload
    decision = solve_pso(tasks, o.weights, o.bounds, o.pso)
    oracle = brute_force_solve(tasks, o.weights, o.bounds)
    report.decision = decision
    rows = []
    for p, x in zip(tasks, decision.x):
        rows.append((p.task_id, str(x), str(oracle.x[tasks.index(p)])))
    report.add_table("offload_decision", ("task_id", "pso_x", "oracle_x"), rows)
    report.add_table(
        "offload_constraints",
        ("constraint", "lhs", "rhs", "slack", "passed"),
        [(c.name, fmt(c.lhs), fmt(c.rhs), fmt(c.slack), str(c.passed).lower()) for c in decision.constraint_report.checks],
    )
    summary = {
        "scheme": o.scheme,
        "x": list(decision.x),
        "objective": fmt(decision.objective),
        "feasible": decision.feasible,
        "oracle_x": list(oracle.x),
        "oracle_objective": fmt(oracle.objective),
        "oracle_feasible": oracle.feasible,
    }
    report.log.append({"event": "offload_decision", **summary})
    report.documents["offload_decision.json"] = json.dumps(summary, indent=2, sort_keys=True) + "\n"
    report.documents["fig4.vl.json"] = _fig4_plot_spec(grid)
    return report


def calibration_report(cfg: ScenarioConfig) -> MetricsReport:
    anchors = cfg.anchors()
    report = MetricsReport()
    profiles = offload_profiles(cfg, anchors)
    coeff_rows = []
    for scheme in ("edge", "cloud"):
        for row in profile_coefficients(profiles[scheme]):
            coeff_rows.append((scheme, row["task_id"], *(fmt(v) for k, v in row.items() if k != "task_id")))
    header = ("scheme", "task_id", *(k for k in profile_coefficients(profiles["edge"][:1])[0] if k != "task_id"))
    report.add_table("calibration_coefficients", header, coeff_rows)
    report.add_table(
        "calibration_affine",
        ("scheme", "metric", "intercept", "slope_per_kb", "rms_residual"),
        [(f.scheme, f.metric, fmt(f.intercept), fmt(f.slope_per_kb), fmt(f.rms_residual)) for f in affine_fits(anchors)],
    )
    return report


def gas_session(schedule: GasSchedule | None = None, seed: int = 0) -> tuple[list[GasReceipt], GasReceipt]:
    """Receipts for one call of each contract function, in table order.

    Setup (registering the doctor and storing a record) runs first and is
    not part of the metered session.
    """
    net = HealthNetwork(seed=seed, schedule=schedule)
    doctor, leaver, intruder = (net.identity(n) for n in ("doctor", "leaver", "intruder"))
    addr = PatientAddress("A01", "P001")
    net.upload_result(addr, HealthResult(1.0))
    net.register_user(net.admin, doctor.public_key, Role.DOCTOR, [addr], ["dev-doctor"])

    c, admin, manager = net.contract, net.admin.public_key, net.manager.public_key
    first = len(c.receipts)
    c.add_user(admin, leaver.public_key, Role.CAREGIVER)
    c.delete_user(admin, leaver.public_key)
    c.policy_list(admin, doctor.public_key)
    c.retrieve_ehrs(manager, doctor.public_key, addr, "dev-doctor")
    c.penalty(admin, intruder.public_key, "RetrieveEHRs")
    receipts = c.receipts[first:]
    return receipts, c.schedule.total(receipts)


def gas_report(cfg: ScenarioConfig) -> MetricsReport:
    schedule = cfg.gas_schedule()
    receipts, total = gas_session(schedule, cfg.seed)
    report = MetricsReport()
    rows = [r.row(schedule.label(r.function)) for r in receipts] + [total.row()]
    report.add_table("table2_gas", GAS_HEADER, rows)
    return report


def latency_rows(table: LatencyTable, user_counts: list[int]) -> list[tuple[str, ...]]:
    rows = []
    for n in user_counts:
        cent = table.latency(n, "centralized")
        dist = table.latency(n, "distributed")
        rows.append((str(n), fmt(cent), fmt(dist), fmt((cent - dist) / cent)))
    return rows


def build_network(cfg: ScenarioConfig) -> HealthNetwork:
    """Network with every configured user registered and one stored result per patient."""
    sh = cfg.sharing
    net = HealthNetwork(
        seed=cfg.seed,
        miners=sh.miners,
        storage_nodes=[f"node-{i}" for i in range(sh.storage_nodes)],
        schedule=cfg.gas_schedule(),
    )
    rng = np.random.default_rng(cfg.seed)
    for u in sh.users:
        ident = net.identity(u.name)
        net.join(u.name)
        patients = ([u.address] if u.address else []) + u.patients
        net.register_user(net.admin, ident.public_key, u.role, patients, u.devices)
        if u.address is not None:
            score = round(float(rng.uniform(0.0, 5.0)), 3)
            data = rng.integers(0, 256, size=256, dtype=np.uint8).tobytes()
            net.upload_result(u.address, HealthResult(score, data))
    return net


def _scripts(cfg: ScenarioConfig, net: HealthNetwork) -> tuple[list[tuple[str, AccessRequest]], list[tuple[str, AccessRequest]]]:
    """Authorized and unauthorized request scripts for the configured users."""
    users = cfg.sharing.users
    patient_addrs = [u.address for u in users if u.address is not None]
    good, bad = [], []
    nonce = 0
    for u in users:
        ident = net.identity(u.name)
        bound = ([u.address] if u.address else []) + u.patients
        device = u.devices[0] if u.devices else f"{u.name}-device"
        for addr in patient_addrs:
            nonce += 1
            req = AccessRequest.make(ident, addr, device, net.ledger.tick, nonce)
            (good if addr in bound and u.devices else bad).append((u.name, req))
        if bound and u.devices:
            nonce += 1
            bad.append((u.name, AccessRequest.make(ident, bound[0], "unknown-device", net.ledger.tick, nonce)))
    for name in cfg.sharing.intruders:
        ident = net.identity(name)
        for addr in patient_addrs:
            nonce += 1
            bad.append((name, AccessRequest.make(ident, addr, f"{name}-device", net.ledger.tick, nonce)))
    return good, bad


def run_sharing_experiment(cfg: ScenarioConfig) -> MetricsReport:
    report = MetricsReport()
    net = build_network(cfg)
    good, bad = _scripts(cfg, net)

    rows = []
    for label, script in (("authorized", good), ("unauthorized", bad)):
        outcomes = net.process_batch([r for _, r in script], shuffle_seed=cfg.seed)
        report.outcomes.extend(outcomes)
        for (name, req), out in zip(script, outcomes):
            rows.append(
                (label, name, str(req.address), req.device_id, out.verdict.value, out.tx_id, str(out.record_hash or ""))
            )
    report.add_table(
        "access_outcomes", ("script", "requester", "patient", "device", "verdict", "tx_id", "record_hash"), rows
    )

    report.add_table("table1_latency", LATENCY_HEADER, latency_rows(cfg.latency_table(), cfg.sharing.latency_users))

    schedule = net.contract.schedule
    session = [r.row(schedule.label(r.function)) for r in net.contract.receipts]
    session.append(net.contract.session_total().row())
    report.add_table("session_gas", GAS_HEADER, session)
    report.merge(gas_report(cfg))

    check = net.ledger.verify_chain()
    report.log.append(
        {"event": "chain", "blocks": len(net.ledger.blocks), "ok": check.ok, "head": net.ledger.head.hash}
    )
    report.documents["chain.ndjson"] = net.ledger.to_ndjson()
    report.documents["table1.vl.json"] = _latency_plot_spec(report.table("table1_latency"))
    report.documents["keys/README"] = "Ed25519 secret keys (hex) for scenario identities. Test use only.\n"
    for u in [*cfg.sharing.users, *(UserSpec(n, "intruder") for n in cfg.sharing.intruders)]:
        report.documents[f"keys/{u.name}.key"] = net.identity(u.name).secret_hex() + "\n"
    return report


def _fig4_plot_spec(grid: list[dict]) -> str:
    values = [
        {"scheme": r["scheme"], "size_kb": r["size_kb"], "metric": m, "value": float(fmt(r[m]))}
        for r in grid
        for m in METRICS
    ]
    spec = {
        "$schema": "https://vega.github.io/schema/vega-lite/v5.json",
        "description": "Processing time, battery consumption and memory per scheme and file size",
        "data": {"values": values},
        "facet": {"column": {"field": "metric", "type": "nominal"}},
        "spec": {
            "mark": "bar",
            "encoding": {
                "x": {"field": "size_kb", "type": "ordinal", "title": "File size (KB)"},
                "xOffset": {"field": "scheme"},
                "y": {"field": "value", "type": "quantitative"},
                "color": {"field": "scheme", "type": "nominal"},
            },
        },
        "resolve": {"scale": {"y": "independent"}},
    }
    return json.dumps(spec, indent=2, sort_keys=True) + "\n"


def _latency_plot_spec(rows: list[dict[str, str]]) -> str:
    values = [
        {"n_users": int(r["n_users"]), "mode": mode, "seconds": float(r[f"{mode}_s"])}
        for r in rows
        for mode in LATENCY_MODES
    ]
    spec = {
        "$schema": "https://vega.github.io/schema/vega-lite/v5.json",
        "description": "Record retrieval time against concurrent users",
        "data": {"values": values},
        "mark": {"type": "line", "point": True},
        "encoding": {
            "x": {"field": "n_users", "type": "quantitative", "title": "Mobile users"},
            "y": {"field": "seconds", "type": "quantitative", "title": "Retrieval time (s)"},
            "color": {"field": "mode", "type": "nominal"},
        },
    }
    return json.dumps(spec, indent=2, sort_keys=True) + "\n"


def csv_text(header: tuple[str, ...], rows: list[tuple[str, ...]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def emit_report(report: MetricsReport, out_dir: str | Path, formats: tuple[str, ...] = ("csv", "plotfile")) -> list[Path]:
    """Write tables as CSV, documents and plot specs as-is, and the run log."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    def write(rel: str, text: str) -> None:
        path = out_dir / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
        written.append(path)

    if "csv" in formats:
        for name, (header, rows) in sorted(report.tables.items()):
            write(f"{name}.csv", csv_text(header, rows))
    for rel, text in sorted(report.documents.items()):
        if rel.endswith(".vl.json") and "plotfile" not in formats:
            continue
        write(rel, text)
    write("run_log.jsonl", "".join(json.dumps(line, sort_keys=True) + "\n" for line in report.log))
    return written


def run_all(cfg: ScenarioConfig) -> MetricsReport:
    """Offloading, calibration and sharing runs combined into one report."""
    report = run_offload_experiment(cfg)
    report.merge(calibration_report(cfg))
    report.merge(run_sharing_experiment(cfg))
    return report


def config_summary(cfg: ScenarioConfig) -> dict[str, Any]:
    return {
        "seed": cfg.seed,
        "sizes_kb": cfg.offload.sizes_kb,
        "scheme": cfg.offload.scheme,
        "tau": cfg.offload.bounds.tau,
        "zeta": cfg.offload.bounds.zeta,
        "pso": asdict(cfg.offload.pso),
        "users": [u.name for u in cfg.sharing.users],
    }
