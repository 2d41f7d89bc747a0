"""Fit task profiles to the measured local / cloud / edge cost curves.

The measurements are end-to-end totals per file size, not the per-bit
coefficients the cost model takes. For a requested size we interpolate each
measured curve and back out the coefficients that make the cost model
return exactly those totals. Hardware constants (clock rates, link rates,
encryption cost per bit) are fixed settings, and the remaining free
coefficient of each formula absorbs the measurement.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable

import numpy as np

from medshare.costs import DEFAULT_LINK_CAP_BPS, TaskProfile
from medshare.interp import piecewise_linear
from medshare.units import kb_to_bits

SCHEMES = ("local", "cloud", "edge")
REMOTE_SCHEMES = ("cloud", "edge")
METRICS = ("time", "energy", "memory")


def read_commented_csv(path: str | Path | None, default_name: str) -> list[dict[str, str]]:
    """Rows of a CSV whose ``#`` lines are comments. ``None`` reads the bundled copy."""
    if path is None:
        text = resources.files("medshare").joinpath("data", default_name).read_text()
    else:
        text = Path(path).read_text()
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    return list(csv.DictReader(lines))


@dataclass(frozen=True)
class Anchors:
    """Measured (size_kb, value) points keyed by (scheme, metric)."""

    points: dict[tuple[str, str], tuple[tuple[float, ...], tuple[float, ...]]]

    @property
    def sizes_kb(self) -> tuple[float, ...]:
        return self.points[("local", "time")][0]

    def value(self, scheme: str, metric: str, size_kb: float) -> float:
        xs, ys = self.points[(scheme, metric)]
        return piecewise_linear(xs, ys, size_kb)


def load_fig4_anchors(path: str | Path | None = None) -> Anchors:
    grouped: dict[tuple[str, str], list[tuple[float, float]]] = {}
    for row in read_commented_csv(path, "fig4_anchors.csv"):
        key = (row["scheme"].strip(), row["metric"].strip())
        grouped.setdefault(key, []).append((float(row["size_kb"]), float(row["value"])))
    missing = {(s, m) for s in SCHEMES for m in METRICS} - grouped.keys()
    if missing:
        raise ValueError(f"anchor file lacks curves: {sorted(missing)}")
    points = {}
    for key, pts in grouped.items():
        pts.sort()
        points[key] = (tuple(p[0] for p in pts), tuple(p[1] for p in pts))
    return Anchors(points)


@dataclass(frozen=True)
class HardwareSettings:
    """Fixed hardware constants the calibration does not fit.

    Defaults: a 2.8 GHz phone, 2.5 GHz servers, an 11 Mbit/s Wi-Fi link to
    the edge and a slower effective path to the remote cloud.
    """

    freq_local: float = 2.8e9
    freq_edge: float = 2.5e9
    freq_cloud: float = 2.5e9
    rate_edge_bps: float = 11e6
    rate_cloud_bps: float = 6e6
    cpu_per_bit_enc: float = 12.5
    power_enc: float = 1.0
    link_cap_bps: float = DEFAULT_LINK_CAP_BPS


def calibrated_profile(
    size_kb: float,
    scheme: str = "edge",
    anchors: Anchors | None = None,
    hw: HardwareSettings | None = None,
    task_id: str | None = None,
) -> TaskProfile:
    """TaskProfile whose local and offload costs follow the measured curves.

    ``scheme`` picks which remote target ("edge" or "cloud") the offload
    branch reproduces; the local branch is shared by both.
    """
    if scheme not in REMOTE_SCHEMES:
        raise ValueError(f"scheme must be one of {REMOTE_SCHEMES}, got {scheme!r}")
    if size_kb <= 0:
        raise ValueError("size must be positive")
    anchors = anchors or load_fig4_anchors()
    hw = hw or HardwareSettings()
    bits = kb_to_bits(size_kb)
    freq_remote = hw.freq_edge if scheme == "edge" else hw.freq_cloud
    rate = hw.rate_edge_bps if scheme == "edge" else hw.rate_cloud_bps

    t_local = anchors.value("local", "time", size_kb)
    t_remote = anchors.value(scheme, "time", size_kb)
    e_remote = anchors.value(scheme, "energy", size_kb)

    t_enc = bits * hw.cpu_per_bit_enc / hw.freq_local
    t_tx = bits / rate
    t_exec = t_remote - t_enc - t_tx
    e_tx = e_remote - hw.power_enc * t_enc
    if t_exec <= 0 or e_tx <= 0:
        raise ValueError(
            f"{scheme} measurement at {size_kb} KB is too small for the fixed encryption/link settings"
        )

    profile = TaskProfile(
        task_id=task_id or f"{scheme}-{size_kb:g}kb",
        size_bits=bits,
        cpu_per_bit_local=t_local * hw.freq_local / bits,
        cpu_per_bit_enc=hw.cpu_per_bit_enc,
        cpu_per_bit_edge=t_exec * freq_remote / bits,
        freq_local=hw.freq_local,
        freq_edge=freq_remote,
        rate_bits_per_sec=rate,
        energy_local=anchors.value("local", "energy", size_kb),
        mem_local=anchors.value("local", "memory", size_kb),
        power_enc=hw.power_enc,
        power_trans=e_tx / t_tx,
        mem_offload=anchors.value(scheme, "memory", size_kb),
        link_cap_bps=hw.link_cap_bps,
    )
    return profile


@dataclass(frozen=True)
class AffineFit:
    scheme: str
    metric: str
    intercept: float
    slope_per_kb: float
    rms_residual: float


def affine_fits(anchors: Anchors | None = None) -> list[AffineFit]:
    """Least-squares ``a + b * size_kb`` per curve, reported for audit only."""
    anchors = anchors or load_fig4_anchors()
    out = []
    for scheme in SCHEMES:
        for metric in METRICS:
            xs, ys = (np.asarray(v) for v in anchors.points[(scheme, metric)])
            A = np.column_stack([np.ones_like(xs), xs])
            coef, *_ = np.linalg.lstsq(A, ys, rcond=None)
            resid = ys - A @ coef
            out.append(AffineFit(scheme, metric, float(coef[0]), float(coef[1]), float(np.sqrt(np.mean(resid**2)))))
    return out


def profile_coefficients(profiles: Iterable[TaskProfile]) -> list[dict[str, float | str]]:
    """Flat rows of the backed-out coefficients, for printing."""
    rows = []
    for p in profiles:
        rows.append(
            {
                "task_id": p.task_id,
                "size_bits": p.size_bits,
                "cpu_per_bit_local": p.cpu_per_bit_local,
                "cpu_per_bit_enc": p.cpu_per_bit_enc,
                "cpu_per_bit_edge": p.cpu_per_bit_edge,
                "freq_local": p.freq_local,
                "freq_edge": p.freq_edge,
                "rate_bits_per_sec": p.rate_bits_per_sec,
                "energy_local": p.energy_local,
                "mem_local": p.mem_local,
                "power_enc": p.power_enc,
                "power_trans": p.power_trans,
                "mem_offload": p.mem_offload,
            }
        )
    return rows
