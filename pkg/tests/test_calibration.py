import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from medshare.calibration import (
    METRICS,
    SCHEMES,
    HardwareSettings,
    affine_fits,
    calibrated_profile,
    load_fig4_anchors,
)
from medshare.costs import local_time, offload_energy, offload_time
from medshare.interp import piecewise_linear

ANCHORS = load_fig4_anchors()


def test_anchor_grid_is_complete():
    assert ANCHORS.sizes_kb == (200, 400, 600, 800, 1000)
    assert set(ANCHORS.points) == {(s, m) for s in SCHEMES for m in METRICS}


@pytest.mark.parametrize(
    "scheme,metric,size,expected",
    [
        ("local", "time", 200, 1.5),
        ("edge", "time", 200, 1.1),
        ("edge", "time", 1000, 3.6),
        ("edge", "energy", 200, 2.1),
        ("edge", "energy", 1000, 7.3),
        ("edge", "memory", 1000, 80),
        ("local", "energy", 200, 2.5),
        ("local", "memory", 200, 32),
        ("cloud", "time", 200, 1.3),
    ],
)
def test_measured_values(scheme, metric, size, expected):
    assert ANCHORS.value(scheme, metric, size) == expected


def test_edge_and_cloud_share_memory():
    assert ANCHORS.points[("edge", "memory")] == ANCHORS.points[("cloud", "memory")]
    assert ANCHORS.value("local", "memory", 200) / ANCHORS.value("edge", "memory", 200) == pytest.approx(32 / 27)


@pytest.mark.parametrize("scheme", ["edge", "cloud"])
@pytest.mark.parametrize("size", [200, 400, 600, 800, 1000])
def test_calibrated_profile_reproduces_anchors(scheme, size):
    p = calibrated_profile(size, scheme)
    assert local_time(p) == pytest.approx(ANCHORS.value("local", "time", size), abs=1e-12)
    assert offload_time(p) == pytest.approx(ANCHORS.value(scheme, "time", size), abs=1e-12)
    assert offload_energy(p) == pytest.approx(ANCHORS.value(scheme, "energy", size), abs=1e-12)
    assert p.energy_local == ANCHORS.value("local", "energy", size)
    assert p.mem_local == ANCHORS.value("local", "memory", size)
    assert p.mem_offload == ANCHORS.value(scheme, "memory", size)


def test_calibrated_profile_uses_fixed_hardware():
    hw = HardwareSettings()
    p = calibrated_profile(600)
    assert p.size_bits == 600 * 8000
    assert (p.freq_local, p.freq_edge, p.rate_bits_per_sec) == (hw.freq_local, hw.freq_edge, hw.rate_edge_bps)
    assert calibrated_profile(600, "cloud").rate_bits_per_sec == hw.rate_cloud_bps


def test_intermediate_size_interpolates():
    p = calibrated_profile(300)
    assert local_time(p) == pytest.approx((1.5 + 2.6) / 2, abs=1e-12)
    assert offload_time(p) == pytest.approx((1.1 + 2.0) / 2, abs=1e-12)


def test_extrapolation_beyond_measured_range():
    p = calibrated_profile(1200)
    # slope of the last edge-time segment is 0.7 s per 200 KB
    assert offload_time(p) == pytest.approx(4.3, abs=1e-12)
    assert local_time(p) == pytest.approx(6.9, abs=1e-12)


def test_invalid_scheme_and_size():
    with pytest.raises(ValueError):
        calibrated_profile(200, "local")
    with pytest.raises(ValueError):
        calibrated_profile(0)


def test_too_slow_link_is_rejected():
    with pytest.raises(ValueError, match="too small"):
        calibrated_profile(200, hw=HardwareSettings(rate_edge_bps=1e6))


def test_affine_fits_are_audit_only():
    fits = {(f.scheme, f.metric): f for f in affine_fits()}
    assert len(fits) == 9
    edge_time = fits[("edge", "time")]
    # an affine curve cannot pass through all five bars
    assert edge_time.rms_residual > 0.01
    assert edge_time.slope_per_kb > 0


def test_piecewise_linear_basics():
    xs, ys = (0.0, 1.0, 3.0), (0.0, 2.0, 3.0)
    assert piecewise_linear(xs, ys, 1.0) == 2.0
    assert piecewise_linear(xs, ys, 2.0) == 2.5
    assert piecewise_linear(xs, ys, -1.0) == -2.0
    assert piecewise_linear(xs, ys, 5.0) == 4.0


@given(st.floats(min_value=-1e3, max_value=1e4, allow_nan=False))
def test_piecewise_linear_matches_numpy_inside(x):
    xs, ys = ANCHORS.points[("local", "energy")]
    if xs[0] <= x <= xs[-1]:
        assert piecewise_linear(xs, ys, x) == pytest.approx(float(np.interp(x, xs, ys)), abs=1e-12)
    else:
        lo = 0 if x < xs[0] else -2
        slope = (ys[lo + 1] - ys[lo]) / (xs[lo + 1] - xs[lo])
        expected = ys[lo] + slope * (x - xs[lo])
        assert piecewise_linear(xs, ys, x) == pytest.approx(expected, rel=1e-12, abs=1e-9)
