"""End-to-end acceptance suite.

Each test prints one PASS/FAIL line for its criterion so the suite doubles as
a checklist: ``pytest tests/test_acceptance.py -v -s``.
"""

import json
import time
from pathlib import Path

import numpy as np
import pytest

from attwarp import (
    BoundingBox,
    ChainConfig,
    RawAttentionTensor,
    aggregate,
    field_from_attention,
    pointing_game,
    proportion,
    run_chain,
    warp_box_forward,
    warp_box_inverse,
    warp_image,
)
from attwarp.aggregation import EPS_MASS
from attwarp.chains import STOP_KL, STOP_MAX
from attwarp.warp import HORIZONTAL, VERTICAL, AxisProfile, build_warp, cdf
from oracles import bisect_inverse_cdf, interval_mass_fraction, triple_loop_aggregate

rng = np.random.default_rng(20240612)


def report(name: str, ok: bool, detail: str = "") -> None:
    status = "PASS" if ok else "FAIL"
    suffix = f"  ({detail})" if detail else ""
    print(f"ACCEPTANCE {name}: {status}{suffix}")
    assert ok, f"{name} failed{suffix}"


def smooth_image(h, w, seed):
    r = np.random.default_rng(seed)
    phases = r.uniform(0, 2 * np.pi, 6)
    yy, xx = np.meshgrid(np.linspace(0, 1, h), np.linspace(0, 1, w), indexing="ij")
    chans = []
    for c in range(3):
        chans.append(
            0.5
            + 0.25 * np.sin(2 * np.pi * xx + phases[2 * c])
            + 0.25 * np.cos(2 * np.pi * yy + phases[2 * c + 1])
        )
    return np.clip(np.stack(chans, axis=2), 0, 1)


def test_identity_law():
    # warm the jit path before timing
    warp_image(np.zeros((4, 4, 3)), field_from_attention(np.ones((4, 4))))
    worst = 0.0
    start = time.perf_counter()
    for i in range(50):
        img = np.random.default_rng(i).random((64, 64, 3))
        out = warp_image(img, field_from_attention(np.ones((64, 64))))
        worst = max(worst, float(np.abs(out.pixels - img).max()))
    elapsed = time.perf_counter() - start
    report(
        "identity-law",
        worst <= 1.0 / 255.0 and elapsed < 5.0,
        f"max err {worst:.2e}, {elapsed:.2f}s for 50 images",
    )


def test_cdf_inversion_oracle():
    worst = 0.0
    for trial in range(1000):
        n = int(rng.integers(2, 65))
        profile = rng.uniform(1e-3, 1.0, n)
        c = cdf(AxisProfile(profile, HORIZONTAL))
        fld = build_warp(c, cdf(AxisProfile(np.ones(2), VERTICAL)))
        u = float(rng.uniform(0, n))
        got = fld.fx(u)
        ref = bisect_inverse_cdf(c.cumulative, u / n)
        worst = max(worst, abs(got - ref))
    report("cdf-inversion-oracle", worst < 1e-6, f"max |pl - bisect| {worst:.2e}")


def test_mass_to_extent_law():
    worst = 0.0
    for trial in range(500):
        n = int(rng.integers(4, 65))
        profile = rng.uniform(1e-3, 1.0, n)
        fld = build_warp(
            cdf(AxisProfile(profile, HORIZONTAL)),
            cdf(AxisProfile(np.ones(4), VERTICAL)),
        )
        a, b = np.sort(rng.uniform(0, n, 2))
        frac = interval_mass_fraction(profile + EPS_MASS, a, b)
        extent = fld.inverse_x(b) - fld.inverse_x(a)
        worst = max(worst, abs(extent - n * frac))
    report("mass-to-extent", worst <= 1.0, f"max |extent - dim*mass| {worst:.2e} px")


def test_box_round_trip():
    attention = rng.uniform(0.05, 1.0, (48, 56))
    fld = field_from_attention(attention)
    worst = 0.0
    for trial in range(100):
        x0, x1 = np.sort(rng.uniform(0, 56, 2))
        y0, y1 = np.sort(rng.uniform(0, 48, 2))
        box = BoundingBox(x0, y0, x1, y1)
        back = warp_box_inverse(warp_box_forward(box, fld), fld)
        worst = max(
            worst,
            abs(back.x_min - box.x_min),
            abs(back.x_max - box.x_max),
            abs(back.y_min - box.y_min),
            abs(back.y_max - box.y_max),
        )
    report("box-round-trip", worst <= 1.0, f"max corner err {worst:.2e} px")


def test_expansion_property():
    from attwarp._kernels import box_smooth

    expanded = 0
    total = 200
    for trial in range(total):
        n = 64
        bw = int(rng.integers(8, 25))
        bh = int(rng.integers(8, 25))
        x0 = int(rng.integers(0, n - bw))
        y0 = int(rng.integers(0, n - bh))
        box = BoundingBox.from_pixels(x0, y0, x0 + bw - 1, y0 + bh - 1)
        attention = np.full((n, n), 1e-4)
        attention[y0 + bh // 2, x0 + bw // 2] = 1.0
        attention = box_smooth(attention, 5)
        fld = field_from_attention(attention)
        ratio = warp_box_forward(box, fld).area / box.area
        if ratio > 1.0:
            expanded += 1
    rate = expanded / total
    report("expansion-property", rate >= 0.95, f"{100 * rate:.1f}% of boxes expanded")


def test_chain_termination():
    img = smooth_image(64, 64, seed=1)

    _, _, trace_const = run_chain(img, lambda im: np.ones(im.shape[:2]))
    const_ok = (
        trace_const.stop_reason == STOP_KL
        and len(trace_const.steps) == 1
        and trace_const.steps[0].kl == 0.0
    )

    bump = np.full((64, 64), 0.01)
    bump[12:20, 40:52] = 2.0
    _, _, trace_fixed = run_chain(img, lambda im: bump, ChainConfig(kl_epsilon=0.0))
    fixed_ok = trace_fixed.stop_reason == STOP_MAX and len(trace_fixed.steps) == 5

    state = {"d": 0}

    def converging(im):
        lam = 0.6 ** state["d"]
        state["d"] += 1
        yy, xx = np.meshgrid(np.arange(64), np.arange(64), indexing="ij")
        return 0.8 + lam * np.exp(-((yy - 30) ** 2 + (xx - 34) ** 2) / 128.0)

    warped, composed, _ = run_chain(img, converging, ChainConfig(kl_epsilon=0.0, max_iterations=3))
    once = warp_image(img, composed).pixels
    mae = float(np.abs(once - warped.pixels).mean())
    composed_ok = mae <= 2.0 / 255.0

    report(
        "chain-termination",
        const_ok and fixed_ok and composed_ok,
        f"const depth {len(trace_const.steps)}, fixed depth {len(trace_fixed.steps)}, "
        f"composed-vs-iterated MAE {mae:.2e}",
    )


def test_metric_invariances():
    pointing_ok = True
    for trial in range(100):
        a = rng.random((24, 24))
        x0, y0 = rng.integers(0, 16, 2)
        box = BoundingBox.from_pixels(int(x0), int(y0), int(x0) + 7, int(y0) + 7)
        base = pointing_game(a, box)
        c1, c2 = rng.uniform(0.1, 5.0, 2)
        transforms = [
            lambda x: np.sqrt(x),
            lambda x: x**2,
            lambda x: c1 * x + c2,
            lambda x: np.exp(x / 2.0),
            lambda x: x**3,
        ]
        t = transforms[trial % len(transforms)]
        if pointing_game(t(a), box) != base:
            pointing_ok = False

    proportion_ok = True
    for trial in range(100):
        a = rng.random((18, 22)) + 0.01
        x0, y0 = int(rng.integers(0, 12)), int(rng.integers(0, 10))
        box = BoundingBox.from_pixels(x0, y0, x0 + 6, y0 + 5)
        base = proportion(a, box)
        scale = float(rng.uniform(1e-3, 1e3))
        if abs(proportion(scale * a, box) - base) > 1e-12:
            proportion_ok = False

    full = proportion(rng.random((16, 16)) + 0.01, BoundingBox(0, 0, 16, 16))
    full_ok = full == 1.0

    report(
        "metric-invariances",
        pointing_ok and proportion_ok and full_ok,
        f"pointing stable, proportion stable, full-box proportion {full}",
    )


def test_aggregation_oracle():
    worst = 0.0
    for trial in range(25):
        grid_h, grid_w = int(rng.integers(2, 6)), int(rng.integers(2, 6))
        weights = rng.random((2, 4, 3, grid_h * grid_w))
        raw = RawAttentionTensor(weights=weights, layer_ids=(0, 1), grid_h=grid_h, grid_w=grid_w)
        got = aggregate(raw, {0, 1})
        ref = triple_loop_aggregate(weights, [0, 1], grid_h, grid_w)
        worst = max(worst, float(np.abs(got - ref).max()))
    report("aggregation-oracle", worst < 1e-9, f"max |mean - loops| {worst:.2e}")


EXTRACTOR_OUT = Path(__file__).resolve().parent.parent / "extractor" / "out" / "roundtrip"


@pytest.mark.skipif(
    not (EXTRACTOR_OUT / "raw.atw1").exists(),
    reason="extractor artifacts not present; run the extractor test suite first",
)
def test_extractor_round_trip():
    raw = RawAttentionTensor.load(EXTRACTOR_OUT / "raw.atw1", EXTRACTOR_OUT / "raw.json")
    from attwarp import io

    own_mean = io.read_atw1(EXTRACTOR_OUT / "mean.atw1")
    meta = json.loads((EXTRACTOR_OUT / "raw.json").read_text())
    ours = aggregate(raw, meta["layer_ids"])
    err = float(np.abs(ours - own_mean).max())
    ok = err < 1e-5 and own_mean.shape == (raw.grid_h, raw.grid_w) and np.all(own_mean >= 0)
    report("extractor-round-trip", ok, f"max |aggregate - adapter mean| {err:.2e}")
