"""
Acceptance suite: one test per criterion, each logging a PASS/FAIL line that
is repeated in the terminal summary. Run with ``pytest tests/test_acceptance.py``.
"""

import math
import time

import numpy as np

from gradcheck import berhu_instance, chamfer_instance, distfit_instance
from oracles import (
    central_difference,
    metrics_loop,
    relative_error,
    rotate_away,
    unit_vector,
    vector_angle,
    voronoi_bruteforce,
)
from spheredepth.cddc import DepthRange, bin_centers, depth_from_distribution, uniform_histogram
from spheredepth.distfit import FitConfig, fit_bins, loss_and_grad
from spheredepth.fusion_losses import FusionWeights, adaptive_fuse, berhu, chamfer_1d
from spheredepth.io_formats import read_hdt, read_pfm, write_hdt, write_pfm
from spheredepth.metrics import evaluate, evaluate_masked, row_mask
from spheredepth.pipeline import run_pipeline
from spheredepth.resample import coverage_count, extract_patches, geometric_fuse
from spheredepth.sfa import build_index_map
from spheredepth.sphere_geom import ErpGeometry, gnomonic_forward, gnomonic_inverse, make_layout, pixel_angles
from spheredepth.synth import (
    SceneSpec,
    VoronoiCells,
    oracle_direction_features,
    oracle_onehot_probability,
    oracle_patch_vectors,
)

FOV = math.radians(80)
R10 = DepthRange(0.0, 10.0)


def test_criterion_01_projection_round_trip(acceptance):
    rng = np.random.default_rng(101)
    n = 100_000
    theta_c = rng.uniform(-math.pi, math.pi, n)
    phi_c = np.arcsin(rng.uniform(-1, 1, n))
    # points up to the patch corner angle (atan(sqrt(2) tan 40 deg) ~ 49.9 deg)
    corner = math.atan(math.sqrt(2) * math.tan(FOV / 2))
    angle = rng.uniform(0, corner, n)
    theta, phi, vec = rotate_away(theta_c, phi_c, angle, rng.uniform(0, 2 * math.pi, n))

    timings = []
    for _ in range(3):
        start = time.perf_counter()
        u, v = gnomonic_forward(theta, phi, (theta_c, phi_c))
        theta2, phi2 = gnomonic_inverse(u, v, (theta_c, phi_c))
        timings.append(time.perf_counter() - start)
    err = vector_angle(vec, unit_vector(theta2, phi2))
    elapsed = min(timings)
    acceptance.check(
        1,
        "projection round trip on 1e5 in-FoV pairs",
        err.max() < 1e-9 and elapsed < 1.0,
        f"max error {err.max():.2e} rad, {elapsed * 1e3:.1f} ms",
    )


def test_criterion_02_resampling_fidelity(acceptance):
    geom = ErpGeometry(512, 1024)
    theta, phi = pixel_angles(geom)
    field = np.cos(phi) * np.sin(theta) + 0.5 * np.sin(phi) ** 2 + 0.3 * np.cos(2 * theta) * np.cos(phi) ** 2
    layout = make_layout(18, FOV, 128)
    fused = geometric_fuse(extract_patches(field, layout), geom)
    covered = coverage_count(layout, geom) > 0
    rel = np.sqrt(np.mean((fused - field) ** 2)) / np.ptp(field)

    rng = np.random.default_rng(102)
    t_sample = rng.uniform(-math.pi, math.pi, 10_000)
    p_sample = np.arcsin(rng.uniform(-1, 1, 10_000))
    inside = np.zeros(10_000, dtype=bool)
    t = layout.half_extent
    for center in layout.centers:
        near = vector_angle(unit_vector(t_sample, p_sample), center.to_vector()) < math.radians(85)
        u, v = gnomonic_forward(t_sample[near], p_sample[near], center)
        inside[np.flatnonzero(near)[(np.abs(u) <= t) & (np.abs(v) <= t)]] = True
    acceptance.check(
        2,
        "extract -> fuse fidelity at 512x1024, N=18, 80 deg, 128 px",
        rel < 0.01 and covered.all() and inside.all(),
        f"RMSE {rel:.2e} of range, uncovered pixels {int((~covered).sum())}, "
        f"uncovered samples {int((~inside).sum())}",
    )


def test_criterion_03_sfa_voronoi(acceptance):
    geom = ErpGeometry(128, 256)
    theta, phi = pixel_angles(geom)
    details, ok = [], True
    for n in (18, 26):
        layout = make_layout(n, FOV)
        index_map = build_index_map(oracle_direction_features(geom), oracle_patch_vectors(layout))
        labels, _ = voronoi_bruteforce(theta, phi, [(c.theta, c.phi) for c in layout.centers])
        agree = np.mean(index_map.assignment == labels)
        ok &= agree == 1.0
        details.append(f"N={n}: {agree:.2%}")
    acceptance.check(3, "index map equals brute-force Voronoi at 128x256", ok, ", ".join(details))


def _random_logits(rng, bins):
    kind = rng.integers(0, 4)
    if kind == 0:
        logits = rng.uniform(0, 1, bins)
    elif kind == 1:
        logits = rng.exponential(10.0 ** rng.uniform(-3, 3), bins)
    elif kind == 2:
        logits = np.exp(rng.normal(0, 6, bins))
    else:
        logits = rng.uniform(0, 5, bins) * (rng.random(bins) < 0.3)
    return logits


def test_criterion_04_bin_invariants(acceptance):
    rng = np.random.default_rng(104)
    failures = 0
    trials = 0
    for bins in (2, 20, 50, 100, 150):
        for _ in range(2000):
            d_min = rng.uniform(0, 5)
            r = DepthRange(d_min, d_min + rng.uniform(0.1, 100))
            h = bin_centers(_random_logits(rng, bins), r)
            good = (
                np.all(h.widths > 0)
                and abs(h.widths.sum() - r.span) <= 1e-5 * r.span
                and np.all(np.diff(h.centers) > 0)
            )
            failures += not good
            trials += 1
    eq = bin_centers([3.0, 3.0, 3.0, 3.0], DepthRange(0, 8))
    pair = bin_centers([1.0, 3.0], R10, epsilon=1e-9)
    closed = (
        np.allclose(eq.widths, 2, atol=1e-6, rtol=0)
        and np.allclose(eq.centers, [1, 3, 5, 7], atol=1e-6, rtol=0)
        and np.allclose(pair.widths, [2.5, 7.5], atol=1e-6, rtol=0)
        and np.allclose(pair.centers, [1.25, 6.25], atol=1e-6, rtol=0)
    )
    acceptance.check(
        4,
        "bin width/center invariants and closed forms",
        failures == 0 and trials == 10_000 and closed,
        f"{failures}/{trials} invariant failures, closed forms {'match' if closed else 'differ'}",
    )


def test_criterion_05_quantization(acceptance):
    rng = np.random.default_rng(105)
    hist = uniform_histogram(100, R10)
    gt = rng.uniform(0.0, 10.0, size=(256, 512))
    recon = depth_from_distribution(oracle_onehot_probability(gt, hist.centers), hist.centers)
    quant = np.max(np.abs(recon - gt))

    geom = ErpGeometry(256, 512)
    worst, interior_frac = 0.0, []
    for n in (18, 26):
        layout = make_layout(n, FOV)
        depths = tuple(rng.uniform(0.5, 9.5, n))
        result = run_pipeline(SceneSpec(VoronoiCells(layout, depths), R10, seed=n), geom, layout)
        err = np.abs(result.regional - result.gt)[result.interior]
        worst = max(worst, float(err.max()))
        interior_frac.append(f"N={n} interior {result.interior.mean():.0%}")
    acceptance.check(
        5,
        "one-hot quantization bound and Voronoi fixture",
        quant <= 0.05 and worst <= 1e-9,
        f"quantization max {quant:.4f} m, fixture interior max {worst:.1e} m, " + ", ".join(interior_frac),
    )


def test_criterion_06_gradient_checks(acceptance):
    rng = np.random.default_rng(106)
    worst = {}
    errs = []
    for _ in range(100):
        pred, gt = berhu_instance(rng)
        _, grad = berhu(pred, gt)
        errs.append(relative_error(grad, central_difference(lambda p: berhu(p, gt)[0], pred)))
    worst["berhu"] = max(errs)
    errs = []
    for _ in range(100):
        x, c = chamfer_instance(rng)
        _, grad = chamfer_1d(x, c)
        errs.append(relative_error(grad, central_difference(lambda cc: chamfer_1d(x, cc, False)[0], c)))
    worst["chamfer"] = max(errs)
    errs = []
    for _ in range(50):
        params, x, r = distfit_instance(rng)
        _, grad = loss_and_grad(params, x, r)
        errs.append(relative_error(grad, central_difference(lambda p: loss_and_grad(p, x, r)[0], params)))
    worst["distfit"] = max(errs)
    acceptance.check(
        6,
        "analytic gradients vs central differences (100/100/50)",
        all(v < 1e-4 for v in worst.values()),
        ", ".join(f"{k} {v:.1e}" for k, v in worst.items()),
    )


def test_criterion_07_distfit_descent(acceptance):
    rng = np.random.default_rng(0)
    x = np.concatenate([rng.normal(1.0, 0.1, 500), rng.normal(8.0, 0.1, 500)])
    ok, details = True, []
    for bins in (10, 100):
        trace = fit_bins(x, R10, FitConfig(bins=bins, steps=500), seed=0)
        ratio = trace.final_loss / trace.initial_loss
        monotone = bool(np.all(np.diff(trace.losses) <= 0))
        ok &= ratio < 0.1 and monotone and len(trace.losses) - 1 <= 500
        details.append(f"B={bins}: {ratio:.1%} of initial in {len(trace.losses) - 1} steps")
    acceptance.check(7, "bimodal bin fit below 10% of initial loss", ok, ", ".join(details))


def test_criterion_08_metrics(acceptance):
    rng = np.random.default_rng(108)
    gt = rng.uniform(0.5, 10, size=(64, 128))
    double = evaluate(2 * gt, gt)
    perfect = evaluate(gt, gt)
    checks = {
        "2x": double.abs_rel == 1.0 and double.delta3 == 0.0,
        "perfect": (perfect.abs_rel, perfect.sq_rel, perfect.rmse, perfect.rmse_log) == (0, 0, 0, 0)
        and (perfect.delta1, perfect.delta2, perfect.delta3) == (1, 1, 1),
    }
    worst = 0.0
    for _ in range(200):
        g = rng.uniform(0.1, 10, size=(4, 4))
        g[rng.random((4, 4)) < 0.2] = 0.0
        if not np.any(g > 0):
            continue
        p = rng.uniform(0.1, 10, size=(4, 4))
        got, want = evaluate(p, g).as_dict(), metrics_loop(p, g)
        worst = max(worst, max(abs(got[k] - want[k]) for k in want))
    checks["4x4"] = worst <= 1e-12
    mask = row_mask(512, 1024, 0.15, 0.15)
    excluded = np.flatnonzero(~mask.any(axis=1))
    checks["mask"] = excluded.tolist() == list(range(0, 76)) + list(range(436, 512)) and mask[76:436].all()
    g = rng.uniform(1, 5, size=(512, 8))
    p = g.copy()
    p[~row_mask(512, 8, 0.15, 0.15)] = 99.0
    checks["masked eval"] = evaluate_masked(p, g, 0.15, 0.15).abs_rel == 0.0
    acceptance.check(
        8,
        "metric closed forms, brute force and row masking",
        all(checks.values()),
        ", ".join(f"{k} {'ok' if v else 'FAIL'}" for k, v in checks.items()) + f", 4x4 max diff {worst:.1e}",
    )


def test_criterion_09_fusion(acceptance):
    rng = np.random.default_rng(109)
    mean_ok = identity_ok = True
    for _ in range(200):
        dh = rng.uniform(0.1, 10, size=(16, 32))
        dr = rng.uniform(0.1, 10, size=(16, 32))
        raw = rng.normal(0, 3)
        mean_ok &= np.array_equal(adaptive_fuse(dh, dr, FusionWeights(raw, raw)), (dh + dr) / 2)
        weights = FusionWeights(rng.normal(0, 10), rng.normal(0, 10))
        identity_ok &= np.array_equal(adaptive_fuse(dh, dh.copy(), weights), dh)
    acceptance.check(
        9,
        "equal weights give the exact mean, equal inputs pass through bit-wise",
        mean_ok and identity_ok,
        f"mean {'exact' if mean_ok else 'inexact'}, identity {'bit-wise' if identity_ok else 'differs'}",
    )


def test_criterion_10_io_round_trip(acceptance, tmp_path):
    rng = np.random.default_rng(110)
    dtypes = [np.float32, np.float64, np.uint8, np.uint32]
    hdt_bad = pfm_bad = 0
    for k in range(1000):
        shape = tuple(rng.integers(1, 9, size=rng.integers(1, 5)))
        dtype = dtypes[k % 4]
        if np.issubdtype(dtype, np.floating):
            arr = rng.normal(scale=10.0 ** rng.uniform(-5, 5), size=shape).astype(dtype)
        else:
            arr = rng.integers(0, np.iinfo(dtype).max, size=shape, endpoint=True).astype(dtype)
        path = tmp_path / "t.hdt"
        write_hdt(path, arr)
        first = path.read_bytes()
        back = read_hdt(path)
        write_hdt(path, back)
        hdt_bad += not (back.tobytes() == arr.tobytes() and back.shape == arr.shape and path.read_bytes() == first)

        h, w = rng.integers(1, 33, size=2)
        img = rng.normal(scale=100.0, size=(h, w) if k % 2 else (h, w, 3)).astype(np.float32)
        path = tmp_path / "m.pfm"
        write_pfm(path, img)
        first = path.read_bytes()
        back = read_pfm(path)
        write_pfm(path, back)
        pfm_bad += not (back.tobytes() == img.tobytes() and path.read_bytes() == first)
    acceptance.check(
        10,
        "HDT and PFM byte-identical round trips on 1000 random arrays",
        hdt_bad == 0 and pfm_bad == 0,
        f"HDT mismatches {hdt_bad}/1000, PFM mismatches {pfm_bad}/1000",
    )
