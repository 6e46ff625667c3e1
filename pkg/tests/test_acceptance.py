"""Acceptance criteria, one test each, with a PASS/FAIL line in the terminal summary.

Run alone with ``pytest tests/test_acceptance.py -v``.
"""

import math
import time

import numpy as np
import pytest

from conftest import record_criterion
from oracles import analytic_face, curation_fixture, grid_search
from panodepth import toytrain as tt
from panodepth.curate import curate_sample, curation_verdict, decode_depth_u16
from panodepth.loss import robust_stats, si_loss, si_loss_subgrad, ssi_loss
from panodepth.maps import DepthMap, DisparityMap, ErpGrid
from panodepth.metrics import align, compute_metrics, lsq_affine
from panodepth.pad import box_kernel, circular_pad, conv2d, seam_discrepancy
from panodepth.sphere import (
    cube_zbuffer_to_erp,
    depth_to_pointcloud,
    dir_to_pixel,
    erp_directions,
    smooth_spherical_field,
)

# regression bounds for the toy ablation, frozen after the first full run of
# the default configuration (which gave val si_loss 0.0014, AbsRel 0.0003)
FROZEN_BASE_VAL_SI = 1e-2
FROZEN_BASE_ABSREL = 0.05


def conclude(number, title, checks, detail=""):
    failed = [name for name, ok in checks.items() if not ok]
    ok = not failed
    record_criterion(number, title, ok, detail if ok else f"failed: {', '.join(failed)}; {detail}")
    assert ok, f"criterion {number} failed checks: {failed} ({detail})"


def test_criterion_1_geometry_round_trip():
    t0 = time.perf_counter()
    worst_px, worst_norm = 0.0, 0.0
    for h in (8, 32, 259):
        grid = ErpGrid.from_height(h)
        rows, cols = dir_to_pixel(erp_directions(grid), grid)
        rr, cc = np.meshgrid(np.arange(h), np.arange(2 * h), indexing="ij")
        worst_px = max(worst_px, np.max(np.abs(rows - rr)), np.max(np.abs(cols - cc)))
        depth = np.random.default_rng(h).uniform(0.1, 100.0, grid.shape)
        cloud = depth_to_pointcloud(DepthMap(depth))
        worst_norm = max(worst_norm, np.max(np.abs(np.linalg.norm(cloud.points, axis=1) - depth.ravel())))
    elapsed = time.perf_counter() - t0
    conclude(1, "geometry round trip", {
        "pixel round trip < 1e-9": worst_px < 1e-9,
        "point norms == depth within 1e-9": worst_norm < 1e-9,
        "runtime < 5 s": elapsed < 5.0,
    }, f"pixel err {worst_px:.2e}, norm err {worst_norm:.2e}, {elapsed:.2f} s")


def test_criterion_2_cubemap_oracle():
    t0 = time.perf_counter()
    worst, covered = 0.0, []
    for names in (("front", "back", "left", "right"), ("front", "back", "left", "right", "up", "down")):
        for radius in (1.0, 10.0, 100.0):
            faces = [analytic_face(n, 64, radius) for n in names]
            erp = cube_zbuffer_to_erp(faces, ErpGrid(64, 128))
            worst = max(worst, np.max(np.abs(erp.valid_values() - radius)))
            covered.append(erp.n_valid)
    elapsed = time.perf_counter() - t0
    conclude(2, "cubemap oracle", {
        "constant depth within 1e-6": worst < 1e-6,
        "covered pixels exist": min(covered) > 0,
        "six faces cover the sphere": covered[-1] == 64 * 128,
        "runtime < 5 s": elapsed < 5.0,
    }, f"max error {worst:.2e}, {elapsed:.2f} s")


def test_criterion_3_circular_padding():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(8, 16, 2))
    kernel = rng.normal(size=(3, 3, 2, 2))
    base = conv2d(x, kernel, "circular")
    worst = max(
        np.max(np.abs(conv2d(np.roll(x, k, axis=1), kernel, "circular") - np.roll(base, k, axis=1)))
        for k in range(16)
    )
    const = conv2d(np.full((8, 16, 2), 3.0), box_kernel(3, 2), "circular")
    hand = circular_pad(np.array([[1, 2, 3, 4], [5, 6, 7, 8]]), 1)
    expected = np.array([[2, 3, 4, 1, 2, 3], [4, 1, 2, 3, 4, 1], [8, 5, 6, 7, 8, 5], [6, 7, 8, 5, 6, 7]])
    conclude(3, "circular-padding equivariance", {
        "all 16 rolls commute within 1e-12": worst <= 1e-12,
        "constant maps to constant": bool(np.all(const == const[0, 0, 0])) and const[0, 0, 0] == pytest.approx(3.0, abs=1e-15),
        "hand-derived 2x4 p=1 tensor": np.array_equal(hand, expected),
    }, f"max roll error {worst:.2e}")


def _fd(f, x, h=1e-6):
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        e = np.zeros_like(x)
        e[idx] = h
        g[idx] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def test_criterion_4_loss_laws():
    rng = np.random.default_rng(4)
    scale_err = shift_err = ssi_err = 0.0
    for _ in range(20):
        d = rng.uniform(0.05, 5.0, (6, 12))
        a, b, c = rng.uniform(0.1, 10.0), rng.uniform(-3, 3), rng.uniform(-2, 2)
        scale_err = max(scale_err, si_loss(a * d, d).value)
        shift_err = max(shift_err, abs(si_loss(d + c, d).value - abs(c) / robust_stats(d).s))
        ssi_err = max(ssi_err, ssi_loss(a * d + b, d).value)
    worst_rel, n_instances = 0.0, 0
    while n_instances < 100:
        d_pd, d_gt = rng.uniform(0.1, 2.0, (5, 9)), rng.uniform(0.1, 2.0, (5, 9))
        grad, flags = si_loss_subgrad(d_pd, d_gt, return_flags=True)
        if flags.any():
            continue
        fd = _fd(lambda x: si_loss(x, d_gt).value, d_pd)
        worst_rel = max(worst_rel, np.linalg.norm(grad - fd) / np.linalg.norm(fd))
        n_instances += 1
    conclude(4, "loss laws", {
        "si_loss(a d, d) == 0": scale_err < 1e-12,
        "si_loss(d + c, d) == |c| / s(d) within 1e-10": shift_err < 1e-10,
        "ssi_loss(a d + b, d) == 0": ssi_err < 1e-12,
        "subgradient vs FD rel err < 1e-4": worst_rel < 1e-4,
    }, f"shift-law err {shift_err:.1e}, subgradient rel err {worst_rel:.1e} over {n_instances}")


def test_criterion_5_alignment_oracle():
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(50):
        n = int(rng.integers(2, 65))
        p = rng.normal(0, 1.5, n)
        g = rng.uniform(-4, 4) * p + rng.uniform(-4, 4) + rng.normal(0, 0.3, n)
        fit = lsq_affine(p, g)
        s, t = grid_search(p, g)
        worst = max(worst, abs(fit.scale - s), abs(fit.shift - t))
    gt = DepthMap(rng.uniform(0.5, 10.0, (8, 16)))
    rec = {
        "scale_disparity": align(DisparityMap(3.0 / gt.values), gt, "scale_disparity"),
        "affine_disparity": align(DisparityMap(2.0 / gt.values + 0.1), gt, "affine_disparity"),
        "affine_depth": align(DepthMap(0.5 * gt.values + 1.0), gt, "affine_depth"),
    }
    errs = {k: np.max(np.abs(v.values - gt.values)) for k, v in rec.items()}
    checks = {"grid search within 2e-3 on 50 instances": worst <= 2e-3}
    checks.update({f"{k} exact recovery within 1e-10": e < 1e-10 for k, e in errs.items()})
    conclude(5, "alignment oracle", checks, f"max grid deviation {worst:.1e}, recovery err {max(errs.values()):.1e}")


def test_criterion_6_metric_fixtures():
    one = compute_metrics(np.array([[2.0]]), np.array([[1.0]]))
    gt = np.array([[1.0, 2.0, 4.0, 0.5]])
    scaled = compute_metrics(1.2 * gt, gt)
    d = lambda r: compute_metrics(np.array([[2.0 * r]]), np.array([[2.0]])).delta1
    conclude(6, "metric fixtures", {
        "single pixel AbsRel/MAE/RMSE == 1": (one.absrel, one.mae, one.rmse) == (1.0, 1.0, 1.0),
        "single pixel RMSElog == log10 2": one.rmselog == math.log10(2.0),
        "single pixel delta1 == 0": one.delta1 == 0.0,
        "1.2x delta1 == 1": scaled.delta1 == 1.0,
        "1.2x AbsRel == 0.2": abs(scaled.absrel - 0.2) <= 1e-15,
        "delta1 at 1.25 - 1e-9 inside": d(1.25 - 1e-9) == 1.0,
        "delta1 at 1.25 + 1e-9 outside": d(1.25 + 1e-9) == 0.0,
    }, f"1.2x AbsRel {scaled.absrel!r}")


def _map(max_depth, ratio):
    values = np.zeros(10000)
    values[:int(round(ratio * 10000))] = 1.0
    values[0] = max_depth
    return DepthMap(values.reshape(100, 100))


def test_criterion_7_curation_thresholds():
    top = decode_depth_u16(np.array([[65535]], np.uint16)).values[0, 0]
    fixture = {k: curate_sample(v, ErpGrid(32, 64))[0] for k, v in curation_fixture().items()}
    conclude(7, "curation thresholds", {
        "raw 65535 -> 127.998046875 m": top == 127.998046875,
        "max > 127.5 rejected": not curation_verdict(_map(127.51, 0.5)).accepted,
        "ratio < 8% rejected": not curation_verdict(_map(10.0, 0.0799)).accepted,
        "max == 127.5 accepted": curation_verdict(_map(127.5, 0.5)).accepted,
        "ratio == 8% accepted": curation_verdict(_map(10.0, 0.08)).accepted,
        "fixture of 3 yields exactly 1 acceptance": sum(v.accepted for v in fixture.values()) == 1,
    }, f"accepted: {[k for k, v in fixture.items() if v.accepted]}")


@pytest.mark.slow
def test_criterion_8_ablation_direction():
    t0 = time.perf_counter()
    config = tt.TrainConfig(mode="base")
    val = tt.generate_scenes(config.val_seeds(), config.grid, config.token_dim)
    result = tt.train(config, scenes_val=val)
    base = [r.absrel for r in tt.evaluate_scenes("base", val, result.heads.shift)]
    no_shift = [r.absrel for r in tt.evaluate_scenes("no_shift", val)]
    val_si = tt.mean_si_loss("base", val, result.heads.shift)
    mean_absrel = tt.evaluate_run(result, val).absrel
    elapsed = time.perf_counter() - t0
    conclude(8, "ablation direction", {
        ">= 20 paired validation seeds": len(val) >= 20,
        "median AbsRel base < no_shift": np.median(base) < np.median(no_shift),
        f"base val si_loss < {FROZEN_BASE_VAL_SI}": val_si < FROZEN_BASE_VAL_SI,
        f"base AbsRel < {FROZEN_BASE_ABSREL}": mean_absrel < FROZEN_BASE_ABSREL,
        "runtime < 10 min": elapsed < 600,
    }, f"median AbsRel base {np.median(base):.4g} vs no_shift {np.median(no_shift):.4g}; "
       f"val si {val_si:.4g}, AbsRel {mean_absrel:.4g}, {elapsed:.0f} s")


def test_criterion_9_seam_demonstration():
    grid = ErpGrid(16, 32)
    wins, ratios = 0, []
    for trial in range(100):
        x = smooth_spherical_field(grid, np.random.default_rng(trial))
        c = seam_discrepancy(conv2d(x, box_kernel(3), "circular"))
        z = seam_discrepancy(conv2d(x, box_kernel(3), "zero"))
        wins += c <= z
        ratios.append(c / z)
    conclude(9, "seam demonstration", {"circular <= zero in >= 95 of 100 trials": wins >= 95},
             f"{wins}/100, median circular/zero ratio {np.median(ratios):.3f}")
