"""Acceptance criteria, one test per criterion.

Each test records a ``PASS``/``FAIL`` line (printed in the terminal summary by
conftest.py) before asserting, so a failing criterion is still reported.
Run just this suite with ``pytest tests/test_acceptance.py``.
"""
import time

import numpy as np
import pytest

from plainfinger.cli import main
from plainfinger.enhancement import (OrientationMask, enhance_selective, gabor_bank,
                                     orientation_mask, safe_arg)
from plainfinger.evaluation import MatchCriteria, candidate_pairs, match_minutiae
from plainfinger.extraction import decode_minutiae_maps, encode_minutiae_maps, nms
from plainfinger.losses import gradcheck_suite
from plainfinger.minutiae import Minutia, read_minutiae
from plainfinger.normalize import normalize
from plainfinger.orientation import (AngleDistribution, decode_theta_ave, decode_theta_max,
                                     encode_angle, orientation_field, sobel_gradients,
                                     structure_tensor)
from plainfinger.pipeline import run
from plainfinger.raster import conv2d, write_pgm
from plainfinger.synth import SynthSpec, ellipse_mask, phase_field, random_minutiae, synth_print

from oracles import circ_diff, conv2d_loop, nms_brute

RESULTS = {}


def record(n, title, ok, detail):
    RESULTS[n] = f"criterion {n:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    print(RESULTS[n])
    assert ok, RESULTS[n]


def circ180(a, b):
    d = np.abs(np.asarray(a) - b) % 180.0
    return np.minimum(d, 180.0 - d)


def estimate_orientation(image):
    gx, gy = sobel_gradients(normalize(image))
    return orientation_field(structure_tensor(gx, gy, 16)).angles


# 1 -----------------------------------------------------------------------------

def test_criterion_01_conv2d_oracle():
    t0 = time.perf_counter()
    rng = np.random.default_rng(101)
    worst = 0.0
    for i in range(100):
        h, w = rng.integers(5, 24, size=2)
        kh, kw = rng.integers(1, min(h, w, 7) + 1, size=2)
        img = rng.normal(size=(h, w))
        ker = rng.normal(size=(kh, kw))
        pad = ("replicate", "zero")[i % 2]
        worst = max(worst, float(np.max(np.abs(conv2d(img, ker, pad) - conv2d_loop(img, ker, pad)))))
    dt = time.perf_counter() - t0
    record(1, "conv2d vs loop oracle", worst <= 1e-12 and dt < 10,
           f"max |diff| {worst:.2e} (<= 1e-12), {dt:.1f}s (< 10s)")


# 2 -----------------------------------------------------------------------------

def test_criterion_02_orientation_accuracy():
    t0 = time.perf_counter()
    worst_mean = 0.0
    worst_rot = 0.0
    b = 24
    for period in (6.0, 9.0, 12.0):
        for k in range(18):
            theta = 10.0 * k
            img, _ = synth_print(SynthSpec(width=128, height=128, orientation=theta, period=period))
            est = estimate_orientation(img)
            worst_mean = max(worst_mean, float(circ180(est[b:-b, b:-b], theta).mean()))
            # rotating the image by 90 degrees rotates every orientation by 90 degrees
            rot = estimate_orientation(np.rot90(img))
            back = np.rot90(est)
            worst_rot = max(worst_rot, float(circ180(rot[b:-b, b:-b], back[b:-b, b:-b] + 90.0).mean()))
    dt = time.perf_counter() - t0
    ok = worst_mean < 2.0 and worst_rot < 2.0 and dt < 30
    record(2, "orientation accuracy", ok,
           f"worst interior mean error {worst_mean:.3f} deg, rotation {worst_rot:.3f} deg (< 2), "
           f"{dt:.1f}s (< 30s)")


# 3 -----------------------------------------------------------------------------

def test_criterion_03_selective_equivalence():
    t0 = time.perf_counter()
    h, w, seam = 96, 112, 56
    ori = np.where(np.arange(w)[None, :] < seam, 30.0, 120.0) * np.ones((h, 1))
    rng = np.random.default_rng(3)
    img, _ = synth_print(SynthSpec(width=w, height=h, orientation=ori, noise_sigma=0.2), seed=3)
    bank = gabor_bank()
    mask = orientation_mask(orientation_field_from(ori), bank)
    sel = enhance_selective(img, bank, mask)
    # region-wise direct filtering: each half filtered on its own
    ref = np.zeros((h, w))
    amp = np.zeros((h, w))
    for lo, hi, theta in ((0, seam, 30.0), (seam, w, 120.0)):
        k = bank.kernels[int(np.argmin(circ180(bank.thetas, theta)))]
        c = conv2d(img[:, lo:hi], k)
        ref[:, lo:hi] = safe_arg(c)
        amp[:, lo:hi] = np.abs(c)
    far = np.abs(np.arange(w) - seam + 0.5)[None, :] >= 13 * np.ones((h, 1))
    far &= np.abs(np.arange(w) - (seam - 0.5))[None, :] >= 13
    ok_amp = np.abs(sel.amplitude - amp)[far].max()
    d = np.abs(np.angle(np.exp(1j * (sel.phase - ref))))[far].max()
    dt = time.perf_counter() - t0
    worst = max(float(ok_amp), float(d))
    record(3, "selective-convolution equivalence", worst <= 1e-9 and dt < 30,
           f"max phase/amplitude diff {worst:.2e} at >= 13 px from the seam (<= 1e-9), {dt:.1f}s")


def orientation_field_from(raster):
    from plainfinger.orientation import OrientationField
    return OrientationField(np.asarray(raster, dtype=np.float64))


# 4 -----------------------------------------------------------------------------

def test_criterion_04_enhancement_robustness():
    t0 = time.perf_counter()
    size, b = 256, 32
    fg = ellipse_mask(size, size, 0.9)
    minutiae = [(90, 100, 1), (170, 150, -1)]
    spec = SynthSpec(width=size, height=size, orientation=35.0, minutiae=minutiae, foreground=fg)
    clean, _ = synth_print(spec)
    psi = phase_field(spec)
    interior = np.zeros((size, size), bool)
    interior[b:-b, b:-b] = True
    # foreground interior: at least the template radius inside the ellipse
    from plainfinger.raster import box_sum
    inside = box_sum(fg.astype(float), 2 * 12 + 1) > (2 * 12 + 1) ** 2 - 0.5
    region = interior & inside
    e = run(clean).enhanced.phase
    phase_corr = float(np.abs(np.mean(np.exp(1j * (e - psi))[region])))

    noisy_spec = SynthSpec(**{**spec.__dict__, "noise_sigma": 0.5 * spec.amplitude})
    corrs = []
    for seed in range(5):
        noisy, _ = synth_print(noisy_spec, seed=seed)
        en = np.cos(run(noisy).enhanced.phase)
        corrs.append(float(np.corrcoef(en[region], np.cos(psi)[region])[0, 1]))
    dt = time.perf_counter() - t0
    ok = phase_corr >= 0.99 and min(corrs) >= 0.9 and dt < 30
    record(4, "enhancement robustness", ok,
           f"clean phase correlation {phase_corr:.4f} (>= 0.99), noisy cos correlation "
           f"min {min(corrs):.4f} over 5 seeds (>= 0.9), {dt:.1f}s")


# 5 -----------------------------------------------------------------------------

def test_criterion_05_extraction():
    t0 = time.perf_counter()
    matched = n_pred = n_gt = 0
    for s in range(20):
        rng = np.random.default_rng(100 + s)
        planted = random_minutiae(rng, 256, 256, 5)
        assert {p for _, _, p in planted} == {1, -1}
        spec = SynthSpec(width=256, height=256, orientation=float(rng.uniform(0, 180)),
                         global_phase=float(rng.uniform(0, 2 * np.pi)), minutiae=planted,
                         noise_sigma=0.3)
        img, truth = synth_print(spec, seed=s)
        r = match_minutiae(run(img).minutiae, truth, MatchCriteria(15.0, 30.0))
        matched += len(r.pairs)
        n_pred += r.n_pred
        n_gt += r.n_gt
    p = matched / n_pred if n_pred else 1.0
    rc = matched / n_gt
    dt = time.perf_counter() - t0
    record(5, "extraction on 20 synthetic prints", p >= 0.9 and rc >= 0.9 and dt < 120,
           f"precision {p:.3f}, recall {rc:.3f} (>= 0.9 each; {matched}/{n_pred}/{n_gt}), {dt:.1f}s")


# 6 -----------------------------------------------------------------------------

def test_criterion_06_gradients():
    t0 = time.perf_counter()
    results = gradcheck_suite(seed=0) + gradcheck_suite(seed=1)
    worst = max(r.max_error for r in results)
    dt = time.perf_counter() - t0
    detail = ", ".join(f"{r.name} {r.max_error:.1e}" for r in results[:3])
    record(6, "loss gradient checks", worst < 1e-5 and dt < 60,
           f"{detail}; worst over 2 seeds {worst:.1e} (< 1e-5), {dt:.1f}s")


# 7 -----------------------------------------------------------------------------

def test_criterion_07_codec_round_trips():
    t0 = time.perf_counter()
    worst = {}
    for span, bins in ((180, 90), (360, 180)):
        half = 0.5 * (span // bins)
        grid = np.arange(0.0, span, 1.0)
        probs = np.stack([encode_angle(t, bins=bins, span=span) for t in grid])
        dist = AngleDistribution(probs, span=span)
        err = np.abs(decode_theta_max(dist) - grid) % span
        err = np.minimum(err, span - err)
        worst[f"max{span}"] = float(err.max() / half)
        if span == 180:
            e2 = circ180(decode_theta_ave(dist), grid)
            worst["ave180"] = float(e2.max() / half)
    rng = np.random.default_rng(7)
    pos_ok = True
    dir_err = 0.0
    for _ in range(50):
        cells = rng.choice(32 * 32, size=12, replace=False)
        ms = [Minutia(float(8 * (c % 32) + rng.integers(8)), float(8 * (c // 32) + rng.integers(8)),
                      float(rng.uniform(0, 360)), 1.0) for c in cells]
        back = decode_minutiae_maps(encode_minutiae_maps(ms, 256, 256), nms_radius=None)
        key = lambda m: (m.x, m.y)
        a, bb = sorted(ms, key=key), sorted(back, key=key)
        pos_ok &= [key(m) for m in a] == [key(m) for m in bb]
        if len(a) == len(bb):
            d = np.abs(np.array([m.direction for m in a]) - [m.direction for m in bb]) % 360
            dir_err = max(dir_err, float(np.minimum(d, 360 - d).max()))
    dt = time.perf_counter() - t0
    ok = max(worst.values()) <= 1.0 and pos_ok and dir_err <= 1.0 and dt < 10
    record(7, "codec round trips", ok,
           "angle error / half bin " + ", ".join(f"{k} {v:.2f}" for k, v in worst.items())
           + f" (<= 1); maps positions {'exact' if pos_ok else 'MISMATCH'}, "
           f"direction {dir_err:.3f} deg (<= 1), {dt:.1f}s")


# 8 -----------------------------------------------------------------------------

def _max_matching(pred, gt, c):
    from scipy.optimize import linear_sum_assignment
    if not pred or not gt:
        return 0
    cost = np.ones((len(pred), len(gt)))
    for _, i, j in candidate_pairs(pred, gt, c):
        cost[i, j] = 0.0
    r, col = linear_sum_assignment(cost)
    return int(np.sum(cost[r, col] == 0))


def test_criterion_08_nms_and_matching():
    t0 = time.perf_counter()
    rng = np.random.default_rng(8)
    nms_ok = True
    for _ in range(100):
        n = int(rng.integers(0, 60))
        ms = [Minutia(float(rng.integers(0, 100)), float(rng.integers(0, 100)), 0.0,
                      float(rng.choice([0.5, 0.6, 0.7, rng.uniform()]))) for _ in range(n)]
        radius = float(rng.uniform(1, 20))
        nms_ok &= nms(ms, radius) == nms_brute(ms, radius)
    c = MatchCriteria()
    gaps, matching_graphs, exact_on_matching = [], 0, True
    for s in range(100):
        r = np.random.default_rng(1000 + s)
        side = 200 if s % 2 else 60  # sparse scenes, then dense ones with contested pairs
        gt = [Minutia(*r.uniform(0, side, 2), r.uniform(0, 360), 1.0) for _ in range(int(r.integers(1, 30)))]
        pred = [Minutia(*r.uniform(0, side, 2), r.uniform(0, 360), 1.0) for _ in range(int(r.integers(1, 30)))]
        greedy = len(match_minutiae(pred, gt, c).pairs)
        best = _max_matching(pred, gt, c)
        edges = candidate_pairs(pred, gt, c)
        if len({i for _, i, _ in edges}) == len(edges) == len({j for _, _, j in edges}):
            matching_graphs += 1
            exact_on_matching &= greedy == best == len(edges)
        if greedy != best:
            gaps.append((s, greedy, best))
    dt = time.perf_counter() - t0
    print(f"matching: greedy below maximum on {len(gaps)}/100 scenes {gaps}")
    record(8, "NMS and matching oracles", nms_ok and exact_on_matching and dt < 30,
           f"NMS {'exact' if nms_ok else 'DIFFERS'} on 100 lists; greedy = maximum on "
           f"{matching_graphs} matching-graph scenes; {len(gaps)}/100 scenes below maximum "
           f"(informational), {dt:.1f}s")


# 9 -----------------------------------------------------------------------------

def test_criterion_09_throughput():
    w, h = 800, 768
    rng = np.random.default_rng(9)
    spec = SynthSpec(width=w, height=h, orientation=30.0, noise_sigma=0.3,
                     minutiae=random_minutiae(rng, w, h, 20, margin=150),
                     foreground=ellipse_mask(w, h, 0.9))
    img, _ = synth_print(spec)
    img = img * 60 + 128
    run(img[:128, :128])  # warm-up
    t0 = time.perf_counter()
    art = run(img)
    dt = time.perf_counter() - t0
    record(9, "768x800 throughput", dt < 5.0,
           f"{dt:.2f}s end to end (< 5s), {len(art.minutiae)} minutiae")


# 10 ----------------------------------------------------------------------------

def test_criterion_10_cli_contract(tmp_path, capsys):
    t0 = time.perf_counter()
    checks = {}
    img, gt, out = tmp_path / "p.pgm", tmp_path / "gt.txt", tmp_path / "out"
    checks["synth"] = main(["synth", str(img), str(gt), "--width", "192", "--height", "192",
                            "--minutiae", "60,60,1;130,80,-1;90,140,1"]) == 0
    checks["extract"] = main(["extract", str(img), str(out)]) == 0
    files = sorted(p.name for p in out.iterdir())
    checks["four files"] = files == ["enhanced.pgm", "minutiae.txt", "orientation.txt", "seg.pgm"]
    first = {p.name: p.read_bytes() for p in out.iterdir()}
    main(["extract", str(img), str(out)])
    checks["byte-stable"] = first == {p.name: p.read_bytes() for p in out.iterdir()}
    found = read_minutiae(out / "minutiae.txt")
    from plainfinger.minutiae import write_minutiae
    write_minutiae(tmp_path / "again.txt", found)
    checks["lossless minutiae file"] = (tmp_path / "again.txt").read_bytes() == first["minutiae.txt"]
    capsys.readouterr()
    checks["eval identical"] = main(["eval", str(gt), str(gt)]) == 0 and \
        capsys.readouterr().out.startswith("1.0000 1.0000 0.00 0.00 ")
    main(["eval", str(out / "minutiae.txt"), str(gt), "--curve", str(tmp_path / "c.csv")])
    checks["extract recovers truth"] = capsys.readouterr().out.startswith("1.0000 1.0000 ")
    ts = [float(l.split(",")[0]) for l in (tmp_path / "c.csv").read_text().splitlines()[1:]]
    checks["curve ascending"] = len(ts) == 21 and ts == sorted(ts)
    from plainfinger.cli import build_parser
    a = build_parser().parse_args(["eval", "x", "y"])
    checks["eval defaults 15/30"] = (a.dist_thr, a.angle_thr) == (15.0, 30.0)
    bad = tmp_path / "bad.txt"
    bad.write_text("1 2 x 0.5\n")
    code = main(["eval", str(bad), str(gt)])
    checks["eval parse error exit 2"] = code == 2 and "bad.txt:1" in capsys.readouterr().err
    checks["missing input exit 2"] = main(["extract", str(tmp_path / "none.pgm"), str(out)]) == 2
    flat = tmp_path / "flat.pgm"
    write_pgm(flat, np.full((80, 80), 50.0))
    capsys.readouterr()
    checks["constant image exit 3"] = main(["extract", str(flat), str(out)]) == 3 and \
        "normalize" in capsys.readouterr().err
    checks["gradcheck exit 0"] = main(["gradcheck"]) == 0
    o1 = capsys.readouterr().out
    main(["gradcheck"])
    checks["gradcheck deterministic"] = capsys.readouterr().out == o1
    checks["gradcheck perturbed exit 1"] = main(["gradcheck", "--perturb", "1e-2"]) == 1
    capsys.readouterr()
    dt = time.perf_counter() - t0
    failed = [k for k, v in checks.items() if not v]
    record(10, "CLI contract", not failed and dt < 60,
           f"{len(checks) - len(failed)}/{len(checks)} checks"
           + (f", failed: {failed}" if failed else "") + f", {dt:.1f}s")
