"""End-to-end acceptance targets at desk scale.

One test per numbered target; each prints a single PASS/FAIL line through
capsys.disabled() so the verdicts land on the console even when captured.
The training-backed checks (4 and 6) share module-scoped fixtures and
dominate the runtime: four 40x40 trainings of roughly twenty-five minutes
each plus one small 1-D training. Everything is deterministic, so reruns
reproduce these numbers bit for bit.
"""

import time

import numpy as np
import pytest

from fdtn import autodiff as ad
from fdtn import data
from fdtn.autodiff import Tensor
from fdtn.cli import main as cli_main
from fdtn.gridfft import (
    ComplexGrid,
    RealGrid,
    dft_reference,
    fft_forward,
    fft_inverse,
    translate_periodic,
)
from fdtn.model import (
    FdtnConfig,
    FdtnModel,
    _loss_graph,
    copy_last_baseline,
    evaluate,
    rollout,
    train_bptt,
)
from fdtn.nn import Conv2d, Dense, grad_check, softmax4
from fdtn.rng import SplitMix64

from oracles import bandlimited_blob, gauss_blob

# desk-scale protocol: 2000 train / 200 test, 2 seeds + 8 predictions
TRAIN_COUNT = 2000
TEST_COUNT = 200
EPOCHS = 52
LR = 1e-2
LR_FINAL = 5e-4
BUDGET_SECONDS = 1800


def report(capsys, num, ok, detail):
    with capsys.disabled():
        print(f"\n[criterion {num}] {'PASS' if ok else 'FAIL'} {detail}")
    assert ok, f"criterion {num}: {detail}"


# ---------------------------------------------------------------------------
# 1: transform correctness


def test_criterion_1_fft_matches_direct_dft(capsys):
    t0 = time.time()
    rng = SplitMix64(11)
    worst_dft = 0.0
    for w in range(1, 65):
        for h in range(1, 65):
            frame = RealGrid(w, h, rng.uniform_array((h, w), -1.0, 1.0))
            diff = fft_forward(frame).to_complex() - dft_reference(frame).to_complex()
            worst_dft = max(worst_dft, float(np.max(np.abs(diff))))

    worst_prop = 0.0
    sizes = [(40, 40), (64, 64), (33, 17), (1, 64), (64, 1), (12, 40)]
    for k in range(100):
        w, h = sizes[k % len(sizes)]
        x = rng.uniform_array((h, w), -1.0, 1.0)
        y = rng.uniform_array((h, w), -1.0, 1.0)
        fx = fft_forward(RealGrid(w, h, x)).to_complex()
        fy = fft_forward(RealGrid(w, h, y)).to_complex()
        scale = max(float(np.max(np.abs(fx))), 1.0)
        # round trip
        back = fft_inverse(ComplexGrid.from_complex(fx)).values
        worst_prop = max(worst_prop, float(np.max(np.abs(back - x))))
        # linearity
        fxy = fft_forward(RealGrid(w, h, 2.0 * x - 3.0 * y)).to_complex()
        worst_prop = max(
            worst_prop, float(np.max(np.abs(fxy - (2.0 * fx - 3.0 * fy))) / scale)
        )
        # Parseval (forward is unnormalized)
        e_space = float(np.sum(x * x))
        e_freq = float(np.sum(np.abs(fx) ** 2)) / (w * h)
        worst_prop = max(worst_prop, abs(e_space - e_freq) / max(e_space, 1.0))
        # shift theorem: integer circular shift = phase ramp
        dx, dy = (k % w), (k % h)
        shifted = fft_forward(RealGrid(w, h, np.roll(x, (dy, dx), axis=(0, 1))))
        kx = np.arange(w)[None, :]
        ky = np.arange(h)[:, None]
        ramp = np.exp(-2j * np.pi * (kx * dx / w + ky * dy / h))
        worst_prop = max(
            worst_prop,
            float(np.max(np.abs(shifted.to_complex() - fx * ramp)) / scale),
        )
    elapsed = time.time() - t0
    ok = worst_dft < 1e-9 and worst_prop < 1e-9 and elapsed < 60
    report(
        capsys,
        1,
        ok,
        f"fft vs direct dft on all 4096 size pairs up to 64x64 max|diff|={worst_dft:.2e} "
        f"(<1e-9); round-trip/linearity/Parseval/shift on 100 inputs "
        f"worst={worst_prop:.2e}; {elapsed:.1f}s (<60s)",
    )


# ---------------------------------------------------------------------------
# 2: exact translation with no learned corrections


def test_criterion_2_exact_translation(capsys):
    t0 = time.time()
    horizon = 50
    cfg = FdtnConfig(
        transform_variant="none",
        refine_enabled=False,
        horizon=horizon,
        frame_width=40,
        frame_height=40,
    )

    base = gauss_blob(40, 40, 19.0, 23.0)
    dx, dy = 3, -2
    seeds = [
        RealGrid(40, 40, base),
        RealGrid(40, 40, np.roll(base, (dy, dx), axis=(0, 1))),
    ]
    worst_int = 0.0
    for k, frame in enumerate(rollout(seeds, cfg), start=2):
        want = np.roll(base, (k * dy, k * dx), axis=(0, 1))
        worst_int = max(worst_int, float(np.max(np.abs(frame.values - want))))

    blob = bandlimited_blob(40, 40, 20.0, 20.0)
    sx, sy = 0.6, -0.35
    seeds = [
        RealGrid(40, 40, blob),
        RealGrid(40, 40, translate_periodic(blob, sx, sy)),
    ]
    worst_sub = 0.0
    for k, frame in enumerate(rollout(seeds, cfg), start=2):
        want = translate_periodic(blob, k * sx, k * sy)
        worst_sub = max(worst_sub, float(np.max(np.abs(frame.values - want))))

    elapsed = time.time() - t0
    ok = worst_int < 1e-5 and worst_sub < 1e-5 and elapsed < 60
    report(
        capsys,
        2,
        ok,
        f"integer shift ({dx},{dy}) rollout to step {horizon} max err={worst_int:.2e} "
        f"(<1e-5); sub-pixel shift ({sx},{sy}) max err={worst_sub:.2e} (<1e-5); "
        f"{elapsed:.1f}s (<60s)",
    )


# ---------------------------------------------------------------------------
# 3: gradient validity


def _layer_cases(seed):
    """One forward builder per layer kind, at 8x8-scale inputs."""
    rng = SplitMix64(900 + seed)
    cases = {}

    d1 = Dense("d1", 8, 6, rng)
    xd = Tensor(rng.uniform_array((2, 8), -1.0, 1.0))

    def dense_forward():
        t = d1(xd)
        return ad.mean_all(ad.mul(t, t))

    cases["dense"] = (d1.params(), dense_forward)

    c1 = Conv2d("c1", 2, 3, 3, rng)
    xc = Tensor(rng.uniform_array((2, 2, 8, 8), -1.0, 1.0))

    def conv_forward():
        t = c1(xc)
        return ad.mean_all(ad.mul(t, t))

    cases["conv"] = (c1.params(), conv_forward)

    c2 = Conv2d("c2", 1, 2, 3, rng, location_dependent=True, width=8, height=8)
    xl = Tensor(rng.uniform_array((2, 1, 8, 8), -1.0, 1.0))

    def conv_loc_forward():
        t = c2(xl)
        return ad.mean_all(ad.mul(t, t))

    cases["conv_loc"] = (c2.params(), conv_loc_forward)

    d2 = Dense("d2", 5, 4 * 64, rng)
    xs = Tensor(rng.uniform_array((1, 5), -1.0, 1.0))

    def softmax_forward():
        w = softmax4(ad.reshape(d2(xs), (1, 4, 8, 8)))
        return ad.mean_all(ad.mul(w, w))

    cases["softmax4"] = (d2.params(), softmax_forward)

    d3 = Dense("d3", 8, 8, rng)

    def relu_forward():
        t = ad.relu(d3(xd))
        return ad.mean_all(ad.mul(t, t))

    cases["relu"] = (d3.params(), relu_forward)

    d4 = Dense("d4", 8, 8, rng)

    def sigmoid_forward():
        t = ad.sigmoid(d4(xd))
        return ad.mean_all(ad.mul(t, t))

    cases["sigmoid"] = (d4.params(), sigmoid_forward)
    return cases


def _composed_case(variant, refine_enabled, seed, height=8):
    w = 8
    cfg = FdtnConfig(
        transform_variant=variant,
        refine_enabled=refine_enabled,
        frame_width=w,
        frame_height=height,
        horizon=2,
        fc_hidden=4,
        conv_channels=2,
        refine_channels=2,
        morse_hidden=6,
    )
    model = FdtnModel(cfg, init_seed=seed)
    rng = SplitMix64(seed * 1000 + 17)
    # jitter every parameter: zero-initialized biases park whole channels
    # exactly on their relu kinks, where finite differences are undefined
    for p in model.params():
        p.value += rng.gauss_array(p.value.shape) * 0.05
    seeds_arr = 0.2 + 0.8 * rng.uniform_array((2, 2, height, w))
    targets = 0.2 + 0.8 * rng.uniform_array((2, 2, height, w))

    def forward():
        return _loss_graph(model.rollout_batch(seeds_arr), targets)

    return model.params(), forward


def test_criterion_3_gradient_checks(capsys):
    t0 = time.time()
    failures = []
    worst_layer = 0.0
    worst_comp = 0.0
    for seed in range(20):
        for kind, (params, forward) in _layer_cases(seed).items():
            ok, rels = grad_check(params, forward, tol=1e-4, rng=SplitMix64(seed))
            worst_layer = max(worst_layer, max(rels.values()))
            if not ok:
                failures.append(f"layer {kind} seed {seed}")
        for variant, refine, height in (
            ("none", True, 8),
            ("fc", True, 8),
            ("fc", False, 8),
            ("conv", True, 8),
            ("morse_denoise", True, 1),
        ):
            params, forward = _composed_case(variant, refine, seed, height)
            if not params:
                continue
            ok, rels = grad_check(params, forward, tol=1e-3, rng=SplitMix64(seed + 50))
            worst_comp = max(worst_comp, max(rels.values()))
            if not ok:
                failures.append(f"composed {variant} refine={refine} seed {seed}")
    elapsed = time.time() - t0
    ok = not failures and elapsed < 300
    report(
        capsys,
        3,
        ok,
        f"finite differences over 20 seeds: 6 layer kinds worst rel={worst_layer:.2e} "
        f"(tol 1e-4), composed rollout graphs worst rel={worst_comp:.2e} (tol 1e-3); "
        f"{elapsed:.1f}s (<300s)"
        + (f"; failures: {failures}" if failures else ""),
    )


# ---------------------------------------------------------------------------
# 4: desk-scale training targets


@pytest.fixture(scope="module")
def ball_sets():
    train = data.gen_bouncing_ball(TRAIN_COUNT, seed=42)
    test = data.gen_bouncing_ball(TEST_COUNT, frames=18, seed=43, split="test")
    return train, test


@pytest.fixture(scope="module")
def digit_sets():
    train = data.gen_moving_digit(TRAIN_COUNT, seed=44)
    test = data.gen_moving_digit(TEST_COUNT, frames=18, seed=45, split="test")
    return train, test


def _train(dataset, variant, refine_enabled):
    cfg = FdtnConfig(transform_variant=variant, refine_enabled=refine_enabled)
    t0 = time.time()
    model, _ = train_bptt(
        dataset,
        cfg,
        epochs=EPOCHS,
        batch_size=32,
        lr=LR,
        lr_final=LR_FINAL,
        augment_mirror=True,
        seed=0,
    )
    return cfg, model, time.time() - t0


@pytest.fixture(scope="module")
def ball_fc(ball_sets):
    return _train(ball_sets[0], "fc", True)


@pytest.fixture(scope="module")
def digit_fc(digit_sets):
    return _train(digit_sets[0], "fc", True)


@pytest.fixture(scope="module")
def digit_no_transform(digit_sets):
    return _train(digit_sets[0], "none", True)


@pytest.fixture(scope="module")
def digit_no_refine(digit_sets):
    return _train(digit_sets[0], "fc", False)


def _bouncing_digit_subset(test_set, gen_seed):
    """Test sequences whose glyph reflects off a wall inside the 8-step window."""
    keep = []
    for i in range(test_set.count):
        _, _, bounced = data._digit_motion(
            gen_seed, i, 18, 40, 40, 10, (28, 28), (0.5, 2.5)
        )
        if bounced[2:10].any():
            keep.append(i)
    return data.SequenceDataset(test_set.sequences[keep], "test")


def test_criterion_4_desk_scale_targets(
    capsys, ball_sets, digit_sets, ball_fc, digit_fc, digit_no_transform, digit_no_refine
):
    _, ball_test = ball_sets
    _, digit_test = digit_sets
    ball_cfg, ball_model, ball_secs = ball_fc
    digit_cfg, digit_model, digit_secs = digit_fc
    nt_cfg, nt_model, nt_secs = digit_no_transform
    nr_cfg, nr_model, nr_secs = digit_no_refine

    ball_mse, _ = evaluate(ball_test, ball_cfg, ball_model)
    ball_copy, _ = copy_last_baseline(ball_test, 2, 8)
    digit_mse, _ = evaluate(digit_test, digit_cfg, digit_model)
    digit_copy, _ = copy_last_baseline(digit_test, 2, 8)

    bouncy = _bouncing_digit_subset(digit_test, 45)
    full_bounce, _ = evaluate(bouncy, digit_cfg, digit_model)
    nt_bounce, _ = evaluate(bouncy, nt_cfg, nt_model)

    _, full_steps = evaluate(digit_test, digit_cfg, digit_model, horizon=16)
    _, nr_steps = evaluate(digit_test, nr_cfg, nr_model, horizon=16)
    full_late = float(full_steps[10:].mean())
    nr_late = float(nr_steps[10:].mean())

    checks = {
        "ball mse": ball_mse <= 0.005,
        "ball vs copy-last": ball_mse <= ball_copy / 3.0,
        "digit mse": digit_mse <= 0.02,
        "digit vs copy-last": digit_mse <= digit_copy / 3.0,
        "transform ablation": full_bounce < nt_bounce,
        "refine ablation": full_late < nr_late,
        "budget": max(ball_secs, digit_secs, nt_secs, nr_secs) < BUDGET_SECONDS,
    }
    ok = all(checks.values())
    report(
        capsys,
        4,
        ok,
        f"ball fc mse={ball_mse:.5f} (<=0.005, copy/3={ball_copy / 3:.5f}); "
        f"digit fc mse={digit_mse:.5f} (<=0.02, copy/3={digit_copy / 3:.5f}); "
        f"bounce-window sequences ({bouncy.count}/{digit_test.count}) "
        f"full={full_bounce:.5f} < no-transform={nt_bounce:.5f}; "
        f"steps>10 full={full_late:.5f} < no-refine={nr_late:.5f}; "
        f"trainings {ball_secs:.0f}/{digit_secs:.0f}/{nt_secs:.0f}/{nr_secs:.0f}s "
        f"(each <{BUDGET_SECONDS}s)"
        + ("" if ok else f"; failed: {[k for k, v in checks.items() if not v]}"),
    )


# ---------------------------------------------------------------------------
# 5: model size targets


def test_criterion_5_parameter_counts(capsys):
    fc = FdtnModel(FdtnConfig(transform_variant="fc")).param_count()
    conv = FdtnModel(FdtnConfig(transform_variant="conv")).param_count()
    ok = 160_000 * 0.8 <= fc <= 160_000 * 1.2 and 22_000 * 0.8 <= conv <= 22_000 * 1.2
    report(
        capsys,
        5,
        ok,
        f"fc params={fc} (160K +-20%), conv params={conv} (22K +-20%) at 40x40",
    )


# ---------------------------------------------------------------------------
# 6: 1-D denoising pipeline


def test_criterion_6_morse_denoising(capsys):
    t0 = time.time()
    train = data.gen_morse(512, seed=50)
    test = data.gen_morse(128, seed=51, split="test")
    common = dict(refine_enabled=False, frame_width=32, frame_height=1, horizon=18)
    cfg_none = FdtnConfig(transform_variant="none", **common)
    base_mse, _ = evaluate(test, cfg_none, FdtnModel(cfg_none))

    cfg_dn = FdtnConfig(transform_variant="morse_denoise", **common)
    model, _ = train_bptt(train, cfg_dn, epochs=400, batch_size=32, lr=3e-3, seed=1)
    dn_mse, _ = evaluate(test, cfg_dn, model)
    elapsed = time.time() - t0
    ok = dn_mse < base_mse and elapsed < 600
    report(
        capsys,
        6,
        ok,
        f"18 frames from 2 noisy seeds (sigma 0.1): trained denoise "
        f"mse={dn_mse:.5f} < plain pipeline mse={base_mse:.5f}; "
        f"{elapsed:.1f}s (<600s)",
    )


# ---------------------------------------------------------------------------
# 7: reproducibility


def test_criterion_7_byte_identical_reruns(capsys, tmp_path):
    def run(args):
        assert cli_main(args) == 0

    def gen(path):
        run(
            [
                "gen",
                f"--set=dataset_path={path}",
                "--set=count=8",
                "--set=width=16",
                "--set=height=16",
                "--set=seed=42",
            ]
        )

    gen(tmp_path / "a.fds")
    gen(tmp_path / "b.fds")
    data_ok = (tmp_path / "a.fds").read_bytes() == (tmp_path / "b.fds").read_bytes()

    def train_run(stem):
        run(
            [
                "train",
                f"--set=dataset_path={tmp_path / 'a.fds'}",
                f"--set=checkpoint_path={tmp_path / stem}.ckpt",
                "--set=transform_variant=fc",
                "--set=epochs=2",
                "--set=batch_size=4",
            ]
        )

    train_run("m1")
    train_run("m2")
    ckpt_ok = (tmp_path / "m1.ckpt").read_bytes() == (tmp_path / "m2.ckpt").read_bytes()
    log_ok = (
        (tmp_path / "m1.ckpt.log").read_bytes()
        == (tmp_path / "m2.ckpt.log").read_bytes()
    )

    def predict_run(name):
        out = tmp_path / name
        run(
            [
                "predict",
                f"--set=dataset_path={tmp_path / 'a.fds'}",
                f"--set=checkpoint_path={tmp_path / 'm1.ckpt'}",
                "--set=transform_variant=fc",
                f"--set=output_dir={out}",
            ]
        )
        return out

    p1, p2 = predict_run("p1"), predict_run("p2")
    pred_ok = all(
        f.read_bytes() == (p2 / f.name).read_bytes() for f in sorted(p1.iterdir())
    )
    ok = data_ok and ckpt_ok and log_ok and pred_ok
    report(
        capsys,
        7,
        ok,
        f"re-run byte identity: dataset={data_ok}, checkpoint={ckpt_ok}, "
        f"log={log_ok}, predictions={pred_ok}",
    )
