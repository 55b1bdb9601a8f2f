"""End-to-end acceptance gates.

One test per criterion, each ending in a single printed PASS line with the
measured numbers (visible under `pytest -v -s` or in the captured output).
The three training gates and the error-scaling gate run the same desk-scale
configurations the CLI defaults expose; stated runtime budgets are asserted.
Expect the full module to take roughly half an hour on one core.
"""

import math
import time
import warnings

import mpmath
import numpy as np
import pytest

from symcompress import (
    CompressionConfig,
    TrainConfig,
    WeightedSet,
    bessel_j,
    compress,
    cylindrical_harmonic,
    derive_seed,
    finite_diff_grad_check,
    fold,
    forward,
    init_net,
    make_teacher_student,
    moment_vector,
    n_basis,
    reduce_support,
    run_dataset_compression,
    run_error_scaling,
    run_lth,
    run_nsl,
    train,
)
from symcompress.cli import main


def moment_gap(a, b, k):
    """Max moment deviation, relative in the library's (1+|p|) sense."""
    va = moment_vector(a, k).values
    vb = moment_vector(b, k).values
    return float(np.max(np.abs(vb - va) / (1.0 + np.abs(va))))


def random_weighted_net(rng, width=8):
    net = init_net(2, width, 1, activation="sigmoid", seed=int(rng.integers(2**31)))
    net.c = rng.uniform(0.1, 3.0, size=width)
    return net


# ---------------------------------------------------------------- core


def test_criterion_01_moment_conservation():
    t0 = time.perf_counter()
    worst = 0.0
    for i in range(50):
        m = 1 + i % 4
        k = 1 + (i // 4) % 5
        rng = np.random.default_rng(derive_seed(1000, i))
        ws = WeightedSet(rng.uniform(-1.0, 1.0, size=(2000, m)), rng.uniform(0.5, 2.0, size=2000))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")  # (m=4, k=5) floors at C(9,5)=126 > 100
            out, _ = compress(ws, CompressionConfig(k=k, target_size=100, seed=i))
        gap = moment_gap(ws, out, k)
        worst = max(worst, gap)
        assert gap <= 1e-6, f"instance {i} (m={m}, k={k}): residual {gap:.3e}"
    wall = time.perf_counter() - t0
    assert wall < 120.0
    print(f"PASS criterion 1: moment conservation, 50 instances 2000->100, "
          f"worst residual {worst:.2e} <= 1e-6, {wall:.0f}s < 120s")


def test_criterion_02_support_bound():
    rng = np.random.default_rng(derive_seed(2000))
    worst_support = 0
    for case in range(1000):
        m = int(rng.integers(1, 4))
        k = int(rng.integers(1, 4))
        bound = n_basis(m, k)
        n = bound + int(rng.integers(1, 41))
        ws = WeightedSet(rng.standard_normal((n, m)), rng.uniform(0.1, 2.0, size=n))

        def all_nonneg(w):
            assert np.all(w >= 0.0)

        out, rep = reduce_support(ws, k, on_iteration=all_nonneg)
        support = int(np.count_nonzero(out.weights > 0.0))
        assert support <= bound, f"case {case}: support {support} > C(m+k,k) {bound}"
        worst_support = max(worst_support, support - bound)
    print("PASS criterion 2: support <= C(m+k,k) in 1000/1000 randomized cases, "
          "weights nonnegative after every iteration")


def test_criterion_03_hand_oracle():
    ws = WeightedSet(np.array([[0.0], [1.0], [2.0]]), np.ones(3))
    out, _ = reduce_support(ws, 1)
    support = int(np.count_nonzero(out.weights > 0.0))
    p0 = float(out.weights.sum())
    p1 = float(out.weights @ out.points[:, 0])
    assert support <= 2
    assert abs(p0 - 3.0) <= 1e-12
    assert abs(p1 - 3.0) <= 1e-12
    print(f"PASS criterion 3: three-point hand instance reduces to support {support}, "
          f"p0 = {p0}, p1 = {p1} (both 3 to machine precision)")


def test_criterion_04_error_scaling_exponents():
    t0 = time.perf_counter()
    rep = run_error_scaling([2], [1, 2, 3], [2**p for p in range(8, 14)], trials=20, seed=0)
    alphas = [rep.fits[f"m2_k{k}"].alpha for k in (1, 2, 3)]
    wall = time.perf_counter() - t0
    targets = [(k + 1) / 2 + 0.5 for k in (1, 2, 3)]
    assert alphas[0] < alphas[1] < alphas[2], f"not increasing: {alphas}"
    for alpha, target in zip(alphas, targets):
        assert abs(alpha - target) <= 0.75, f"alpha {alpha:.3f} vs target {target}"
    assert wall < 600.0
    shown = ", ".join(f"{a:.2f} (target {t})" for a, t in zip(alphas, targets))
    print(f"PASS criterion 4: fitted exponents strictly increasing and within "
          f"+-0.75: {shown}; {wall:.0f}s < 600s")


# ---------------------------------------------------------------- networks


def test_criterion_05_fold_identity():
    rng = np.random.default_rng(derive_seed(5000))
    worst = 0.0
    for _ in range(1000):
        net = random_weighted_net(rng)
        x = rng.standard_normal((4, 2))
        gap = float(np.max(np.abs(forward(net, x) - forward(fold(net), x))))
        worst = max(worst, gap)
    assert worst <= 1e-12
    print(f"PASS criterion 5: max |forward(weighted) - forward(folded)| = "
          f"{worst:.2e} <= 1e-12 over 1000 nets")


def test_criterion_06_compressed_dynamics_consistency():
    ds, _ = make_teacher_student(64, seed=3)
    net0 = init_net(2, 16, 1, activation="relu", seed=7)

    # all multiplicities are exactly 1, so rescaling must change nothing
    base = TrainConfig(optimizer="sgd", lr0=1e-2, epochs=200, batch_size=16,
                       steps_per_epoch=1, batch_seed=11)
    plain, _ = train(net0, ds, base)
    rescaled, _ = train(net0, ds, TrainConfig(**{**base.__dict__, "grad_rescale": True}))
    gap_rescale = max(
        float(np.max(np.abs(a - b)))
        for a, b in ((plain.W1, rescaled.W1), (plain.b1, rescaled.b1),
                     (plain.W2, rescaled.W2), (plain.c, rescaled.c))
    )
    assert gap_rescale <= 1e-12

    # permuting neurons commutes with 100 shared-trajectory SGD steps
    perm = np.random.default_rng(13).permutation(16)
    permuted0 = net0.copy()
    permuted0.W1 = net0.W1[perm].copy()
    permuted0.b1 = net0.b1[perm].copy()
    permuted0.W2 = net0.W2[:, perm].copy()
    permuted0.c = net0.c[perm].copy()
    short = TrainConfig(optimizer="sgd", lr0=1e-2, epochs=100, batch_size=16,
                        steps_per_epoch=1, batch_seed=11)
    ref, _ = train(net0, ds, short)
    per, _ = train(permuted0, ds, short)
    gap_perm = max(
        float(np.max(np.abs(ref.W1 - per.W1[np.argsort(perm)]))),
        float(np.max(np.abs(ref.W2 - per.W2[:, np.argsort(perm)]))),
    )
    assert gap_perm <= 1e-10
    print(f"PASS criterion 6: c=1 rescale on/off gap {gap_rescale:.1e} <= 1e-12 "
          f"after 200 SGD steps; permutation equivariance gap {gap_perm:.1e} "
          f"<= 1e-10 after 100 steps")


def test_criterion_07_gradient_correctness():
    rng = np.random.default_rng(derive_seed(7000))
    worst = 0.0
    for trial in range(10):
        for activation in ("sigmoid", "relu"):
            net = init_net(3, 6, 2, activation=activation, seed=trial)
            net.c = rng.uniform(0.5, 2.0, size=6)
            x = rng.standard_normal((8, 3))
            y = rng.standard_normal((8, 2))
            worst = max(worst, finite_diff_grad_check(net, x, y))
    assert worst <= 1e-5
    print(f"PASS criterion 7: finite-difference gradient check, max relative "
          f"deviation {worst:.2e} <= 1e-5 (sigmoid and kink-guarded relu)")


# ---------------------------------------------------------------- training gates


def final_mse(report, *key_cols):
    cols = report.columns
    e_i = cols.index("epoch")
    last = max(int(r[e_i]) for r in report.rows)
    return {
        tuple(int(r[cols.index(c)]) for c in key_cols): r[cols.index("test_mse")]
        for r in report.rows
        if int(r[e_i]) == last
    }


def test_criterion_08_dynamical_lth():
    t0 = time.perf_counter()
    cfg = TrainConfig(epochs=60, batch_size=512)
    rep = run_lth(4096, 512, 5, ["sgd", "adamw"], cfg, list(range(10)))
    wall = time.perf_counter() - t0
    mse = final_mse(rep, "seed", "rule", "arm")
    tallies = {}
    for rid, rule in ((0, "sgd"), (2, "adamw")):
        closer = within = 0
        for s in range(10):
            full, comp, sub = mse[(s, rid, 0)], mse[(s, rid, 1)], mse[(s, rid, 2)]
            closer += abs(comp - full) < abs(sub - full)
            within += abs(comp - full) <= 0.15 * abs(full)
        tallies[rule] = (closer, within)
        assert closer >= 8, f"{rule}: compressed closer in only {closer}/10 seeds"
        assert within >= 7, f"{rule}: within 15% of full in only {within}/10 seeds"
    assert wall < 3600.0
    shown = "; ".join(f"{r}: closer {c}/10, within15% {w}/10" for r, (c, w) in tallies.items())
    print(f"PASS criterion 8: width 4096->512 k=5 over 10 seeds, {shown} "
          f"(need >=8 and >=7); {wall:.0f}s < 3600s")


def test_criterion_09_dataset_compression():
    cfg = TrainConfig(optimizer="adamw", lr0=1e-3, epochs=60, batch_size=256)
    rep = run_dataset_compression(10000, 1000, 5, cfg, list(range(10)))
    mse = final_mse(rep, "seed", "arm")
    wins = sum(mse[(s, 1)] <= mse[(s, 2)] for s in range(10))
    assert wins >= 8, f"compressed beat subsample in only {wins}/10 seeds"
    print(f"PASS criterion 9: d=10^4 -> 10^3 k=5, compressed <= subsample "
          f"final MSE in {wins}/10 seeds (need >=8)")


def test_criterion_10_scaling_law_improvement():
    rep = run_nsl([1000, 2000, 4000, 8000], list(range(5)), mode="dataset", k=6)
    ratio = rep.metadata["exponent_ratio"]
    a0 = rep.fits["original"].alpha
    a1 = rep.fits["compressed"].alpha
    assert ratio >= 1.4, f"exponent ratio {ratio:.3f} < 1.4"
    print(f"PASS criterion 10: scaling exponent {a0:.2f} -> {a1:.2f} under "
          f"d' = ceil(16 sqrt(d)), ratio {ratio:.2f} >= 1.4")


# ---------------------------------------------------------------- numerics


def bessel_series_oracle(n, x, terms=300):
    """Ascending series at 60 significant digits, summed independently."""
    with mpmath.workdps(60):
        xm = mpmath.mpf(x)
        total = mpmath.mpf(0)
        for j in range(terms):
            total += (-1) ** j * (xm / 2) ** (2 * j + n) / (
                mpmath.factorial(j) * mpmath.factorial(j + n)
            )
        return float(total)


def test_criterion_11_special_functions():
    xs = [0.0, 1e-6, 0.5, 1.0, 2.0, 4.0, 8.0, 12.5, 20.0, 27.5, 33.0, 40.0]
    worst = 0.0
    for n in range(9):
        got = bessel_j(n, np.array(xs))
        for x, g in zip(xs, got):
            worst = max(worst, abs(g - bessel_series_oracle(n, x)))
    assert worst <= 1e-10

    rng = np.random.default_rng(derive_seed(11000))
    pts = rng.uniform(-1.0, 1.0, size=(200, 2))
    r = np.hypot(pts[:, 0], pts[:, 1])
    th = np.arctan2(pts[:, 1], pts[:, 0])
    base = cylindrical_harmonic(pts[:, 0], pts[:, 1])
    rot = cylindrical_harmonic(r * np.cos(th + np.pi / 3.0), r * np.sin(th + np.pi / 3.0))
    mirror = cylindrical_harmonic(pts[:, 0], -pts[:, 1])
    assert np.max(np.abs(rot - base)) <= 1e-12
    assert np.max(np.abs(mirror - base)) <= 1e-12
    print(f"PASS criterion 11: bessel_j within {worst:.1e} of the extended-"
          f"precision series oracle (<= 1e-10); harmonic 6-fold rotation and "
          f"reflection symmetries hold")


# ---------------------------------------------------------------- determinism


def run_twice(argv_builder, tmp_path, stem):
    a, b = tmp_path / f"{stem}_a.csv", tmp_path / f"{stem}_b.csv"
    assert main(argv_builder(str(a))) == 0
    assert main(argv_builder(str(b))) == 0
    assert a.read_bytes() == b.read_bytes(), f"{stem} re-run changed bytes"


def test_criterion_12_cli_determinism(tmp_path, capsys):
    from symcompress import save_weighted_set_csv

    rng = np.random.default_rng(12)
    ws = WeightedSet.uniform(rng.uniform(-1.0, 1.0, size=(60, 2)))
    inp = tmp_path / "in.csv"
    save_weighted_set_csv(ws, inp)

    run_twice(lambda out: ["compress", str(inp), "--k", "2", "--target", "12",
                           "--seed", "5", "--out", out], tmp_path, "compress")
    run_twice(lambda out: ["error-scaling", "--m-list", "1", "--k-list", "1",
                           "--d-grid", "32,64", "--trials", "2", "--seed", "1",
                           "--out", out], tmp_path, "scaling")
    run_twice(lambda out: ["compress-dataset", "--d", "60", "--d-prime", "20",
                           "--k", "2", "--n-seeds", "1", "--epochs", "2",
                           "--batch-size", "16", "--eval-every", "2",
                           "--seed", "2", "--out", out], tmp_path, "dataset")
    run_twice(lambda out: ["lth", "--width", "12", "--width-prime", "6",
                           "--k", "1", "--rules", "sgd", "--n-seeds", "1",
                           "--epochs", "2", "--batch-size", "16",
                           "--d-train", "60", "--eval-every", "1",
                           "--seed", "3", "--out", out], tmp_path, "lth")
    run_twice(lambda out: ["nsl", "--d-grid", "300", "--n-seeds", "1",
                           "--epochs", "2", "--k", "2", "--seed", "4",
                           "--out", out], tmp_path, "nsl")

    capsys.readouterr()  # drain subcommand chatter before text comparisons
    texts = []
    for _ in range(2):
        assert main(["grad-check", "--seed", "9"]) == 0
        texts.append(capsys.readouterr().out)
    assert texts[0] == texts[1]
    for _ in range(2):
        assert main(["selftest", "--seed", "9"]) == 0
        texts.append(capsys.readouterr().out)
    assert texts[2] == texts[3]
    print("PASS criterion 12: all 7 CLI subcommands reproduce their reports "
          "bit-for-bit on re-run with identical flags and seeds")
