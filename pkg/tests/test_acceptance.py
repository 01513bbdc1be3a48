"""Acceptance suite: one test per primary criterion, each emitting a single
pass/fail line on the terminal (bypassing capture) in addition to asserting.

Criterion 12 (scripting-binding parity) lives in the bindings package's own
test suite and does not run here.
"""

import itertools
import json
import time

import numpy as np
import pytest

from lutaug import nn
from lutaug.augmentor import Augmentor, AugmentorConfig, train_augmentor
from lutaug.basis import (
    KMeansConfig,
    LutCollection,
    generate_seed_collection,
    kmeans_cluster,
)
from lutaug.cli import main as cli_main
from lutaug.data import make_toy_dataset, write_toy_dataset
from lutaug.harmonize import (
    AffineHarmonizer,
    AugTrainConfig,
    held_out_fmse,
    sweep_static_a,
    train_augmented_only,
    train_dynamic,
    train_plain,
)
from lutaug.lut import Lut3D, combine, identity_lut, lookup
from lutaug.metrics import (
    bt_log_likelihood,
    bt_rank,
    dataset_diversity,
    fmse,
    fssim,
    mse,
    ssim_map,
)


def report(capsys, criterion: int, ok: bool, detail: str) -> None:
    with capsys.disabled():
        print(f"[criterion {criterion:2d}] {'PASS' if ok else 'FAIL'}: {detail}")
    assert ok, detail


# shared toy-scale models (criteria 5, 6, 7) ---------------------------------

AFFINE_AUG_CONFIG = AugmentorConfig(
    d_z=4, n_basis=4, d_f=32, lut_size=9, encoder_size=32,
    widths=(8, 16, 32, 32), lr=1e-3, batch_size=4, epochs=40, seed=0,
)


@pytest.fixture(scope="module")
def affine_pairs():
    return make_toy_dataset(8, size=64, seed=10, perturb="affine")


@pytest.fixture(scope="module")
def held_out_pairs():
    return make_toy_dataset(8, size=64, seed=99, perturb="affine")


@pytest.fixture(scope="module")
def affine_augmentor(affine_pairs):
    model, _ = train_augmentor(affine_pairs, AFFINE_AUG_CONFIG)
    return model


# -----------------------------------------------------------------------------


def test_criterion_01_lut_engine_exactness(capsys):
    start = time.time()
    rng = np.random.default_rng(0)

    # lattice-point exactness, bit level
    lut = Lut3D(rng.random((5, 5, 5, 3)))
    lattice_ok = all(
        np.array_equal(lookup(lut, np.array([i, j, k]) / 4.0), lut.entry(i, j, k))
        for i in range(5) for j in range(5) for k in range(5)
    )

    # identity no-op on 1000 random colors
    colors = rng.random((1000, 3))
    ident_err = np.abs(lookup(identity_lut(17), colors) - colors).max()

    # linearity in entries over 1000 random (basis, alpha, color) draws
    lin_err = 0.0
    for _ in range(1000):
        basis = [Lut3D(rng.random((3, 3, 3, 3))) for _ in range(3)]
        alpha = rng.random(3)
        alpha /= alpha.sum()
        c = rng.random(3)
        direct = lookup(combine(basis, alpha), c)
        summed = sum(a * lookup(l, c) for a, l in zip(alpha, basis))
        lin_err = max(lin_err, np.abs(direct - summed).max())

    elapsed = time.time() - start
    ok = lattice_ok and ident_err <= 1e-12 and lin_err <= 1e-10 and elapsed < 5
    report(
        capsys, 1, ok,
        f"LUT engine: lattice exact={lattice_ok}, identity err {ident_err:.2e} "
        f"<= 1e-12, linearity err {lin_err:.2e} <= 1e-10, {elapsed:.1f}s < 5s",
    )


def test_criterion_02_full_gradient_suite(capsys):
    start = time.time()
    config = AugmentorConfig(
        d_z=3, n_basis=3, d_f=8, lut_size=5, encoder_size=16,
        widths=(4, 8, 8, 8), seed=0,
    )
    pairs = make_toy_dataset(2, size=16, seed=0)
    model = Augmentor.create(config)
    eps = np.random.Generator(
        np.random.Philox(np.random.SeedSequence([0, 0xE5]))
    ).standard_normal((2, config.d_z))

    def loss_fn(params):
        terms, _ = Augmentor(config, params).loss_and_grads(pairs, eps)
        return terms.total

    def grad_fn(params):
        _, grads = Augmentor(config, params).loss_and_grads(pairs, eps)
        return grads

    rel = nn.grad_check(loss_fn, grad_fn, model.params)
    worst_name = max(rel, key=rel.get)
    elapsed = time.time() - start
    ok = all(v < 1e-4 for v in rel.values()) and elapsed < 120
    report(
        capsys, 2, ok,
        f"gradients: {len(rel)} blocks, worst {worst_name} "
        f"{rel[worst_name]:.2e} < 1e-4, {elapsed:.0f}s < 120s",
    )


def test_criterion_03_kl_monte_carlo(capsys):
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(20):
        d = int(rng.integers(1, 6))
        mu = rng.uniform(-2, 2, d)
        log_var = rng.uniform(-2, 2, d)
        closed = nn.kl_to_standard_normal(nn.LatentGaussian(mu, log_var))
        sigma = np.exp(log_var / 2)
        x = mu + sigma * rng.standard_normal((10**6, d))
        log_q = -0.5 * (((x - mu) / sigma) ** 2 + np.log(2 * np.pi) + log_var)
        log_p = -0.5 * (x**2 + np.log(2 * np.pi))
        mc = float((log_q - log_p).sum(axis=1).mean())
        worst = max(worst, abs(closed - mc) / max(abs(mc), 1e-12))
    ok = worst < 0.01
    report(
        capsys, 3, ok,
        f"KL closed form vs 1e6-sample MC on 20 draws: worst rel dev "
        f"{worst:.4f} < 0.01",
    )


def test_criterion_04_reconstruction_training(capsys):
    start = time.time()
    fixed_lut = generate_seed_collection(1, 17, seed=42).luts[0]
    pairs = make_toy_dataset(16, size=64, seed=1, perturb="lut", lut=fixed_lut)
    config = AugmentorConfig(epochs=200, lr=1e-4, seed=0)
    _, history = train_augmentor(pairs, config)
    ratio = history[-1]["rec"] / history[0]["rec"]
    elapsed = time.time() - start
    ok = ratio < 0.20 and elapsed < 600
    report(
        capsys, 4, ok,
        f"reconstruction: L_rec {history[0]['rec']:.4f} -> "
        f"{history[-1]['rec']:.4f} (ratio {ratio:.3f} < 0.20), "
        f"{elapsed:.0f}s < 600s",
    )


def test_criterion_05_diversity_signature(capsys, affine_pairs, affine_augmentor):
    samples = [
        (affine_augmentor.sample(p.real, p.mask, k=10, seed=100 + i), p.mask)
        for i, p in enumerate(affine_pairs)
    ]
    div_full = dataset_diversity(samples)

    collapsed = Augmentor(
        affine_augmentor.config,
        {k: v.copy() for k, v in affine_augmentor.params.items()},
    )
    collapsed.params["head.w"] = np.zeros_like(collapsed.params["head.w"])
    one_hot = np.zeros_like(collapsed.params["head.b"])
    one_hot[1] = 50.0
    collapsed.params["head.b"] = one_hot
    samples_c = [
        (collapsed.sample(p.real, p.mask, k=10, seed=100 + i), p.mask)
        for i, p in enumerate(affine_pairs)
    ]
    div_collapsed = dataset_diversity(samples_c)

    ok = div_full > 0.0 and div_collapsed < 1e-6
    report(
        capsys, 5, ok,
        f"diversity (K=10): trained Div {div_full:.3f} > 0, collapsed one-hot "
        f"Div {div_collapsed:.2e} < 1e-6",
    )


def test_criterion_06_augmentation_benefit(
    capsys, affine_pairs, held_out_pairs, affine_augmentor
):
    start = time.time()
    dyn_beats_none = 0
    aug_only_not_better = 0
    seeds = range(5)
    for seed in seeds:
        scores = {}
        for mode, trainer in (
            ("none", train_plain),
            ("dynamic", train_dynamic),
            ("aug-only", train_augmented_only),
        ):
            h = AffineHarmonizer(seed=seed)
            cfg = AugTrainConfig(mode=mode if mode != "none" else "none",
                                 epochs=150, seed=seed, lr=1e-3)
            if mode == "none":
                trainer(h, affine_pairs, cfg)
            else:
                trainer(h, affine_augmentor, affine_pairs, cfg)
            scores[mode] = held_out_fmse(h, held_out_pairs)
        if scores["dynamic"] < scores["none"]:
            dyn_beats_none += 1
        if scores["aug-only"] >= scores["dynamic"]:
            aug_only_not_better += 1
    elapsed = time.time() - start
    ok = dyn_beats_none >= 4 and aug_only_not_better >= 4 and elapsed < 1200
    report(
        capsys, 6, ok,
        f"augmentation benefit: dynamic < none in {dyn_beats_none}/5 seeds "
        f"(need >= 4), aug-only !< dynamic in {aug_only_not_better}/5 "
        f"(need >= 4), {elapsed:.0f}s < 1200s",
    )


def test_criterion_07_static_sweep(
    capsys, affine_pairs, held_out_pairs, affine_augmentor
):
    a_values = [2, 4, 6, 8, 10]
    rows = sweep_static_a(
        lambda: AffineHarmonizer(seed=0),
        affine_augmentor,
        affine_pairs,
        AugTrainConfig(mode="static", static_a=1, epochs=20, seed=0, lr=1e-3),
        a_values,
        held_out_pairs,
    )
    counts_ok = all(
        r["n_augmented"] == a * len(affine_pairs)
        for r, a in zip(rows, a_values)
    )
    curve = ", ".join(f"a={r['a']}: {r['fmse']:.1f}" for r in rows)
    ok = counts_ok and all(np.isfinite(r["fmse"]) for r in rows)
    report(
        capsys, 7, ok,
        f"static sweep counts exact (a*N) = {counts_ok}; fMSE-vs-a curve: "
        f"{curve}",
    )


def test_criterion_08_metric_oracles(capsys):
    def brute_mse(p, t):
        return sum(((a - b) * 255.0) ** 2 for a, b in zip(p.ravel(), t.ravel())) / p.size

    def brute_fmse(p, t, m):
        vals = [
            ((p[y, x, c] - t[y, x, c]) * 255.0) ** 2
            for y in range(p.shape[0]) for x in range(p.shape[1])
            if m[y, x] for c in range(3)
        ]
        return sum(vals) / len(vals)

    def brute_fssim(p, t, m):
        size, sigma = 11, 1.5
        k1 = np.exp(-((np.arange(size) - 5.0) ** 2) / (2 * sigma**2))
        k1 /= k1.sum()
        kern = np.outer(k1, k1)
        c1, c2 = (0.01 * 255) ** 2, (0.03 * 255) ** 2
        h, w = p.shape[:2]
        smap = np.zeros((h, w))
        for c in range(3):
            a = np.pad(p[..., c] * 255.0, 5, mode="reflect")
            b = np.pad(t[..., c] * 255.0, 5, mode="reflect")
            for y in range(h):
                for x in range(w):
                    wa, wb = a[y:y + size, x:x + size], b[y:y + size, x:x + size]
                    ma, mb = (kern * wa).sum(), (kern * wb).sum()
                    va = (kern * wa * wa).sum() - ma**2
                    vb = (kern * wb * wb).sum() - mb**2
                    cov = (kern * wa * wb).sum() - ma * mb
                    smap[y, x] += ((2 * ma * mb + c1) * (2 * cov + c2)) / (
                        (ma**2 + mb**2 + c1) * (va + vb + c2)
                    )
        return (smap / 3.0)[m].mean()

    rng = np.random.default_rng(8)
    worst = 0.0
    for _ in range(20):
        p = rng.random((32, 32, 3))
        t = rng.random((32, 32, 3))
        m = rng.random((32, 32)) > 0.5
        worst = max(
            worst,
            abs(mse(p, t) - brute_mse(p, t)),
            abs(fmse(p, t, m) - brute_fmse(p, t, m)),
            abs(fssim(p, t, m) - brute_fssim(p, t, m)),
        )
    full = np.ones((32, 32), bool)
    p = rng.random((32, 32, 3))
    t = rng.random((32, 32, 3))
    full_dev = abs(fmse(p, t, full) - mse(p, t))
    ok = worst <= 1e-6 and full_dev <= 1e-12
    report(
        capsys, 8, ok,
        f"metrics vs brute force on 20 instances: worst dev {worst:.2e} "
        f"<= 1e-6; fmse(full fg) vs mse dev {full_dev:.2e} <= 1e-12",
    )


def test_criterion_09_bradley_terry(capsys):
    # 3-1 fixture against a grid-search oracle over the score gap
    wins = np.array([[0.0, 3.0], [1.0, 0.0]])
    scores = bt_rank(wins)
    gaps = np.linspace(-5, 5, 200001)
    lls = [
        bt_log_likelihood(wins, np.array([g / 2, -g / 2])) for g in gaps
    ]
    oracle_gap = gaps[int(np.argmax(lls))]
    dev = abs((scores[0] - scores[1]) - oracle_gap)
    closed_dev = abs(scores[0] - 0.5 * np.log(3))

    rng = np.random.default_rng(9)
    w2 = rng.integers(1, 15, size=(4, 4)).astype(float)
    np.fill_diagonal(w2, 0.0)
    _, history = bt_rank(w2, return_history=True)
    monotone = np.all(np.diff(history) >= -1e-9)

    sym = np.full((3, 3), 4.0)
    np.fill_diagonal(sym, 0.0)
    sym_max = np.abs(bt_rank(sym)).max()
    ok = dev <= 1e-3 and closed_dev <= 1e-3 and monotone and sym_max < 1e-9
    report(
        capsys, 9, ok,
        f"Bradley-Terry: 3-1 fixture dev vs grid oracle {dev:.1e} <= 1e-3 "
        f"(scores +-{scores[0]:.4f}), log-lik monotone={bool(monotone)}, "
        f"symmetric max |score| {sym_max:.1e}",
    )


def test_criterion_10_kmeans_oracle(capsys):
    def brute_sse(X):
        best = np.inf
        for assign in itertools.product([0, 1], repeat=len(X)):
            if len(set(assign)) < 2:
                continue
            sse = 0.0
            for g in (0, 1):
                mem = X[[i for i, a in enumerate(assign) if a == g]]
                sse += ((mem - mem.mean(axis=0)) ** 2).sum()
            best = min(best, sse)
        return best

    rng = np.random.default_rng(10)
    worst = 0.0
    for trial in range(10):
        tables = rng.random((6, 2, 2, 2, 3))
        coll = LutCollection(
            [Lut3D(t) for t in tables], [f"p{i}" for i in range(6)]
        )
        result = kmeans_cluster(coll, 2, KMeansConfig(seed=trial))
        oracle = brute_sse(tables.reshape(6, -1))
        worst = max(worst, result.inertia - oracle)
    ok = worst <= 1e-9
    report(
        capsys, 10, ok,
        f"k-means on 10 random 6-point size-2 instances: max excess SSE over "
        f"brute-force optimum {worst:.2e} <= 1e-9",
    )


def test_criterion_11_cli_determinism(capsys, tmp_path):
    def run(argv):
        with pytest.raises(SystemExit) as exc:
            cli_main(argv)
        assert exc.value.code == 0

    manifest = write_toy_dataset(tmp_path / "data", 3, size=32, seed=0)
    ckpt = tmp_path / "aug.ckpt"
    run([
        "train-augmentor", "--manifest", str(manifest), "--epochs", "1",
        "--d-z", "2", "--num-basis", "3", "--d-f", "8", "--lut-size", "5",
        "--encoder-size", "16", "--widths", "4,8,8,8", "--seed", "0",
        "--out", str(ckpt),
    ])
    wins = tmp_path / "wins.csv"
    wins.write_text("winner_id,loser_id,count\na,b,3\nb,a,1\n")

    out = tmp_path / "out"
    out.mkdir()
    commands = [
        ["cluster-luts", "--num-basis", "3", "--collection-size", "10",
         "--lut-size", "5", "--seed", "0", "--out-dir", str(out / "basis")],
        ["train-augmentor", "--manifest", str(manifest), "--epochs", "1",
         "--d-z", "2", "--num-basis", "3", "--d-f", "8", "--lut-size", "5",
         "--encoder-size", "16", "--widths", "4,8,8,8", "--seed", "0",
         "--out", str(out / "aug.ckpt"), "--loss-csv", str(out / "aug.csv")],
        ["augment", "--manifest", str(manifest), "--ckpt", str(ckpt),
         "--k", "2", "--seed", "1", "--out-dir", str(out / "augset")],
        ["train-harmonizer", "--manifest", str(manifest), "--aug-mode",
         "dynamic", "--augmentor-ckpt", str(ckpt), "--epochs", "2",
         "--encoder-size", "32", "--seed", "0",
         "--out", str(out / "harm.ckpt"), "--loss-csv", str(out / "harm.csv")],
        ["evaluate", "--manifest", str(manifest),
         "--out-csv", str(out / "eval.csv"), "--out-json", str(out / "eval.json")],
        ["bt-rank", "--wins", str(wins), "--out", str(out / "scores.json")],
        ["gradcheck", "--seed", "0", "--pairs", "1", "--image-size", "16",
         "--out", str(out / "gradcheck.json")],
    ]

    # first run, snapshot every output file, then rerun with identical flags
    for cmd in commands:
        run(cmd)
    snapshot = {
        p.relative_to(out): p.read_bytes()
        for p in out.rglob("*") if p.is_file()
    }
    for cmd in commands:
        run(cmd)
    after = {
        p.relative_to(out): p.read_bytes()
        for p in out.rglob("*") if p.is_file()
    }
    identical = set(snapshot) == set(after) and all(
        snapshot[name] == after[name] for name in snapshot
    )
    report(
        capsys, 11, identical,
        f"CLI determinism: {len(snapshot)} output files from 7 commands are "
        f"byte-identical across identical-flag reruns",
    )
