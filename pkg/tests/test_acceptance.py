"""Release gates for the whole package.

Each test here checks one end-to-end contract and prints a verdict line
through the hook in conftest.py.  Wall-clock budgets are measured around
the full body of each check, so a pass also certifies the runtime bound.
"""

import csv
import os
import time
from pathlib import Path

import numpy as np
import pytest

from skyaug import cli, evalmetrics, pls
from skyaug.augment import ALL_TRANSFORMS, apply_transform, denormalize, normalize, sixteen_fold
from skyaug.autodiff import Tensor, conv2d, conv_transpose2d
from skyaug.dataio import synth_dataset
from skyaug.filtering import baseline, filter_candidates
from skyaug.gan import TrainConfig, bce_loss, forward_generator, train_gan
from skyaug.pseudolabel import Candidate, ClusterConfig, SmoothConfig, kmeans_pixels, smooth_map


@pytest.mark.criterion(1, "intensity roundtrip")
def test_criterion_01_roundtrip_is_exact_on_all_intensities():
    t0 = time.perf_counter()
    img = np.arange(256, dtype=np.uint8).reshape(16, 16)
    back = denormalize(normalize(img))
    assert back.dtype == np.uint8
    assert np.array_equal(back, img)
    assert time.perf_counter() - t0 < 1.0


@pytest.mark.criterion(2, "sixteen-fold augmentation")
def test_criterion_02_sixteen_fold_structure_and_alignment():
    t0 = time.perf_counter()
    rng = np.random.default_rng(9)
    img = rng.integers(0, 256, size=(8, 8), dtype=np.uint8)
    map_ = img > 128

    imgs = sixteen_fold(img)
    maps = sixteen_fold(map_)
    assert len(imgs) == 16 and len(maps) == 16

    # generic image: the orbit has 8 distinct members, each seen twice
    groups = {}
    for a in imgs:
        groups.setdefault(a.tobytes(), 0)
        groups[a.tobytes()] += 1
    assert len(groups) == 8
    assert all(count == 2 for count in groups.values())

    for t, gi, gm in zip(ALL_TRANSFORMS, imgs, maps):
        assert np.array_equal(gi, apply_transform(img, t))
        assert np.array_equal(gm, apply_transform(map_, t))
        # the pair stays aligned: transforming commutes with thresholding
        assert np.array_equal(gm, gi > 128)
    assert time.perf_counter() - t0 < 1.0


def _max_rel_err(params, loss_fn, h=1e-4):
    """Worst relative disagreement between backprop and central differences."""
    for p in params:
        p.zero_grad()
    loss_fn().backward()
    worst = 0.0
    for p in params:
        analytic = p.grad.copy()
        it = np.nditer(p.data, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = p.data[idx]
            p.data[idx] = orig + h
            up = float(loss_fn().data)
            p.data[idx] = orig - h
            down = float(loss_fn().data)
            p.data[idx] = orig
            numeric = (up - down) / (2.0 * h)
            denom = max(abs(numeric), abs(analytic[idx]), 1e-6)
            worst = max(worst, abs(numeric - analytic[idx]) / denom)
    return worst


def _away_from_zero(rng, shape, lo=0.2, hi=1.0):
    """Uniform magnitudes in [lo, hi] with random sign, safe near relu kinks."""
    mag = rng.uniform(lo, hi, size=shape)
    sign = np.where(rng.random(shape) < 0.5, -1.0, 1.0)
    return mag * sign


@pytest.mark.criterion(3, "gradient check")
def test_criterion_03_every_layer_matches_finite_differences():
    t0 = time.perf_counter()
    worst = 0.0
    for seed in range(10):
        rng = np.random.default_rng(seed)

        x = Tensor(_away_from_zero(rng, (2, 3)))
        w = Tensor(_away_from_zero(rng, (3, 2)))
        b = Tensor(_away_from_zero(rng, (1, 2)))
        worst = max(worst, _max_rel_err(
            [x, w, b], lambda: ((x.matmul(w) + b) * (x.matmul(w) + b)).mean()))

        a = Tensor(_away_from_zero(rng, (3, 1)))
        c = Tensor(_away_from_zero(rng, (1, 4)))
        worst = max(worst, _max_rel_err([a, c], lambda: ((a + c) * (a - c)).mean()))
        worst = max(worst, _max_rel_err([a], lambda: (-a).sum()))

        r = Tensor(_away_from_zero(rng, (4, 4)))
        worst = max(worst, _max_rel_err([r], lambda: (r.relu() * r.relu()).mean()))
        worst = max(worst, _max_rel_err(
            [r], lambda: (r.leaky_relu(0.2) * r.leaky_relu(0.2)).mean()))
        worst = max(worst, _max_rel_err([r], lambda: (r.tanh() * r.sigmoid()).mean()))
        worst = max(worst, _max_rel_err([r], lambda: r.reshape(2, 8).matmul(
            Tensor(np.full((8, 1), 0.5))).mean()))

        pos = Tensor(rng.uniform(0.2, 3.0, size=(3, 3)))
        worst = max(worst, _max_rel_err([pos], lambda: pos.log().mean()))
        # clip bounds sit more than h away from every sample
        cl = Tensor(_away_from_zero(rng, (3, 3), lo=0.3, hi=0.45))
        worst = max(worst, _max_rel_err([cl], lambda: (cl.clip(-0.5, 0.5) * cl).mean()))

        xc = Tensor(_away_from_zero(rng, (1, 1, 4, 4)))
        wc = Tensor(_away_from_zero(rng, (2, 1, 2, 2)))
        bc = Tensor(_away_from_zero(rng, (2,)))
        worst = max(worst, _max_rel_err(
            [xc, wc, bc],
            lambda: (conv2d(xc, wc, bc, 1, 0) * conv2d(xc, wc, bc, 1, 0)).mean()))

        xt = Tensor(_away_from_zero(rng, (1, 2, 3, 3)))
        wt = Tensor(_away_from_zero(rng, (2, 1, 4, 4)))
        bt = Tensor(_away_from_zero(rng, (1,)))
        worst = max(worst, _max_rel_err(
            [xt, wt, bt],
            lambda: (conv_transpose2d(xt, wt, bt, 2, 1)
                     * conv_transpose2d(xt, wt, bt, 2, 1)).mean()))

        # composed net, well under 200 parameters, ending in a bce loss
        inp = Tensor(_away_from_zero(rng, (1, 1, 4, 4)))
        cw = Tensor(_away_from_zero(rng, (2, 1, 4, 4), lo=0.1, hi=0.5))
        cb = Tensor(_away_from_zero(rng, (2,), lo=0.1, hi=0.5))
        tw = Tensor(_away_from_zero(rng, (2, 1, 4, 4), lo=0.1, hi=0.5))
        tb = Tensor(_away_from_zero(rng, (1,), lo=0.1, hi=0.5))
        w1 = Tensor(_away_from_zero(rng, (16, 3), lo=0.1, hi=0.5))
        b1 = Tensor(_away_from_zero(rng, (1, 3), lo=0.1, hi=0.5))
        w2 = Tensor(_away_from_zero(rng, (3, 1), lo=0.1, hi=0.5))
        b2 = Tensor(_away_from_zero(rng, (1, 1), lo=0.1, hi=0.5))
        net_params = [cw, cb, tw, tb, w1, b1, w2, b2]
        assert sum(p.data.size for p in net_params) <= 200

        def net_loss():
            h1 = conv2d(inp, cw, cb, 2, 1).leaky_relu(0.2)
            h2 = conv_transpose2d(h1, tw, tb, 2, 1).tanh()
            h3 = (h2.reshape(1, 16).matmul(w1) + b1).relu()
            out = (h3.matmul(w2) + b2).sigmoid()
            return bce_loss(out, 1.0)

        worst = max(worst, _max_rel_err(net_params, net_loss))

    assert worst < 1e-4
    assert time.perf_counter() - t0 < 30.0


@pytest.mark.criterion(4, "single-image training")
def test_criterion_04_error_to_target_shrinks_by_epoch_200():
    t0 = time.perf_counter()
    img, _ = synth_dataset(1, 16, seed=2)[0]
    target = normalize(img)
    probes = np.random.default_rng(123).standard_normal((8, 100))

    def probe_error(gen):
        return float(np.mean([np.abs(forward_generator(gen, z) - target).mean()
                              for z in probes]))

    def run(epochs):
        cfg = TrainConfig(epochs=epochs, image_side=16,
                          learning_rate=0.0001, seed=0)
        gen, _, _ = train_gan([target], cfg)
        return gen

    err_first = probe_error(run(1))
    gen = run(200)
    err_last = probe_error(gen)
    assert err_last < err_first
    for z in probes:
        out = forward_generator(gen, z)
        assert np.all(out > -1.0) and np.all(out < 1.0)
    assert time.perf_counter() - t0 < 180.0


@pytest.mark.criterion(5, "regression core")
def test_criterion_05_matches_least_squares_at_full_rank():
    t0 = time.perf_counter()
    for seed in range(5):
        rng = np.random.default_rng(100 + seed)
        X = rng.standard_normal((30, 6))
        Y = rng.standard_normal((30, 4))
        assert np.linalg.matrix_rank(X) == 6

        model = pls.fit_pls2(X, Y, n_comp=6)
        Xc = X - X.mean(axis=0)
        beta, *_ = np.linalg.lstsq(Xc, Y - Y.mean(axis=0), rcond=None)
        oracle = Y.mean(axis=0) + Xc @ beta
        assert np.max(np.abs(pls.predict(model, X) - oracle)) < 1e-6

        prev = -np.inf
        for k in range(1, 7):
            part = pls.fit_pls2(X, Y, n_comp=k)
            r2 = pls.r2_score(Y, pls.predict(part, X))
            assert r2 >= prev - 1e-9
            prev = r2

        scores = (X - model.x_mean) @ model.W @ np.linalg.inv(model.P.T @ model.W)
        gram = scores.T @ scores
        off = gram - np.diag(np.diag(gram))
        assert np.max(np.abs(off)) < 1e-8 * max(1.0, np.max(np.diag(gram)))
    assert time.perf_counter() - t0 < 10.0


def _majority_once(map_, radius):
    h, w = map_.shape
    out = np.zeros_like(map_)
    for i in range(h):
        for j in range(w):
            win = map_[max(0, i - radius):i + radius + 1,
                       max(0, j - radius):j + radius + 1]
            ones = int(win.sum())
            zeros = win.size - ones
            out[i, j] = map_[i, j] if ones == zeros else ones > zeros
    return out


@pytest.mark.criterion(6, "clustering and smoothing")
def test_criterion_06_kmeans_partition_and_majority_fixed_point():
    t0 = time.perf_counter()
    img = np.full((20, 20), 20, dtype=np.uint8)
    img[10:, :] = 230
    assert np.array_equal(kmeans_pixels(img, ClusterConfig()), img == 230)

    for i in range(20):
        rng = np.random.default_rng(300 + i)
        m = rng.random((32, 32)) < 0.5
        one_pass = smooth_map(m, SmoothConfig(window_radius=2, max_passes=1))
        assert np.array_equal(one_pass, _majority_once(m, 2))

        settled = smooth_map(m, SmoothConfig(window_radius=2, max_passes=256))
        assert np.array_equal(settled, _majority_once(settled, 2))
    assert time.perf_counter() - t0 < 10.0


@pytest.mark.criterion(7, "candidate filter soundness")
def test_criterion_07_filter_accepts_duplicates_rejects_noise():
    """Binary images whose map equals the image make the verdicts unambiguous.

    Samples come from a six-pattern dictionary, so validation rows lie in
    the training row space and the fit is exact: a duplicate of a training
    pair cannot hurt, while a noise image with an inverted map must.
    """
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    patterns = [rng.random((8, 8)) < 0.5 for _ in range(6)]
    maps = [patterns[i % 6] for i in range(12)] + patterns[:4]
    imgs = [(m * np.uint8(255)).astype(np.uint8) for m in maps]
    train = (pls.images_to_design(imgs[:12]), pls.maps_to_design(maps[:12]))
    val = (pls.images_to_design(imgs[12:]), pls.maps_to_design(maps[12:]))
    n_comp = int(np.linalg.matrix_rank(train[0] - train[0].mean(axis=0)))

    def build_candidates():
        out = [Candidate(image=imgs[i], map=maps[i], latent_seed=0, index=i)
               for i in range(5)]
        for j in range(3):
            noise_rng = np.random.default_rng(77 + j)
            noise = noise_rng.integers(0, 256, size=(8, 8), dtype=np.uint8)
            bad_map = ~(noise > noise.mean())
            out.append(Candidate(image=noise, map=bad_map,
                                 latent_seed=0, index=5 + j))
        return out

    report, _ = filter_candidates(train, val, build_candidates(), n_comp)
    verdicts = {idx: verdict for idx, _, verdict in report.decisions}
    for i in range(5):
        assert verdicts[i] == "favorable"
    for i in range(5, 8):
        assert verdicts[i] == "unfavorable"

    # post-hoc refit: every accepted candidate really holds the line
    base = baseline(train, val, n_comp)
    assert report.baseline_r2_val == base
    for cand in build_candidates():
        if verdicts[cand.index] != "favorable":
            continue
        x_aug = np.vstack([train[0], cand.image.reshape(1, -1) / 255.0])
        y_aug = np.vstack([train[1], cand.map.astype(np.float64).reshape(1, -1)])
        refit = pls.fit_pls2(x_aug, y_aug, n_comp)
        assert pls.r2_score(val[1], pls.predict(refit, val[0])) >= base

    shuffled = build_candidates()
    np.random.default_rng(5).shuffle(shuffled)
    report_shuffled, _ = filter_candidates(train, val, shuffled, n_comp)
    assert {idx: v for idx, _, v in report_shuffled.decisions} == verdicts
    assert time.perf_counter() - t0 < 120.0


@pytest.mark.criterion(8, "threshold metrics")
def test_criterion_08_roc_shape_auc_anchors_and_prf():
    t0 = time.perf_counter()
    for g in range(100):
        rng = np.random.default_rng(200 + g)
        scores = rng.random(64)
        gt = rng.random(64) < 0.5
        gt[0], gt[1] = False, True
        curve = evalmetrics.roc_curve(scores, gt)
        fpr = [p[1] for p in curve.points]
        tpr = [p[2] for p in curve.points]
        assert (fpr[0], tpr[0]) == (0.0, 0.0)
        assert (fpr[-1], tpr[-1]) == (1.0, 1.0)
        assert all(b >= a for a, b in zip(fpr, fpr[1:]))
        assert all(b >= a for a, b in zip(tpr, tpr[1:]))

    gt = np.arange(40) < 20
    perfect = evalmetrics.roc_curve(gt.astype(float), gt)
    assert perfect.auc == 1.0

    balanced = np.repeat([False, True], 5000)
    noise = np.random.default_rng(8).random(10000)
    assert 0.45 <= evalmetrics.roc_curve(noise, balanced).auc <= 0.55

    p, r, f = evalmetrics.prf(evalmetrics.ConfusionMatrix(tp=3, fp=1, tn=0, fn=1))
    assert (p, r, f) == (0.75, 0.75, 0.75)
    assert time.perf_counter() - t0 < 10.0


FULL_RUN = ["gan_epochs=50", "candidates=32"]


@pytest.mark.criterion(9, "full pipeline determinism")
def test_criterion_09_pipeline_completes_and_repeats_byte_identically(tmp_path):
    d1 = tmp_path / "run1"
    d2 = tmp_path / "run2"
    t0 = time.perf_counter()
    assert cli.main(["all", f"outdir={d1}"] + FULL_RUN) == 0
    wall = time.perf_counter() - t0
    assert wall < 900.0

    tables = (d1 / "tables.txt").read_text(encoding="utf-8")
    for needle in ("without_augmentation", "after_augmentation",
                   "precision", "recall", "f_score", "r2"):
        assert needle in tables

    with open(d1 / "evaluation.csv", newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["case", "r2_train", "r2_test",
                       "precision", "recall", "f_score"]
    assert [row[0] for row in rows[1:]] == ["without_augmentation",
                                            "after_augmentation"]
    for row in rows[1:]:
        for cell in row[1:]:
            float(cell)

    assert cli.main(["all", f"outdir={d2}"] + FULL_RUN) == 0
    first = sorted(p.relative_to(d1) for p in d1.rglob("*.csv"))
    second = sorted(p.relative_to(d2) for p in d2.rglob("*.csv"))
    assert first == second and first
    for rel in first:
        assert (d1 / rel).read_bytes() == (d2 / rel).read_bytes(), rel


@pytest.mark.criterion(10, "real-data comparison, informational")
def test_criterion_10_real_dataset_f_scores_are_recorded(tmp_path, record_property):
    root = os.environ.get("SKYAUG_DATASET", "")
    if not root:
        root = str(Path(__file__).resolve().parents[1] / "data" / "swinseg")
    if not (Path(root) / "images").is_dir():
        pytest.skip("real dataset not provided; set SKYAUG_DATASET or "
                    "populate data/swinseg/{images,maps}")

    outdir = tmp_path / "real"
    assert cli.main(["all", f"outdir={outdir}", f"dataset={root}",
                     "side=32"] + FULL_RUN) == 0
    with open(outdir / "evaluation.csv", newline="", encoding="utf-8") as fh:
        rows = {row[0]: row for row in csv.reader(fh)}
    f_base = float(rows["without_augmentation"][5])
    f_aug = float(rows["after_augmentation"][5])
    direction = "improved" if f_aug > f_base else (
        "declined" if f_aug < f_base else "unchanged")
    record_property(
        "acceptance_note",
        f"f without={f_base:.4f} with={f_aug:.4f} direction={direction} "
        f"matches_expected_improvement={direction == 'improved'}")
