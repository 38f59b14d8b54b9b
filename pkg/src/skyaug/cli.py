"""Batch pipeline driver.

Stages run as subcommands against an output directory, each writing its
artifacts plus CSV reports and recording itself in run_manifest.json
(config snapshot, seeds, artifact hashes, wall times). A stage whose inputs
and config are unchanged since its last run is skipped unless --force.

Exit codes: 0 success, 1 usage error, 2 data error, 3 stage-order error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, augment, checkpoint, dataio, evalmetrics, filtering, gan, pls, pseudolabel
from .nets import GeneratorNet

DEFAULTS = {
    "dataset": "synthetic",
    "dataset_count": 115,
    "synth_seed": 11,
    "side": 32,
    "split_seed": 5,
    "gan_epochs": 1000,
    "gan_batch": 32,
    "gan_lr": 0.00025,
    "gan_latent": 100,
    "gan_seed": 21,
    "dedupe_augment": False,
    "candidates": 64,
    "sample_seed": 1000,
    "cluster_max_iters": 100,
    "cluster_tol": 1e-6,
    "cluster_invert_cloud_rule": False,
    "smooth_radius": 2,
    "smooth_passes": 3,
    "pls_max_comp": 20,
    "pls_r2_mode": "pooled",
    "filter_mode": "independent",
    "outdir": "run",
}

CASE_BASE = "without_augmentation"
CASE_AUG = "after_augmentation"


class UsageError(Exception):
    pass


class StageOrderError(Exception):
    pass


def _require(path: Path, producing_stage: str) -> Path:
    if not path.exists():
        raise StageOrderError(f"missing artifact {path}; run `skyaug "
                              f"{producing_stage}` first")
    return path


# --- config ---

def _coerce(key: str, raw: str):
    base = DEFAULTS[key]
    raw = raw.strip()
    if isinstance(base, bool):
        low = raw.lower()
        if low in ("true", "1", "yes", "on"):
            return True
        if low in ("false", "0", "no", "off"):
            return False
        raise UsageError(f"config key '{key}' expects a boolean, got '{raw}'")
    try:
        if isinstance(base, int):
            return int(raw)
        if isinstance(base, float):
            return float(raw)
    except ValueError:
        raise UsageError(f"config key '{key}' expects a number, got '{raw}'") from None
    return raw


def _apply_setting(cfg: dict, key: str, raw: str, where: str) -> None:
    key = key.strip()
    if key not in DEFAULTS:
        raise UsageError(f"{where}: unknown config key '{key}'")
    cfg[key] = _coerce(key, raw)


def load_config(path=None, overrides=()) -> dict:
    """Resolve the flat key=value config: defaults, then file, then overrides."""
    cfg = dict(DEFAULTS)
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise UsageError(f"cannot read config file {path}: {exc}") from exc
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key = value")
            key, raw = line.split("=", 1)
            _apply_setting(cfg, key, raw, f"{path}:{lineno}")
    for item in overrides:
        if "=" not in item:
            raise UsageError(f"override '{item}' is not of the form key=value")
        key, raw = item.split("=", 1)
        _apply_setting(cfg, key, raw, "command line")
    return cfg


# --- run manifest and stage caching ---

def _hash_file(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _load_manifest(path: Path) -> dict:
    if path.exists():
        try:
            return json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise dataio.DataError(f"corrupt run manifest {path}: {exc}") from exc
    return {"version": __version__, "config": {}, "stages": {}}


def _save_manifest(path: Path, data: dict) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")


def _rel(outdir: Path, path: Path) -> str:
    path = Path(path)
    try:
        return path.relative_to(outdir).as_posix()
    except ValueError:
        return str(path)


def _run_cached(name: str, cfg: dict, cfg_keys, outdir: Path, manifest: dict,
                input_paths, force: bool, fn, extra_cfg: dict | None = None) -> None:
    """Run `fn` unless the stage is already recorded with the same digest and
    its artifacts are all present. `fn` returns (artifact_paths, info)."""
    payload = {
        "config": {k: cfg[k] for k in sorted(cfg_keys)},
        "inputs": {_rel(outdir, p): _hash_file(p) for p in input_paths},
    }
    if extra_cfg:
        payload["config"].update(extra_cfg)
    digest = hashlib.sha256(
        json.dumps(payload, sort_keys=True).encode("utf-8")).hexdigest()

    rec = manifest["stages"].get(name)
    if rec is not None and not force and rec.get("input_digest") == digest \
            and all((outdir / a).exists() for a in rec.get("artifacts", {})):
        print(f"{name}: up to date")
        return

    started = time.perf_counter()
    artifacts, info = fn()
    wall = time.perf_counter() - started
    manifest["stages"][name] = {
        "input_digest": digest,
        "wall_time_s": round(wall, 3),
        "artifacts": {_rel(outdir, p): _hash_file(p) for p in artifacts},
        "info": info,
    }
    manifest["version"] = __version__
    _save_manifest(outdir / "run_manifest.json", manifest)
    print(f"{name}: done in {wall:.2f}s")


# --- shared loaders ---

def _dataset_manifest(outdir: Path) -> Path:
    return _require(outdir / "dataset" / "manifest.csv", "prepare")


def _split_files(outdir: Path, split: str):
    """Image and map paths of one split, resolved under outdir."""
    base = outdir / "dataset"
    files = []
    for image_path, map_path, s in dataio.read_manifest(base / "manifest.csv"):
        if s == split:
            files.append((base / image_path, base / map_path))
    return files


def _design_pair(outdir: Path, split: str):
    images, maps = dataio.load_split_arrays(_dataset_manifest(outdir), split)
    if not images:
        raise dataio.DataError(f"split '{split}' is empty")
    return pls.images_to_design(images), pls.maps_to_design(maps)


def _read_candidates_csv(path: Path):
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["index", "latent_seed", "image"]:
            raise dataio.DataError(f"{path}: unexpected header {header}")
        for row in reader:
            rows.append((int(row[0]), int(row[1]), row[2]))
    return rows


def _read_candidate_maps_csv(path: Path) -> dict:
    out = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["index", "map"]:
            raise dataio.DataError(f"{path}: unexpected header {header}")
        for row in reader:
            out[int(row[0])] = row[1]
    return out


def _load_candidates(outdir: Path):
    cand_csv = _require(outdir / "candidates.csv", "sample-gan")
    maps_csv = _require(outdir / "candidate_maps.csv", "pseudolabel")
    map_rel = _read_candidate_maps_csv(maps_csv)
    cands = []
    for idx, seed, rel in _read_candidates_csv(cand_csv):
        if idx not in map_rel:
            raise StageOrderError(f"missing map entry for candidate {idx}; "
                                  f"run `skyaug pseudolabel` first")
        img = dataio.load_image_file(outdir / rel)
        map_ = dataio.load_map_file(outdir / map_rel[idx])
        cands.append(pseudolabel.Candidate(image=img, map=map_,
                                           latent_seed=seed, index=idx))
    return cands


def _chosen_from_sweep(path: Path) -> int:
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        next(reader, None)
        for row in reader:
            rows.append((int(row[0]), float(row[1]), float(row[2])))
    if not rows:
        raise dataio.DataError(f"{path}: no sweep rows")
    return max(rows, key=lambda r: (r[2], -r[0]))[0]


def _favorable_ids(path: Path) -> set:
    ids = set()
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        next(reader, None)  # baseline header
        next(reader, None)  # column header
        for row in reader:
            if row[2] == "favorable":
                ids.add(int(row[0]))
    return ids


def _augmented_pair(outdir: Path, x_train, y_train):
    """Training pair extended with the favorable candidates, in input order."""
    favorable = _favorable_ids(_require(outdir / "filter.csv", "filter"))
    x_cur, y_cur = x_train, y_train
    for c in _load_candidates(outdir):
        if c.index in favorable:
            x_cur, y_cur = filtering._stack_sample(x_cur, y_cur, c)
    return x_cur, y_cur


# --- stages ---

def stage_prepare(cfg, outdir, manifest, force):
    source_files = []
    if cfg["dataset"] != "synthetic":
        root = Path(cfg["dataset"])
        if not root.is_dir():
            raise dataio.DataError(f"dataset directory not found: {root}")
        stems = sorted(p.stem for p in (root / "images").glob("*.ppm"))
        if not stems:
            raise dataio.DataError(f"no .ppm images under {root / 'images'}")
        for stem in stems:
            img_path = root / "images" / f"{stem}.ppm"
            map_path = root / "maps" / f"{stem}.pgm"
            if not map_path.exists():
                raise dataio.DataError(f"no map for image '{stem}': {map_path}")
            source_files += [img_path, map_path]

    def run():
        ds_dir = outdir / "dataset"
        ds_dir.mkdir(parents=True, exist_ok=True)
        if cfg["dataset"] == "synthetic":
            pairs = dataio.synth_dataset(cfg["dataset_count"], cfg["side"],
                                         cfg["synth_seed"])
        else:
            pairs = []
            for i in range(0, len(source_files), 2):
                rgb = dataio.load_rgb_file(source_files[i])
                img = dataio.downsample_image(dataio.extract_rb(rgb), cfg["side"])
                map_ = dataio.downsample_map(
                    dataio.load_map_file(source_files[i + 1]), cfg["side"])
                pairs.append((img, map_))
        split = dataio.split_dataset(len(pairs), cfg["split_seed"])
        label = {}
        for i in split.train_ids:
            label[i] = "train"
        for i in split.val_ids:
            label[i] = "val"
        for i in split.test_ids:
            label[i] = "test"
        records, artifacts = [], []
        for i, (img, map_) in enumerate(pairs):
            img_rel, map_rel = f"img_{i:03d}.pgm", f"map_{i:03d}.pgm"
            dataio.save_image_file(img, ds_dir / img_rel)
            dataio.save_map_file(map_, ds_dir / map_rel)
            records.append((img_rel, map_rel, label[i]))
            artifacts += [ds_dir / img_rel, ds_dir / map_rel]
        dataio.write_manifest(ds_dir / "manifest.csv", records)
        artifacts.append(ds_dir / "manifest.csv")
        info = {"images": len(pairs), "train": len(split.train_ids),
                "val": len(split.val_ids), "test": len(split.test_ids)}
        return artifacts, info

    _run_cached("prepare", cfg,
                ["dataset", "dataset_count", "synth_seed", "side", "split_seed"],
                outdir, manifest, source_files, force, run)


def stage_train_gan(cfg, outdir, manifest, force):
    manifest_csv = _dataset_manifest(outdir)
    train_files = _split_files(outdir, "train")
    inputs = [manifest_csv] + [img for img, _ in train_files]

    def run():
        images, _ = dataio.load_split_arrays(manifest_csv, "train")
        if not images:
            raise dataio.DataError("training split is empty")
        frames = [augment.normalize(f)
                  for img in images
                  for f in augment.sixteen_fold(img, dedupe=cfg["dedupe_augment"])]
        tc = gan.TrainConfig(batch_size=cfg["gan_batch"], epochs=cfg["gan_epochs"],
                             image_side=cfg["side"], latent_dim=cfg["gan_latent"],
                             learning_rate=cfg["gan_lr"], seed=cfg["gan_seed"])
        g, d, hist = gan.train_gan(frames, tc)
        g_path = outdir / "gan_generator.ckpt"
        d_path = outdir / "gan_discriminator.ckpt"
        losses = outdir / "gan_losses.csv"
        g.save(g_path)
        d.save(d_path)
        gan.write_loss_history(losses, hist)
        info = {"training_frames": len(frames), "epochs": cfg["gan_epochs"],
                "final_d_loss": hist[-1][0], "final_g_loss": hist[-1][1]}
        return [g_path, d_path, losses], info

    _run_cached("train-gan", cfg,
                ["side", "dedupe_augment", "gan_batch", "gan_epochs", "gan_lr",
                 "gan_latent", "gan_seed"],
                outdir, manifest, inputs, force, run)


def stage_sample_gan(cfg, outdir, manifest, force):
    g_path = _require(outdir / "gan_generator.ckpt", "train-gan")

    def run():
        gen = GeneratorNet.load(g_path)
        cand_dir = outdir / "candidates"
        cand_dir.mkdir(exist_ok=True)
        artifacts, rows = [], []
        for i in range(cfg["candidates"]):
            seed = cfg["sample_seed"] + i
            img = gan.sample(gen, 1, seed)[0]
            rel = f"candidates/cand_{i:03d}.pgm"
            dataio.save_image_file(img, outdir / rel)
            rows.append((i, seed, rel))
            artifacts.append(outdir / rel)
        cand_csv = outdir / "candidates.csv"
        with open(cand_csv, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["index", "latent_seed", "image"])
            writer.writerows(rows)
        artifacts.append(cand_csv)
        return artifacts, {"candidates": len(rows)}

    _run_cached("sample-gan", cfg, ["candidates", "sample_seed"],
                outdir, manifest, [g_path], force, run)


def stage_pseudolabel(cfg, outdir, manifest, force):
    cand_csv = _require(outdir / "candidates.csv", "sample-gan")
    rows = _read_candidates_csv(cand_csv)
    inputs = [cand_csv] + [outdir / rel for _, _, rel in rows]
    for p in inputs[1:]:
        _require(p, "sample-gan")

    def run():
        ccfg = pseudolabel.ClusterConfig(max_iters=cfg["cluster_max_iters"],
                                         tol=cfg["cluster_tol"])
        scfg = pseudolabel.SmoothConfig(window_radius=cfg["smooth_radius"],
                                        max_passes=cfg["smooth_passes"])
        artifacts, map_rows = [], []
        for idx, _seed, rel in rows:
            img = dataio.load_image_file(outdir / rel)
            pix = pseudolabel.kmeans_pixels(img, ccfg,
                                            cfg["cluster_invert_cloud_rule"])
            map_ = pseudolabel.smooth_map(pix, scfg)
            map_rel = f"candidates/cand_{idx:03d}_map.pgm"
            dataio.save_map_file(map_, outdir / map_rel)
            map_rows.append((idx, map_rel))
            artifacts.append(outdir / map_rel)
        maps_csv = outdir / "candidate_maps.csv"
        with open(maps_csv, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["index", "map"])
            writer.writerows(map_rows)
        artifacts.append(maps_csv)
        return artifacts, {"maps": len(map_rows)}

    _run_cached("pseudolabel", cfg,
                ["cluster_max_iters", "cluster_tol", "cluster_invert_cloud_rule",
                 "smooth_radius", "smooth_passes"],
                outdir, manifest, inputs, force, run)


def stage_tune_pls(cfg, outdir, manifest, force):
    manifest_csv = _dataset_manifest(outdir)
    inputs = [manifest_csv] + [p for pair in _split_files(outdir, "train")
                               + _split_files(outdir, "val") for p in pair]

    def run():
        train = _design_pair(outdir, "train")
        val = _design_pair(outdir, "val")
        report = pls.sweep_ncomp(train, val, cfg["pls_max_comp"],
                                 cfg["pls_r2_mode"])
        sweep_csv = outdir / "sweep.csv"
        pls.write_sweep_csv(report, sweep_csv)
        best = dict((k, (rt, rv)) for k, rt, rv in report.rows)[report.chosen]
        info = {"chosen_n_comp": report.chosen,
                "r2_train": best[0], "r2_val": best[1]}
        return [sweep_csv], info

    _run_cached("tune-pls", cfg, ["pls_max_comp", "pls_r2_mode"],
                outdir, manifest, inputs, force, run)


def stage_filter(cfg, outdir, manifest, force):
    sweep_csv = _require(outdir / "sweep.csv", "tune-pls")
    cand_csv = _require(outdir / "candidates.csv", "sample-gan")
    maps_csv = _require(outdir / "candidate_maps.csv", "pseudolabel")
    manifest_csv = _dataset_manifest(outdir)
    inputs = [sweep_csv, cand_csv, maps_csv, manifest_csv]
    inputs += [outdir / rel for _, _, rel in _read_candidates_csv(cand_csv)]
    inputs += [outdir / rel for rel in _read_candidate_maps_csv(maps_csv).values()]
    for p in inputs:
        _require(p, "pseudolabel")

    def run():
        train = _design_pair(outdir, "train")
        val = _design_pair(outdir, "val")
        cands = _load_candidates(outdir)
        n_comp = _chosen_from_sweep(sweep_csv)
        report, _ = filtering.filter_candidates(train, val, cands, n_comp,
                                                cfg["filter_mode"],
                                                cfg["pls_r2_mode"])
        filter_csv = outdir / "filter.csv"
        filtering.write_filter_csv(report, filter_csv)
        info = {"baseline_r2_val": report.baseline_r2_val,
                "accepted": report.accepted_count,
                "rejected": len(report.decisions) - report.accepted_count,
                "n_comp": n_comp, "mode": report.mode}
        return [filter_csv], info

    _run_cached("filter", cfg, ["filter_mode", "pls_r2_mode"],
                outdir, manifest, inputs, force, run)


def stage_train_final(cfg, outdir, manifest, force):
    sweep_csv = _require(outdir / "sweep.csv", "tune-pls")
    filter_csv = _require(outdir / "filter.csv", "filter")
    manifest_csv = _dataset_manifest(outdir)
    inputs = [sweep_csv, filter_csv, manifest_csv,
              _require(outdir / "candidates.csv", "sample-gan"),
              _require(outdir / "candidate_maps.csv", "pseudolabel")]

    def run():
        x_train, y_train = _design_pair(outdir, "train")
        n_comp = _chosen_from_sweep(sweep_csv)
        base_path = outdir / "model_baseline.ckpt"
        aug_path = outdir / "model_augmented.ckpt"
        pls.fit_pls2(x_train, y_train, n_comp).save(base_path)
        x_aug, y_aug = _augmented_pair(outdir, x_train, y_train)
        pls.fit_pls2(x_aug, y_aug, n_comp).save(aug_path)
        info = {"n_comp": n_comp, "train_rows": x_train.shape[0],
                "augmented_rows": x_aug.shape[0]}
        return [base_path, aug_path], info

    _run_cached("train-final", cfg, ["pls_r2_mode"],
                outdir, manifest, inputs, force, run)


def stage_evaluate(cfg, outdir, manifest, force):
    base_path = _require(outdir / "model_baseline.ckpt", "train-final")
    aug_path = _require(outdir / "model_augmented.ckpt", "train-final")
    manifest_csv = _dataset_manifest(outdir)
    inputs = [base_path, aug_path, manifest_csv,
              _require(outdir / "filter.csv", "filter")]
    inputs += [p for pair in _split_files(outdir, "test") for p in pair]

    def run():
        test_images, test_maps = dataio.load_split_arrays(manifest_csv, "test")
        if not test_images:
            raise dataio.DataError("test split is empty")
        x_train, y_train = _design_pair(outdir, "train")
        x_aug, y_aug = _augmented_pair(outdir, x_train, y_train)

        cases = [
            (CASE_BASE, pls.PlsModel.load(base_path), (x_train, y_train)),
            (CASE_AUG, pls.PlsModel.load(aug_path), (x_aug, y_aug)),
        ]
        artifacts = []
        roc_dir = outdir / "roc"
        roc_dir.mkdir(exist_ok=True)
        reports = {}
        for case, model, train_pair in cases:
            report, curves = evalmetrics.evaluate_model(
                model, train_pair, test_images, test_maps, cfg["pls_r2_mode"])
            reports[case] = report
            per_image = outdir / f"metrics_{case}.csv"
            evalmetrics.write_report_csv(report, per_image)
            artifacts.append(per_image)
            for i, curve in enumerate(curves):
                if curve is None:
                    continue
                roc_csv = roc_dir / f"{case}_img{i:02d}.csv"
                evalmetrics.write_roc_csv(curve, roc_csv)
                artifacts.append(roc_csv)

        eval_csv = outdir / "evaluation.csv"
        with open(eval_csv, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["case", "r2_train", "r2_test", "precision",
                             "recall", "f_score"])
            for case in (CASE_BASE, CASE_AUG):
                r = reports[case]
                writer.writerow([case, repr(r.r2_train), repr(r.r2_test),
                                 repr(r.mean_precision), repr(r.mean_recall),
                                 repr(r.mean_f_score)])
        artifacts.append(eval_csv)

        base_f = reports[CASE_BASE].mean_f_score
        aug_f = reports[CASE_AUG].mean_f_score
        if aug_f > base_f:
            direction = "improved"
        elif aug_f < base_f:
            direction = "declined"
        else:
            direction = "unchanged"
        tables = outdir / "tables.txt"
        tables.write_text(
            "\n".join([
                evalmetrics.format_report(CASE_BASE, reports[CASE_BASE]),
                "",
                evalmetrics.format_report(CASE_AUG, reports[CASE_AUG]),
                "",
                f"f_score after augmentation: {direction} "
                f"({base_f:.4f} -> {aug_f:.4f})",
                evalmetrics.LEAK_FOOTNOTE,
                "",
            ]),
            encoding="utf-8")
        artifacts.append(tables)
        info = {"f_direction": direction,
                "r2_test_base": reports[CASE_BASE].r2_test,
                "r2_test_aug": reports[CASE_AUG].r2_test,
                "f_base": base_f, "f_aug": aug_f}
        return artifacts, info

    _run_cached("evaluate", cfg, ["pls_r2_mode"],
                outdir, manifest, inputs, force, run)


def stage_report(cfg, outdir, manifest, force, plots=False):
    sweep_csv = _require(outdir / "sweep.csv", "tune-pls")
    filter_csv = _require(outdir / "filter.csv", "filter")
    eval_csv = _require(outdir / "evaluation.csv", "evaluate")
    tables = _require(outdir / "tables.txt", "evaluate")
    inputs = [sweep_csv, filter_csv, eval_csv, tables]

    def run():
        artifacts = []
        if plots:
            artifacts += _render_plots(outdir, sweep_csv, filter_csv)
        print(tables.read_text(encoding="utf-8"))
        return artifacts, {"plots": len(artifacts)}

    _run_cached("report", cfg, [], outdir, manifest, inputs, force, run,
                extra_cfg={"plots": bool(plots)})


def _render_plots(outdir: Path, sweep_csv: Path, filter_csv: Path) -> list:
    try:
        import matplotlib
    except ImportError:
        print("matplotlib is not installed; skipping plots "
              "(pip install skyaug[plots])", file=sys.stderr)
        return []
    matplotlib.use("Agg")
    matplotlib.rcParams["svg.hashsalt"] = "skyaug"
    import matplotlib.pyplot as plt

    written = []

    with open(sweep_csv, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        next(reader)
        sweep = [(int(r[0]), float(r[1]), float(r[2])) for r in reader]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot([r[0] for r in sweep], [r[1] for r in sweep], "o-", label="train")
    ax.plot([r[0] for r in sweep], [r[2] for r in sweep], "s-", label="validation")
    ax.set_xlabel("components")
    ax.set_ylabel("$R^2$")
    ax.legend()
    fig.tight_layout()
    path = outdir / "sweep.svg"
    fig.savefig(path, metadata={"Date": None})
    plt.close(fig)
    written.append(path)

    with open(filter_csv, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        baseline_row = next(reader)
        next(reader)
        decisions = [(int(r[0]), float(r[1]), r[2]) for r in reader]
    if decisions:
        fig, ax = plt.subplots(figsize=(6, 4))
        colors = ["tab:green" if v == "favorable" else "tab:red"
                  for _, _, v in decisions]
        ax.bar([d[0] for d in decisions], [d[1] for d in decisions], color=colors)
        ax.axhline(float(baseline_row[1]), color="black", linestyle="--",
                   label="baseline")
        ax.set_xlabel("candidate")
        ax.set_ylabel("validation $R^2$ with candidate")
        ax.legend()
        fig.tight_layout()
        path = outdir / "filter.svg"
        fig.savefig(path, metadata={"Date": None})
        plt.close(fig)
        written.append(path)

    for case in (CASE_BASE, CASE_AUG):
        curves = sorted((outdir / "roc").glob(f"{case}_img*.csv"))
        if not curves:
            continue
        fig, ax = plt.subplots(figsize=(5, 5))
        for roc_path in curves:
            with open(roc_path, newline="", encoding="utf-8") as fh:
                reader = csv.reader(fh)
                next(reader)
                pts = [(float(r[1]), float(r[2])) for r in reader]
            ax.plot([p[0] for p in pts], [p[1] for p in pts],
                    alpha=0.5, linewidth=0.8)
        ax.plot([0, 1], [0, 1], "k--", linewidth=0.8)
        ax.set_xlabel("false positive rate")
        ax.set_ylabel("true positive rate")
        ax.set_title(case.replace("_", " "))
        fig.tight_layout()
        path = outdir / f"roc_{case}.svg"
        fig.savefig(path, metadata={"Date": None})
        plt.close(fig)
        written.append(path)
    return written


STAGES = {
    "prepare": stage_prepare,
    "train-gan": stage_train_gan,
    "sample-gan": stage_sample_gan,
    "pseudolabel": stage_pseudolabel,
    "tune-pls": stage_tune_pls,
    "filter": stage_filter,
    "train-final": stage_train_final,
    "evaluate": stage_evaluate,
}
STAGE_ORDER = list(STAGES) + ["report"]


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _build_parser() -> _Parser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--config", metavar="FILE",
                        help="flat key=value config file")
    shared.add_argument("--force", action="store_true",
                        help="rerun the stage even if its inputs are unchanged")
    shared.add_argument("overrides", nargs="*", metavar="key=value",
                        help="config overrides applied after the file")
    parser = _Parser(prog="skyaug",
                     description="cloud segmentation with GAN-augmented training data")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", metavar="command",
                                parser_class=_Parser)
    helps = {
        "prepare": "build the working dataset and split manifest",
        "train-gan": "train the GAN on the 16-folded training split",
        "sample-gan": "draw candidate images from the trained generator",
        "pseudolabel": "estimate binary maps for the sampled candidates",
        "tune-pls": "sweep the component count on train/validation",
        "filter": "keep candidates that do not hurt validation fit",
        "train-final": "fit the baseline and augmented models",
        "evaluate": "score both models on the test split",
        "report": "check report artifacts and optionally render plots",
        "all": "run every stage in order",
    }
    for name in STAGE_ORDER + ["all"]:
        sp = sub.add_parser(name, parents=[shared], help=helps[name])
        if name in ("report", "all"):
            sp.add_argument("--plots", action="store_true",
                            help="render SVG plots (requires matplotlib)")
    return parser


def main(argv=None) -> int:
    try:
        args = _build_parser().parse_args(argv)
        if args.command is None:
            raise UsageError("missing subcommand (try `skyaug --help`)")
        cfg = load_config(args.config, args.overrides)
        outdir = Path(cfg["outdir"])
        outdir.mkdir(parents=True, exist_ok=True)
        manifest = _load_manifest(outdir / "run_manifest.json")
        manifest["config"] = dict(cfg)

        if args.command == "all":
            for name in STAGES:
                STAGES[name](cfg, outdir, manifest, args.force)
            stage_report(cfg, outdir, manifest, args.force,
                         plots=getattr(args, "plots", False))
        elif args.command == "report":
            stage_report(cfg, outdir, manifest, args.force,
                         plots=getattr(args, "plots", False))
        else:
            STAGES[args.command](cfg, outdir, manifest, args.force)
        return 0
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except StageOrderError as exc:
        print(f"stage-order error: {exc}", file=sys.stderr)
        return 3
    except (dataio.DataError, checkpoint.CheckpointError, FloatingPointError,
            ValueError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
