"""Experiment harness: JSON configuration, (method x noise x seed) sweeps,
run persistence, CSV emission, diagnostics, and aggregate reports.

Config schema (JSON object)::

    {
      "dataset": {"path": "features.fvf"}
                 | {"preset": "isic_like" | "blood_like", ...preset kwargs}
                 | {"synthetic": {...SyntheticSpec fields...}},
      "split":   {"train_frac": 0.7, "val_frac": 0.1, "test_frac": 0.2,
                  "stratified": true, "seed": 0},
      "noise":   [{"kind": "none"} |
                  {"kind": "symmetric"|"asymmetric", "rate": 0.4,
                   "map_name": "isic8" | "map": {"SRC": "DST", ...},
                   } ...],
      "methods": [{"name": "ce"|"linear_probe"|"label_smoothing"|"co_teaching"
                          |"elr"|"cascade"|"dividemix_lite",
                   "label": "optional unique id", ...method params}, ...],
      "train":   {"lr_max": 1e-3, "lr_min": 0.0, "max_epochs": 50,
                  "batch_size": 128, "patience": 7, "class_weighted": true},
      "seeds":   [0, 1, 2, 3, 4],
      "noisy_val": true,
      "out_dir": "out"
    }

Outputs land in ``<out_root>/<config-hash>/<method>/<condition>/seed<k>.json``
plus one ``results.csv`` at the hash root. The environment variable
``NOISECASCADE_OUT`` overrides the output root. Validation labels receive
the same noise process as training labels by default (independent stream);
test labels are never corrupted.
"""

from __future__ import annotations

import concurrent.futures
import csv
import hashlib
import json
import os
import time
from pathlib import Path

import numpy as np

from .data import (FeatureDataset, SplitSpec, SyntheticSpec, blood_like_spec,
                   generate_synthetic, isic_like_spec, load, stratified_split)
from .diagnostics import feature_geometry, loss_overlap, selection_quality
from .methods import (eval_losses, make_estimator, per_sample_ce,
                      select_by_agreement, smallest_k_mask)
from .nncore import predict_logits
from .noise import NoiseSpec, builtin_map, inject, resolve_map
from .rng import child_seed
from .stats import cohens_d_paired, evaluate, paired_t_test

SHARED_TRAIN_KEYS = ("lr_max", "lr_min", "max_epochs", "batch_size",
                     "patience", "class_weighted")
METHOD_NAMES = ("ce", "linear_probe", "label_smoothing", "co_teaching",
                "elr", "cascade", "dividemix_lite")


class ConfigError(ValueError):
    pass


class MissingBaselineError(ValueError):
    pass


def normalize_config(cfg: dict) -> dict:
    """Fill defaults and validate; returns a canonical config dict."""
    cfg = json.loads(json.dumps(cfg))  # deep copy, JSON-typed
    if "dataset" not in cfg:
        raise ConfigError("config needs a 'dataset' entry")
    out = {
        "dataset": cfg["dataset"],
        "split": {"train_frac": 0.7, "val_frac": 0.1, "test_frac": 0.2,
                  "stratified": True, "seed": 0, **cfg.get("split", {})},
        "noise": cfg.get("noise", [{"kind": "none"}]),
        "methods": cfg.get("methods", [{"name": "ce"}]),
        "train": {**cfg.get("train", {})},
        "seeds": cfg.get("seeds", [0, 1, 2, 3, 4]),
        "noisy_val": bool(cfg.get("noisy_val", True)),
        "out_dir": cfg.get("out_dir", "out"),
    }
    if not out["methods"] or not out["seeds"]:
        raise ConfigError("need at least one method and one seed")
    for key in out["train"]:
        if key not in SHARED_TRAIN_KEYS:
            raise ConfigError(f"unknown train key {key!r}; allowed {SHARED_TRAIN_KEYS}")
    labels = []
    for entry in out["methods"]:
        name = entry.get("name")
        if name not in METHOD_NAMES:
            raise ConfigError(f"unknown method name {name!r}")
        entry.setdefault("label", name)
        labels.append(entry["label"])
    if len(set(labels)) != len(labels):
        raise ConfigError(f"method labels must be unique, got {labels}")
    for entry in out["noise"]:
        kind = entry.get("kind")
        if kind not in ("none", "symmetric", "asymmetric"):
            raise ConfigError(f"unknown noise kind {kind!r}")
        if kind != "none":
            rate = entry.get("rate")
            if rate is None or not 0 <= rate < 1:
                raise ConfigError("noise rate must be in [0, 1)")
    return out


def config_hash(cfg: dict) -> str:
    """Order-independent hash of the experiment identity (out_dir excluded)."""
    body = {k: v for k, v in cfg.items() if k != "out_dir"}
    blob = json.dumps(body, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def condition_label(noise_entry: dict) -> str:
    if noise_entry["kind"] == "none" or noise_entry.get("rate", 0) == 0:
        return "clean"
    pct = noise_entry["rate"] * 100
    pct_s = f"{pct:g}".replace(".", "p")
    return ("sym" if noise_entry["kind"] == "symmetric" else "asym") + pct_s


def build_dataset(dataset_cfg: dict) -> FeatureDataset:
    if "path" in dataset_cfg:
        return load(dataset_cfg["path"])
    if "preset" in dataset_cfg:
        kwargs = {k: v for k, v in dataset_cfg.items() if k != "preset"}
        preset = dataset_cfg["preset"]
        if preset == "isic_like":
            return generate_synthetic(isic_like_spec(**kwargs))
        if preset == "blood_like":
            return generate_synthetic(blood_like_spec(**kwargs))
        raise ConfigError(f"unknown preset {preset!r}")
    if "synthetic" in dataset_cfg:
        spec_kwargs = dict(dataset_cfg["synthetic"])
        spec_kwargs["confusion_pairs"] = [tuple(p) for p in
                                          spec_kwargs.get("confusion_pairs", [])]
        return generate_synthetic(SyntheticSpec(**spec_kwargs))
    raise ConfigError("dataset entry needs 'path', 'preset' or 'synthetic'")


def make_noise_spec(noise_entry: dict, class_names: list[str], seed: int,
                    scope: str) -> NoiseSpec | None:
    """Per-run noise spec; independent streams for the train and val scopes."""
    if noise_entry["kind"] == "none" or noise_entry.get("rate", 0) == 0:
        return None
    cmap: dict[int, int] = {}
    if noise_entry["kind"] == "asymmetric":
        if "map_name" in noise_entry:
            names_map = builtin_map(noise_entry["map_name"])
        elif "map" in noise_entry:
            names_map = dict(noise_entry["map"])
        else:
            raise ConfigError("asymmetric noise needs 'map_name' or 'map'")
        cmap = resolve_map(names_map, class_names)
    return NoiseSpec(kind=noise_entry["kind"], rate=noise_entry["rate"],
                     confusion_map=cmap, seed=child_seed(seed, f"noise-{scope}"))


def _cascade_selection(est, x, y, record) -> dict | None:
    """Agreement mask of the linear stage vs a loss mask at the matched rate."""
    f1 = est.cascade_state_.f1
    logits = predict_logits(f1, x)
    agree = select_by_agreement(logits, y)
    n_sel = int(agree.sum())
    if n_sel == 0:
        return None
    losses = per_sample_ce(logits, y)
    loss_mask = smallest_k_mask(losses, n_sel)
    return {
        "agreement": selection_quality(agree, record).to_dict(),
        "loss_matched": selection_quality(loss_mask, record).to_dict(),
    }


def run_cell(cfg: dict, method_idx: int, noise_idx: int, seed: int) -> dict:
    """Train and evaluate one (method, noise, seed) cell. Pure function of
    its arguments; safe to execute in a worker process."""
    ds = build_dataset(cfg["dataset"])
    split_cfg = cfg["split"]
    split = SplitSpec(split_cfg["train_frac"], split_cfg["val_frac"],
                      split_cfg["test_frac"], split_cfg["stratified"],
                      split_cfg["seed"])
    train, val, test = stratified_split(ds, split)
    test_labels_before = test.labels.copy()

    noise_entry = cfg["noise"][noise_idx]
    spec_train = make_noise_spec(noise_entry, ds.class_names, seed, "train")
    if spec_train is not None:
        train, record = inject(train, spec_train)
    else:
        from .noise import NoiseRecord
        record = NoiseRecord(train.labels.copy(), train.labels.copy())
    if cfg["noisy_val"] and spec_train is not None:
        spec_val = make_noise_spec(noise_entry, ds.class_names, seed, "val")
        val, _ = inject(val, spec_val)

    entry = cfg["methods"][method_idx]
    method_params = {k: v for k, v in entry.items() if k not in ("name", "label")}
    if entry["name"] == "co_teaching" and "noise_rate" not in method_params:
        method_params["noise_rate"] = noise_entry.get("rate", 0.0) or 0.0
    train_params = dict(cfg["train"])
    train_params["seed"] = seed
    train_params["num_classes"] = ds.num_classes
    est = make_estimator(entry["name"], train_params, method_params)

    t0 = time.perf_counter()
    est.fit(train.features, train.labels, val.features, val.labels)
    wall = time.perf_counter() - t0

    assert np.array_equal(test.labels, test_labels_before), \
        "test labels must never be touched by noise injection"
    preds = est.predict(test.features)
    report = evaluate(preds, test.labels, ds.num_classes)

    selection = None
    if entry["name"] == "cascade":
        selection = _cascade_selection(est, np.asarray(train.features, np.float64),
                                       train.labels, record)
    return {
        "config_hash": config_hash(cfg),
        "seed": seed,
        "method": {"name": entry["name"], "label": entry["label"],
                   "params": method_params},
        "noise": {**noise_entry, "condition": condition_label(noise_entry)},
        "history": [{"epoch": h.epoch, "lr": h.lr, "train_loss": h.train_loss,
                     "val_balacc": h.val_balacc, **h.extras} for h in est.history_],
        "best_epoch": est.best_epoch_,
        "eval": report.to_dict(),
        "class_names": ds.class_names,
        "selection": selection,
        "wall_time_s": wall,
        "config": cfg,
    }


def _cell_star(args):
    return run_cell(*args)


def resolve_out_root(cfg: dict, out_root: str | None = None) -> Path:
    if out_root:
        return Path(out_root)
    env = os.environ.get("NOISECASCADE_OUT")
    if env:
        return Path(env)
    return Path(cfg.get("out_dir", "out"))


def run_experiment(cfg: dict, jobs: int = 1, out_root: str | None = None) -> Path:
    """Run the full sweep; returns the directory holding records + CSV."""
    cfg = normalize_config(cfg)
    root = resolve_out_root(cfg, out_root) / config_hash(cfg)
    root.mkdir(parents=True, exist_ok=True)
    cells = [(cfg, mi, ni, seed)
             for mi in range(len(cfg["methods"]))
             for ni in range(len(cfg["noise"]))
             for seed in cfg["seeds"]]
    if jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(_cell_star, cells))
    else:
        records = [run_cell(*c) for c in cells]
    for rec in records:
        cell_dir = root / rec["method"]["label"] / rec["noise"]["condition"]
        cell_dir.mkdir(parents=True, exist_ok=True)
        path = cell_dir / f"seed{rec['seed']}.json"
        path.write_text(json.dumps(rec, indent=1, sort_keys=True))
    write_results_csv(records, root / "results.csv")
    return root


def write_results_csv(records: list[dict], path: Path) -> None:
    k = len(records[0]["eval"]["per_class_recall"])
    header = (["method", "noise_kind", "rate", "seed", "balacc", "overall"]
              + [f"recall_{i}" for i in range(k)] + ["wall_time_s"])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for rec in records:
            ev = rec["eval"]
            recalls = ["" if r is None else repr(r) for r in ev["per_class_recall"]]
            w.writerow([rec["method"]["label"], rec["noise"]["kind"],
                        rec["noise"].get("rate", 0.0) or 0.0, rec["seed"],
                        repr(ev["balanced_accuracy"]), repr(ev["overall_accuracy"])]
                       + recalls + [f"{rec['wall_time_s']:.3f}"])


def load_records(records_dir) -> list[dict]:
    paths = sorted(Path(records_dir).glob("*/*/seed*.json"))
    if not paths:
        raise FileNotFoundError(f"no run records under {records_dir}")
    records = []
    for p in paths:
        rec = json.loads(p.read_text())
        if config_hash(rec["config"]) != rec["config_hash"]:
            raise ValueError(f"config hash mismatch in {p}")
        records.append(rec)
    return records


def _stars(p: float) -> str:
    if p < 0.01:
        return "**"
    if p < 0.05:
        return "*"
    return ""


COLLAPSE_RECALL = 0.05
BASELINE_OK_RECALL = 0.25


def generate_report(records_dir, out_dir=None) -> dict:
    """Aggregate per-(method, condition) tables, significance tests against
    the baseline and between all method pairs, and collapse alerts.

    A collapse alert names every (method, condition, class) whose mean recall
    falls below 5% while the plain-CE baseline exceeds 25% on that class.
    """
    records = load_records(records_dir)
    out_dir = Path(out_dir) if out_dir else Path(records_dir)
    class_names = records[0]["class_names"]
    k = len(class_names)

    cells: dict[tuple[str, str], dict[int, dict]] = {}
    method_names = {}
    for rec in records:
        key = (rec["method"]["label"], rec["noise"]["condition"])
        cells.setdefault(key, {})[rec["seed"]] = rec
        method_names[rec["method"]["label"]] = rec["method"]["name"]
    labels = sorted(method_names)
    conditions = sorted({c for _, c in cells})
    baseline = next((lb for lb in labels if method_names[lb] == "ce"), None)
    if len(labels) > 1 and baseline is None:
        raise MissingBaselineError(
            "comparisons need records for the 'ce' baseline method")

    def balaccs(label, cond):
        cell = cells[(label, cond)]
        return [cell[s]["eval"]["balanced_accuracy"] for s in sorted(cell)]

    def mean_recalls(label, cond):
        cell = cells[(label, cond)]
        rows = []
        for s in sorted(cell):
            rows.append([np.nan if r is None else r
                         for r in cell[s]["eval"]["per_class_recall"]])
        return np.nanmean(np.asarray(rows, dtype=float), axis=0)

    summary_rows = []
    for label in labels:
        for cond in conditions:
            if (label, cond) not in cells:
                continue
            vals = balaccs(label, cond)
            overalls = [cells[(label, cond)][s]["eval"]["overall_accuracy"]
                        for s in sorted(cells[(label, cond)])]
            rec_means = mean_recalls(label, cond)
            summary_rows.append(
                [label, cond, len(vals), float(np.mean(vals)),
                 float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0,
                 float(np.mean(overalls))] + [float(r) for r in rec_means])
    with open(out_dir / "report_summary.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "condition", "n_seeds", "balacc_mean", "balacc_std",
                    "overall_mean"] + [f"recall_{n}" for n in class_names])
        w.writerows(summary_rows)

    sig_rows = []
    for cond in conditions:
        present = [lb for lb in labels if (lb, cond) in cells]
        for i, la in enumerate(present):
            for lb_ in present[i + 1:]:
                a_cell, b_cell = cells[(la, cond)], cells[(lb_, cond)]
                shared = sorted(set(a_cell) & set(b_cell))
                if len(shared) < 2:
                    continue
                a = [a_cell[s]["eval"]["balanced_accuracy"] for s in shared]
                b = [b_cell[s]["eval"]["balanced_accuracy"] for s in shared]
                res = paired_t_test(a, b)
                try:
                    d = cohens_d_paired(a, b)
                except ValueError:
                    d = float("nan")
                sig_rows.append([cond, la, lb_, res.t, res.p, res.df, d,
                                 _stars(res.p), int(res.zero_variance)])
    with open(out_dir / "report_significance.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["condition", "method_a", "method_b", "t", "p", "df",
                    "cohens_d", "stars", "zero_variance"])
        w.writerows(sig_rows)

    collapse_rows = []
    if baseline is not None:
        for cond in conditions:
            if (baseline, cond) not in cells:
                continue
            base_rec = mean_recalls(baseline, cond)
            for label in labels:
                if label == baseline or (label, cond) not in cells:
                    continue
                rec = mean_recalls(label, cond)
                for c in range(k):
                    if (np.isfinite(rec[c]) and rec[c] < COLLAPSE_RECALL
                            and np.isfinite(base_rec[c])
                            and base_rec[c] > BASELINE_OK_RECALL):
                        collapse_rows.append([label, cond, class_names[c],
                                              float(rec[c]), float(base_rec[c])])
    with open(out_dir / "report_collapse.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "condition", "class", "recall_mean",
                    "ce_recall_mean"])
        w.writerows(collapse_rows)

    return {
        "summary": summary_rows,
        "significance": sig_rows,
        "collapse_alerts": collapse_rows,
        "baseline": baseline,
        "conditions": conditions,
        "methods": labels,
    }


def diagnose(ds: FeatureDataset, noise_entry: dict, train_params: dict,
             split_cfg: dict | None = None, bins: int = 50, seed: int = 0,
             noisy_val: bool = True) -> dict:
    """Selection-signal diagnostics on one dataset/noise condition.

    Trains the CE baseline head on the corrupted training split, then
    reports: the clean/noisy loss-distribution overlap (refused when no
    labels were flipped), feature geometry under original and corrupted
    labels, and clean-detection quality of the agreement mask next to a
    loss-ranking mask forced to the same cardinality.
    """
    split_cfg = {"train_frac": 0.7, "val_frac": 0.1, "test_frac": 0.2,
                 "stratified": True, "seed": 0, **(split_cfg or {})}
    split = SplitSpec(split_cfg["train_frac"], split_cfg["val_frac"],
                      split_cfg["test_frac"], split_cfg["stratified"],
                      split_cfg["seed"])
    train, val, _ = stratified_split(ds, split)
    spec_train = make_noise_spec(noise_entry, ds.class_names, seed, "train")
    if spec_train is not None:
        corrupted, record = inject(train, spec_train)
    else:
        from .noise import NoiseRecord
        corrupted = train
        record = NoiseRecord(train.labels.copy(), train.labels.copy())
    if noisy_val and spec_train is not None:
        val, _ = inject(val, make_noise_spec(noise_entry, ds.class_names, seed, "val"))

    params = dict(train_params)
    params["seed"] = seed
    params["num_classes"] = ds.num_classes
    est = make_estimator("ce", params, {})
    est.fit(corrupted.features, corrupted.labels, val.features, val.labels)

    x64 = np.asarray(corrupted.features, dtype=np.float64)
    losses = eval_losses(est.model_, x64, corrupted.labels)
    flipped = record.flipped
    overlap = None
    if flipped.any():
        overlap = loss_overlap(losses[~flipped], losses[flipped], bins=bins).to_dict()

    intra0, inter0 = feature_geometry(train.features, record.original)
    intra1, inter1 = feature_geometry(train.features, record.observed)

    logits = predict_logits(est.model_, x64)
    agree = select_by_agreement(logits, corrupted.labels)
    selection = None
    if agree.sum() > 0:
        loss_mask = smallest_k_mask(losses, int(agree.sum()))
        selection = {
            "agreement": selection_quality(agree, record).to_dict(),
            "loss_matched": selection_quality(loss_mask, record).to_dict(),
        }
    return {
        "noise": {**noise_entry, "condition": condition_label(noise_entry)},
        "seed": seed,
        "n_train": train.n,
        "flipped_fraction": float(flipped.mean()),
        "overlap": overlap,
        "geometry": {
            "original_labels": {"intra": intra0, "inter": inter0},
            "observed_labels": {"intra": intra1, "inter": inter1},
        },
        "selection": selection,
    }
