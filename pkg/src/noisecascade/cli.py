"""Command-line interface: synth, inject, run, diagnose, report."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import data as data_mod
from .data import SyntheticSpec, generate_synthetic, load, save
from .harness import (build_dataset, diagnose, generate_report, make_noise_spec,
                      normalize_config, run_experiment)
from .noise import inject


def _parse_counts(text: str) -> list[int]:
    return [int(tok) for tok in text.split(",") if tok]


def _parse_pairs(text: str, names: list[str]) -> list[tuple[int, int]]:
    pairs = []
    for tok in text.split(","):
        if not tok:
            continue
        a, b = tok.split(":")
        pairs.append((names.index(a) if a in names else int(a),
                      names.index(b) if b in names else int(b)))
    return pairs


def cmd_synth(args) -> int:
    if args.preset:
        if args.preset == "isic-like":
            spec = data_mod.isic_like_spec(seed=args.seed)
        elif args.preset == "blood-like":
            spec = data_mod.blood_like_spec(seed=args.seed)
        else:
            raise SystemExit(f"unknown preset {args.preset}")
    else:
        names = args.names.split(",") if args.names else [f"class{i}" for i in range(args.k)]
        pairs = _parse_pairs(args.confusion_pairs, names) if args.confusion_pairs else []
        spec = SyntheticSpec(
            num_classes=args.k, dim=args.d, class_counts=_parse_counts(args.counts),
            centroid_scale=args.centroid_scale, sigma=args.sigma,
            confusion_pairs=pairs, proximity_factor=args.proximity,
            class_names=names, seed=args.seed,
        )
    ds = generate_synthetic(spec)
    save(ds, args.out)
    counts = ds.class_counts()
    print(f"wrote {args.out}: N={ds.n} d={ds.dim} K={ds.num_classes}")
    for name, cnt in zip(ds.class_names, counts):
        print(f"  {name}: {cnt}")
    return 0


def cmd_inject(args) -> int:
    ds = load(args.input)
    entry = {"kind": args.kind, "rate": args.rate}
    if args.map:
        entry["map_name"] = args.map
    if args.map_file:
        entry["map"] = json.loads(Path(args.map_file).read_text())
    spec = make_noise_spec(entry, ds.class_names, args.seed, "train")
    if spec is None:
        corrupted, record = ds, None
        save(ds, args.out)
        print(f"rate 0: copied dataset unchanged to {args.out}")
        return 0
    corrupted, record = inject(ds, spec)
    save(corrupted, args.out)
    n_flip = int(record.flipped.sum())
    print(f"wrote {args.out}: flipped {n_flip}/{ds.n} labels "
          f"({args.kind}, rate={args.rate})")
    if args.record:
        Path(args.record).write_text(json.dumps(record.to_dict()))
        print(f"noise record -> {args.record}")
    return 0


def cmd_run(args) -> int:
    cfg = json.loads(Path(args.config).read_text())
    if args.seeds:
        cfg["seeds"] = [int(s) for s in args.seeds.split(",")]
    if args.methods:
        cfg["methods"] = [{"name": m} for m in args.methods.split(",")]
    root = run_experiment(cfg, jobs=args.jobs, out_root=args.out_dir)
    n = sum(1 for _ in root.glob("*/*/seed*.json"))
    print(f"completed {n} runs -> {root}")
    print(f"results: {root / 'results.csv'}")
    return 0


def cmd_diagnose(args) -> int:
    ds = build_dataset({"path": args.data} if args.data else {"preset": args.preset})
    entry = {"kind": args.kind, "rate": args.rate}
    if args.map:
        entry["map_name"] = args.map
    if args.map_file:
        entry["map"] = json.loads(Path(args.map_file).read_text())
    train_params = {"max_epochs": args.max_epochs, "batch_size": args.batch_size}
    report = diagnose(ds, entry, train_params, bins=args.bins, seed=args.seed,
                      noisy_val=not args.clean_val)
    text = json.dumps(report, indent=2)
    if args.out:
        Path(args.out).write_text(text)
        print(f"diagnostics -> {args.out}")
    else:
        print(text)
    return 0


def cmd_report(args) -> int:
    result = generate_report(args.records, out_dir=args.out_dir)
    print(f"methods: {', '.join(result['methods'])}")
    print(f"conditions: {', '.join(result['conditions'])}")
    print(f"{'method':<18} {'condition':<10} {'balacc':>8} {'+-':>7}")
    for row in result["summary"]:
        print(f"{row[0]:<18} {row[1]:<10} {row[3]:>8.4f} {row[4]:>7.4f}")
    stars = [r for r in result["significance"] if r[7]]
    if stars:
        print("significant pairs (*p<0.05, **p<0.01):")
        for row in stars:
            print(f"  [{row[0]}] {row[1]} vs {row[2]}: t={row[3]:.3f} "
                  f"p={row[4]:.4f} d={row[6]:.2f} {row[7]}")
    if result["collapse_alerts"]:
        print("COLLAPSE ALERTS (recall < 5% where baseline > 25%):")
        for row in result["collapse_alerts"]:
            print(f"  {row[0]} @ {row[1]}: class {row[2]} "
                  f"recall={row[3]:.3f} (baseline {row[4]:.3f})")
    else:
        print("no collapse alerts")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="noisecascade",
        description="Noise-robust classifier-head training on frozen features")
    sub = p.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("synth", help="generate a synthetic feature file")
    ps.add_argument("--out", required=True)
    ps.add_argument("--preset", choices=["isic-like", "blood-like"])
    ps.add_argument("--k", type=int, default=8)
    ps.add_argument("--d", type=int, default=64)
    ps.add_argument("--counts", default="")
    ps.add_argument("--names", default="")
    ps.add_argument("--centroid-scale", type=float, default=10.0)
    ps.add_argument("--sigma", type=float, default=2.2)
    ps.add_argument("--confusion-pairs", default="",
                    help="comma list of SRC:DST names or indices")
    ps.add_argument("--proximity", type=float, default=0.25)
    ps.add_argument("--seed", type=int, default=0)
    ps.set_defaults(fn=cmd_synth)

    pi = sub.add_parser("inject", help="apply label noise to a feature file")
    pi.add_argument("--in", dest="input", required=True)
    pi.add_argument("--out", required=True)
    pi.add_argument("--kind", choices=["symmetric", "asymmetric"], required=True)
    pi.add_argument("--rate", type=float, required=True)
    pi.add_argument("--map", help="builtin map name (isic8, bloodmnist8)")
    pi.add_argument("--map-file", help="JSON file of SRC->DST class names")
    pi.add_argument("--seed", type=int, default=0)
    pi.add_argument("--record", help="write the per-sample noise record here")
    pi.set_defaults(fn=cmd_inject)

    pr = sub.add_parser("run", help="run a sweep from a JSON config")
    pr.add_argument("--config", required=True)
    pr.add_argument("--out-dir", help="output root (overrides NOISECASCADE_OUT)")
    pr.add_argument("--jobs", type=int, default=1)
    pr.add_argument("--seeds", help="comma list overriding config seeds")
    pr.add_argument("--methods", help="comma list of method names overriding config")
    pr.set_defaults(fn=cmd_run)

    pd = sub.add_parser("diagnose", help="loss overlap, geometry and selection quality")
    src = pd.add_mutually_exclusive_group(required=True)
    src.add_argument("--data", help="feature file")
    src.add_argument("--preset", choices=["isic_like", "blood_like"])
    pd.add_argument("--kind", choices=["none", "symmetric", "asymmetric"],
                    default="symmetric")
    pd.add_argument("--rate", type=float, default=0.4)
    pd.add_argument("--map", help="builtin map name")
    pd.add_argument("--map-file")
    pd.add_argument("--bins", type=int, default=50)
    pd.add_argument("--seed", type=int, default=0)
    pd.add_argument("--max-epochs", type=int, default=50)
    pd.add_argument("--batch-size", type=int, default=128)
    pd.add_argument("--clean-val", action="store_true",
                    help="keep validation labels clean (default: same noise as train)")
    pd.add_argument("--out", help="write the JSON report here instead of stdout")
    pd.set_defaults(fn=cmd_diagnose)

    pp = sub.add_parser("report", help="aggregate tables from run records")
    pp.add_argument("--records", required=True,
                    help="the out/<config-hash> directory")
    pp.add_argument("--out-dir", help="where to write report CSVs (default: records dir)")
    pp.set_defaults(fn=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
