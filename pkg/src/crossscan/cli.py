"""Command-line interface.

Exit codes: 0 success, 2 configuration error, 3 numeric failure during
training.
"""

import argparse
import json
import os
import sys

import numpy as np

from . import experiments
from .errors import ConfigError, CrossScanError, NumericError
from .evaluate import embed_features, train_linear
from .network import (NetConfig, load_model, save_model, train_siamese)
from .phantom import (PROTOCOL_PRESETS, ScanImage, TissueId, generate_phantom,
                      get_protocol, load_protocols, read_label_map,
                      read_scan_intensities, simulate_scan, write_label_map,
                      write_scan)
from .sampling import build_pairs, extract_patches, write_pairs_csv
from .seeds import derive


def _add_common(parser):
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--seed", type=int, default=None, help="master seed")
    parser.add_argument("--out", default=".", help="output directory")
    parser.add_argument("--jobs", type=int, default=1,
                        help="parallel workers for repeats/sweeps")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="crossscan",
        description="Scanner-invariant patch embeddings: simulation, "
                    "training and evaluation")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a phantom and simulate a scan")
    _add_common(p)
    p.add_argument("--subject-seed", type=int, default=0)
    p.add_argument("--size", type=int, default=256)
    p.add_argument("--protocol", default="Brainweb1.5T")
    p.add_argument("--protocols-file", help="JSON protocol presets")
    p.add_argument("--scanner-id", type=int, default=0, choices=(0, 1))
    p.add_argument("--name", default="subject")

    p = sub.add_parser("patches", help="extract patch centers from a scan")
    _add_common(p)
    p.add_argument("--scan", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--scanner-id", type=int, default=0, choices=(0, 1))
    p.add_argument("--per-tissue", type=int, default=50)

    p = sub.add_parser("pairs", help="build a pair dataset from two scans")
    _add_common(p)
    p.add_argument("--source-scan", required=True)
    p.add_argument("--source-labels", required=True)
    p.add_argument("--target-scan", required=True)
    p.add_argument("--target-labels", required=True)
    p.add_argument("--per-tissue", type=int, default=10)
    p.add_argument("--max-pairs", type=int, default=18000)

    p = sub.add_parser("train", help="train the embedding network on two scans")
    _add_common(p)
    p.add_argument("--source-scan", required=True)
    p.add_argument("--source-labels", required=True)
    p.add_argument("--target-scan", required=True)
    p.add_argument("--target-labels", required=True)
    p.add_argument("--source-per-tissue", type=int, default=100)
    p.add_argument("--target-per-tissue", type=int, default=1)
    p.add_argument("--max-pairs", type=int, default=4000)
    p.add_argument("--epochs", type=int, default=60)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--margin", type=float, default=1.0)
    p.add_argument("--model-out", default="model.bin")

    p = sub.add_parser("embed", help="map patches through a trained model")
    _add_common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--scan", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--scanner-id", type=int, default=1, choices=(0, 1))
    p.add_argument("--per-tissue", type=int, default=50)

    p = sub.add_parser("segment", help="segment a scan with a trained model")
    _add_common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--scan", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--scanner-id", type=int, default=1, choices=(0, 1))
    p.add_argument("--train-scan", required=True,
                   help="scan supplying labeled patches for the linear head")
    p.add_argument("--train-labels", required=True)
    p.add_argument("--train-scanner-id", type=int, default=0, choices=(0, 1))
    p.add_argument("--train-per-tissue", type=int, default=100)
    p.add_argument("--name", default="segmentation")

    for exp_id in experiments.EXPERIMENT_IDS:
        p = sub.add_parser(exp_id, help=f"run {exp_id}")
        _add_common(p)
        p.add_argument("--repeats", type=int, default=None)
        p.add_argument("--epochs", type=int, default=None)
        p.add_argument("--max-pairs", type=int, default=None)

    p = sub.add_parser("report", help="summarize result CSVs in --out")
    _add_common(p)
    return parser


def _load_scan(scan_path, labels_path, scanner_id, protocol=None):
    label_map = read_label_map(labels_path)
    data = read_scan_intensities(scan_path)
    if data.shape != label_map.labels.shape:
        raise ConfigError(
            f"scan {scan_path} and labels {labels_path} have different shapes")
    return ScanImage(data, protocol, label_map, scanner_id)


def _experiment_config(args):
    overrides = {"repeats": getattr(args, "repeats", None),
                 "epochs": getattr(args, "epochs", None),
                 "max_pairs": getattr(args, "max_pairs", None),
                 "master_seed": args.seed}
    if args.config:
        return experiments.config_from_json(args.config, args.command,
                                            overrides)
    return experiments.config_from_dict({}, args.command, overrides)


def _cmd_simulate(args):
    protocols = dict(PROTOCOL_PRESETS)
    if args.protocols_file:
        protocols.update(load_protocols(args.protocols_file))
    proto = get_protocol(args.protocol, protocols)
    label_map = generate_phantom(args.subject_seed, args.size, args.size)
    noise_seed = derive(args.seed or 0, "noise", args.subject_seed, proto.name)
    scan = simulate_scan(label_map, proto, args.scanner_id, noise_seed)
    os.makedirs(args.out, exist_ok=True)
    write_label_map(label_map, os.path.join(args.out, f"{args.name}.lab"))
    write_scan(scan, os.path.join(args.out, f"{args.name}.scan"))
    print(f"wrote {args.name}.lab and {args.name}.scan to {args.out}")
    return 0


def _cmd_patches(args):
    scan = _load_scan(args.scan, args.labels, args.scanner_id)
    patches = extract_patches(scan, args.per_tissue,
                              derive(args.seed or 0, "patches"))
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "patches.csv")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("x,y,tissue,scanner_id\n")
        for p in patches:
            fh.write(f"{p.center[0]},{p.center[1]},"
                     f"{TissueId(p.tissue).name},{p.scanner_id}\n")
    print(f"wrote {len(patches)} patch centers to {path}")
    return 0


def _build_dataset(args, source_per_tissue, target_per_tissue, max_pairs):
    seed = args.seed or 0
    source = _load_scan(args.source_scan, args.source_labels, 0)
    target = _load_scan(args.target_scan, args.target_labels, 1)
    src_patches = extract_patches(source, source_per_tissue,
                                  derive(seed, "patches", "source"))
    tgt_patches = extract_patches(target, target_per_tissue,
                                  derive(seed, "patches", "target"))
    return build_pairs(src_patches, tgt_patches, max_pairs,
                       derive(seed, "pairs"))


def _cmd_pairs(args):
    dataset = _build_dataset(args, args.per_tissue, args.per_tissue,
                             args.max_pairs)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "pairs.csv")
    write_pairs_csv(dataset, path)
    print(f"wrote {len(dataset)} pairs to {path}")
    return 0


def _cmd_train(args):
    dataset = _build_dataset(args, args.source_per_tissue,
                             args.target_per_tissue, args.max_pairs)
    config = NetConfig(margin=args.margin)
    os.makedirs(args.out, exist_ok=True)
    log_path = os.path.join(args.out, "train_loss.csv")
    model, history = train_siamese(dataset, config, args.epochs,
                                   args.batch_size, args.seed or 0,
                                   log_path=log_path)
    model_path = os.path.join(args.out, args.model_out)
    save_model(model, model_path)
    print(f"trained {args.epochs} epochs on {len(dataset)} pairs; "
          f"final mean loss {history[-1]:.4f}; model at {model_path}")
    return 0


def _cmd_embed(args):
    model = load_model(args.model)
    scan = _load_scan(args.scan, args.labels, args.scanner_id)
    patches = extract_patches(scan, args.per_tissue,
                              derive(args.seed or 0, "patches"))
    feats = embed_features(model, patches)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "features.csv")
    with open(path, "w", encoding="utf-8") as fh:
        dims = ",".join(f"e{i}" for i in range(feats.x.shape[1]))
        fh.write(f"{dims},tissue\n")
        for row, label in zip(feats.x, feats.y):
            cells = ",".join(repr(float(v)) for v in row)
            fh.write(f"{cells},{TissueId(int(label)).name}\n")
    print(f"wrote {len(feats)} feature rows to {path}")
    return 0


def _cmd_segment(args):
    model = load_model(args.model)
    scan = _load_scan(args.scan, args.labels, args.scanner_id)
    train_scan = _load_scan(args.train_scan, args.train_labels,
                            args.train_scanner_id)
    train_patches = extract_patches(train_scan, args.train_per_tissue,
                                    derive(args.seed or 0, "patches", "head"))
    linear = train_linear(embed_features(model, train_patches), "logistic",
                          cv_seed=derive(args.seed or 0, "cv"))
    labels = experiments.segment_image(model, linear, scan)
    os.makedirs(args.out, exist_ok=True)
    base = os.path.join(args.out, args.name)
    experiments.write_segmentation(labels, scan.label_map.subject_seed, base)
    mask = labels != TissueId.BKG
    agree = (labels == scan.label_map.labels) & mask
    err = 1.0 - agree.sum() / max(mask.sum(), 1)
    print(f"wrote {base}.lab and {base}.ppm "
          f"(in-mask disagreement vs ground truth: {err:.3f})")
    return 0


def _cmd_experiment(args):
    cfg = _experiment_config(args)
    os.makedirs(args.out, exist_ok=True)
    runner = {"exp1": experiments.run_exp1, "exp2": experiments.run_exp2,
              "exp3": experiments.run_exp3, "exp4": experiments.run_exp4}
    records = runner[cfg.experiment_id](cfg, args.out, jobs=args.jobs)
    print(f"{cfg.experiment_id}: {len(records)} runs, results in {args.out}")
    return 0


def _cmd_report(args):
    found = False
    for exp_id in experiments.EXPERIMENT_IDS:
        for suffix in ("summary", "curve", "results"):
            path = os.path.join(args.out, f"{exp_id}_{suffix}.csv")
            if os.path.exists(path):
                found = True
                print(f"== {exp_id} ({suffix}) ==")
                with open(path, "r", encoding="utf-8") as fh:
                    text = fh.read().rstrip("\n")
                print(_tabulate(text))
                print()
                break
    if not found:
        print(f"no result CSVs found in {args.out}")
    return 0


def _tabulate(csv_text):
    lines = csv_text.splitlines()
    rows = [line.split(",") for line in lines if not line.startswith("#")]
    footers = [line for line in lines if line.startswith("#")]
    widths = [max(len(_shorten(row[i])) for row in rows if i < len(row))
              for i in range(max(len(r) for r in rows))]
    out = []
    for row in rows:
        out.append("  ".join(_shorten(cell).ljust(widths[i])
                             for i, cell in enumerate(row)))
    out.extend(footers)
    return "\n".join(out)


def _shorten(cell):
    try:
        v = float(cell)
    except ValueError:
        return cell
    if cell.isdigit() or (cell.startswith("-") and cell[1:].isdigit()):
        return cell
    return f"{v:.4g}"


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "simulate": _cmd_simulate, "patches": _cmd_patches,
        "pairs": _cmd_pairs, "train": _cmd_train, "embed": _cmd_embed,
        "segment": _cmd_segment, "report": _cmd_report,
        "exp1": _cmd_experiment, "exp2": _cmd_experiment,
        "exp3": _cmd_experiment, "exp4": _cmd_experiment,
    }
    try:
        return handlers[args.command](args)
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, FileNotFoundError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except CrossScanError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
