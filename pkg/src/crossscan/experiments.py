"""Experiment harness: wires phantoms, sampling, the Siamese network and the
linear evaluators into four seeded, repeatable experiments.

All randomness is derived from one master seed (see ``seeds``), so a given
configuration reproduces its result CSVs byte for byte.  Wall-clock timings
go to separate files because they are the one thing that cannot be
deterministic.
"""

import dataclasses
import hashlib
import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import svgplot
from .errors import ConfigError
from .evaluate import (FeatureSet, embed_features, predict, proxy_a_distance,
                       raw_features, tissue_error, train_linear)
from .network import (NetConfig, embed_batch, init_model, param_count,
                      predict_classes, train_classifier, train_siamese,
                      _forward)
from .phantom import (CLASSIFICATION_TISSUES, TissueId, generate_phantom,
                      get_protocol, simulate_scan, write_label_map)
from .sampling import HALF, Patch, build_pairs, extract_patches
from .seeds import derive

EXPERIMENT_IDS = ("exp1", "exp2", "exp3", "exp4")

DEFAULT_SWEEP = ((2, 4, 4), (4, 8, 4), (8, 16, 8),
                 (16, 32, 16), (32, 64, 32), (64, 128, 64))

REFERENCE_FOOTER = (
    "# reference values for comparison: manual arm mrai=0.223 source=0.631 "
    "target=0.613 pad_raw=1.88 pad_rep=0.26; random arm mrai=0.250 "
    "source=0.667 target=0.610 pad_raw=1.91 pad_rep=0.41"
)


@dataclass(frozen=True)
class ExperimentConfig:
    experiment_id: str = "exp1"
    source_protocol: str = "Brainweb1.5T"
    target_protocol: str = "Brainweb3.0T"
    n_source_subjects: int = 4
    n_target_train_subjects: int = 1
    n_test_subjects: int = 4
    source_patches_per_tissue: int = 100
    target_patches_per_tissue: tuple = (1,)
    test_patches_per_tissue: int = 50
    repeats: int = 10
    epochs: int = 48
    batch_size: int = 64
    max_pairs: int = 3072
    image_size: int = 256
    margins: tuple = (0.0, 1.0, 10.0)
    sweep: tuple = DEFAULT_SWEEP
    net: NetConfig = field(default_factory=NetConfig)
    master_seed: int = 1234

    def __post_init__(self):
        if self.experiment_id not in EXPERIMENT_IDS:
            raise ConfigError(f"unknown experiment {self.experiment_id!r}")
        if self.repeats < 1:
            raise ConfigError("repeats must be >= 1")
        counts = (self.n_source_subjects, self.n_target_train_subjects,
                  self.n_test_subjects, self.source_patches_per_tissue,
                  self.test_patches_per_tissue, self.batch_size,
                  self.max_pairs, self.epochs)
        if min(counts) < 1:
            raise ConfigError("all counts must be >= 1")
        if any(c < 1 for c in self.target_patches_per_tissue):
            raise ConfigError("target patch counts must be >= 1")
        # train/test hygiene: the derived subject seeds must be disjoint
        seeds = subject_seeds(self)
        pool = [s for role in seeds.values() for s in role]
        if len(set(pool)) != len(pool):
            raise ConfigError("subject seed collision between roles")

    def canonical_text(self):
        data = dataclasses.asdict(self)
        data["net"] = dataclasses.asdict(self.net)
        return json.dumps(data, sort_keys=True, default=list)

    def config_hash(self):
        return hashlib.sha256(self.canonical_text().encode()).hexdigest()[:16]


def default_config(experiment_id, master_seed=1234):
    """Per-experiment defaults; exp3 keeps the published training budget."""
    if experiment_id == "exp2":
        return ExperimentConfig(
            experiment_id="exp2", master_seed=master_seed,
            target_patches_per_tissue=(1, 2, 5, 10, 20, 50, 100))
    if experiment_id == "exp3":
        return ExperimentConfig(
            experiment_id="exp3", master_seed=master_seed,
            target_patches_per_tissue=(10,), repeats=20,
            epochs=320, max_pairs=18000)
    if experiment_id == "exp4":
        return ExperimentConfig(
            experiment_id="exp4", master_seed=master_seed, repeats=1,
            epochs=60, batch_size=64, max_pairs=2400)
    return ExperimentConfig(experiment_id="exp1", master_seed=master_seed)


def config_from_json(path, experiment_id=None, overrides=None):
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid config: {exc}") from exc
    return config_from_dict(data, experiment_id, overrides)


def config_from_dict(data, experiment_id=None, overrides=None):
    data = dict(data)
    if overrides:
        data.update({k: v for k, v in overrides.items() if v is not None})
    if experiment_id is not None:
        data["experiment_id"] = experiment_id
    net_data = data.pop("net", {})
    base = default_config(data.get("experiment_id", "exp1"))
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    merged = dataclasses.asdict(base)
    merged.pop("net")
    merged.update(data)
    for key in ("target_patches_per_tissue", "margins"):
        if key in merged:
            merged[key] = tuple(merged[key])
    if "sweep" in merged:
        merged["sweep"] = tuple(tuple(w) for w in merged["sweep"])
    try:
        net = dataclasses.replace(base.net, **net_data)
        return ExperimentConfig(net=net, **merged)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc


@dataclass
class EvalReport:
    proxy_a_raw: float
    proxy_a_rep: float
    tissue_error_source: float
    tissue_error_mrai: float
    tissue_error_target: float
    n_target_patches: int
    repeat_index: int


@dataclass
class RunRecord:
    config_hash: str
    repeat_index: int
    report: EvalReport
    loss_curve: list
    wall_ms: float
    arm: str = "random"
    seeds: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# Environment: phantoms and scans per subject role

def subject_seeds(cfg):
    m = cfg.master_seed
    return {
        "source": [derive(m, "subj", "source", i)
                   for i in range(cfg.n_source_subjects)],
        "target-train": [derive(m, "subj", "target-train", i)
                         for i in range(cfg.n_target_train_subjects)],
        "test-target": [derive(m, "subj", "test-target", i)
                        for i in range(cfg.n_test_subjects)],
        "test-source": [derive(m, "subj", "test-source", i)
                        for i in range(cfg.n_test_subjects)],
    }


@dataclass
class Environment:
    source_scans: list
    target_train_scans: list
    test_target_scans: list
    test_source_scans: list


def build_environment(cfg):
    """Simulate every scan the experiment needs; fixed across repeats."""
    seeds = subject_seeds(cfg)
    src_proto = get_protocol(cfg.source_protocol)
    tgt_proto = get_protocol(cfg.target_protocol)

    def scans(role, protocol, scanner_id):
        out = []
        for i, sseed in enumerate(seeds[role]):
            label_map = generate_phantom(sseed, cfg.image_size, cfg.image_size)
            noise = derive(cfg.master_seed, "noise", role, i, protocol.name)
            out.append(simulate_scan(label_map, protocol, scanner_id, noise))
        return out

    return Environment(
        source_scans=scans("source", src_proto, 0),
        target_train_scans=scans("target-train", tgt_proto, 1),
        test_target_scans=scans("test-target", tgt_proto, 1),
        test_source_scans=scans("test-source", src_proto, 0),
    )


# ---------------------------------------------------------------------------
# Manual patch selection: deepest interior voxel per tissue

def _interior_distance(mask):
    """Exact city-block distance to the nearest voxel outside ``mask``."""
    h, w = mask.shape
    big = float(h + w + 2)
    d = np.where(mask, big, 0.0)
    cols = np.arange(w, dtype=float)

    def sweep_row(row):
        row = np.minimum.accumulate(row - cols) + cols
        rev = row[::-1]
        return (np.minimum.accumulate(rev - cols) + cols)[::-1]

    for i in range(h):
        if i > 0:
            d[i] = np.minimum(d[i], d[i - 1] + 1.0)
        d[i] = sweep_row(d[i])
    for i in range(h - 2, -1, -1):
        d[i] = np.minimum(d[i], d[i + 1] + 1.0)
        d[i] = sweep_row(d[i])
    return d


def manual_centers_for(label_map):
    """One purposively chosen center per tissue: the voxel deepest inside
    its tissue region, restricted to where a full window fits."""
    labels = label_map.labels
    h, w = labels.shape
    centers = []
    for tissue in CLASSIFICATION_TISSUES:
        dist = _interior_distance(labels == tissue)
        box = dist[HALF:h - HALF, HALF:w - HALF]
        row, col = np.unravel_index(int(np.argmax(box)), box.shape)
        centers.append((col + HALF, row + HALF, tissue))
    return centers


# ---------------------------------------------------------------------------
# One experimental condition (shared by exp1, exp2 and exp3)

TISSUE_TO_CLASS = {t: i for i, t in enumerate(CLASSIFICATION_TISSUES)}
CLASS_TO_TISSUE = dict(enumerate(CLASSIFICATION_TISSUES))


def _classifier_error(model, patches):
    pred = predict_classes(model, patches)
    truth = np.array([TISSUE_TO_CLASS[TissueId(p.tissue)] for p in patches])
    return float(np.mean(pred != truth))


def _class_labels(patches):
    return [TISSUE_TO_CLASS[TissueId(p.tissue)] for p in patches]


def run_condition(cfg, env, arm, n_target, repeat, net=None,
                  with_baselines=True, loss_log_dir=None, tag=""):
    """Train the embedding plus (optionally) both baseline CNNs for one
    (arm, target count, repeat) cell and evaluate everything."""
    started = time.perf_counter()
    m = cfg.master_seed
    net = net or cfg.net
    key = (arm, n_target, repeat)

    target_train = []
    for i, scan in enumerate(env.target_train_scans):
        if arm == "manual":
            centers = manual_centers_for(scan.label_map)
            target_train += extract_patches(scan, 1, 0, manual_centers=centers)
        else:
            target_train += extract_patches(
                scan, n_target, derive(m, "patch", "target-train", i, *key))
    source_patches = []
    for i, scan in enumerate(env.source_scans):
        source_patches += extract_patches(
            scan, cfg.source_patches_per_tissue,
            derive(m, "patch", "source", i, *key))

    dataset = build_pairs(source_patches, target_train, cfg.max_pairs,
                          derive(m, "pairs", *key))
    seed_train = derive(m, "train", "mrai", *key)
    log = (f"{loss_log_dir}/loss_{cfg.experiment_id}_{tag}mrai_{arm}_"
           f"n{n_target}_r{repeat}.csv" if loss_log_dir else None)
    model, history = train_siamese(dataset, net, cfg.epochs, cfg.batch_size,
                                   seed_train, log_path=log)

    test_patches = []
    for i, scan in enumerate(env.test_target_scans):
        test_patches += extract_patches(
            scan, cfg.test_patches_per_tissue,
            derive(m, "patch", "test-target", i, *key))
    pad_src_patches = []
    for i, scan in enumerate(env.test_source_scans):
        pad_src_patches += extract_patches(
            scan, cfg.test_patches_per_tissue,
            derive(m, "patch", "pad-source", i, *key))
    pad_tgt_patches = []
    for i, scan in enumerate(env.test_target_scans):
        pad_tgt_patches += extract_patches(
            scan, cfg.test_patches_per_tissue,
            derive(m, "patch", "pad-target", i, *key))

    train_pool = source_patches + target_train
    linear = train_linear(embed_features(model, train_pool), "logistic",
                          folds=5, cv_seed=derive(m, "cv", "tissue", *key))
    err_mrai = tissue_error(linear, embed_features(model, test_patches))

    # domain separability in the network's input space (pixels + scanner bit)
    # and in the learned output space
    pad_raw = proxy_a_distance(
        raw_features(pad_src_patches).x, raw_features(pad_tgt_patches).x,
        folds=5, seed=derive(m, "cv", "pad-raw", *key))
    pad_rep = proxy_a_distance(
        embed_batch(model, pad_src_patches),
        embed_batch(model, pad_tgt_patches),
        folds=5, seed=derive(m, "cv", "pad-rep", *key))

    err_source = math.nan
    err_target = math.nan
    if with_baselines:
        src_model, _ = train_classifier(
            train_pool, _class_labels(train_pool), net, cfg.epochs,
            cfg.batch_size, derive(m, "train", "source", *key),
            n_classes=len(CLASSIFICATION_TISSUES))
        err_source = _classifier_error(src_model, test_patches)
        tgt_model, _ = train_classifier(
            target_train, _class_labels(target_train), net, cfg.epochs,
            cfg.batch_size, derive(m, "train", "target", *key),
            n_classes=len(CLASSIFICATION_TISSUES))
        err_target = _classifier_error(tgt_model, test_patches)

    report = EvalReport(pad_raw, pad_rep, err_source, err_mrai, err_target,
                        n_target, repeat)
    record = RunRecord(
        cfg.config_hash(), repeat, report, history,
        (time.perf_counter() - started) * 1000.0, arm,
        seeds={"pairs": derive(m, "pairs", *key), "train": seed_train,
               "cv_tissue": derive(m, "cv", "tissue", *key),
               "cv_pad_raw": derive(m, "cv", "pad-raw", *key),
               "cv_pad_rep": derive(m, "cv", "pad-rep", *key)},
        extras={"n_pairs": len(dataset), "model": model})
    return record


# ---------------------------------------------------------------------------
# CSV helpers

RESULT_COLUMNS = [
    "experiment", "arm", "n_target_per_tissue", "repeat",
    "err_source", "err_mrai", "err_target", "pad_raw", "pad_rep",
    "n_pairs", "seed_pairs", "seed_train", "seed_cv_tissue",
    "seed_cv_pad_raw", "seed_cv_pad_rep", "config_hash",
]


def _fmt_cell(v):
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def write_rows(path, header, rows, footer=None):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt_cell(v) for v in row) + "\n")
        if footer:
            fh.write(footer + "\n")


def _result_row(cfg, record):
    r = record.report
    return [cfg.experiment_id, record.arm, r.n_target_patches, r.repeat_index,
            r.tissue_error_source, r.tissue_error_mrai, r.tissue_error_target,
            r.proxy_a_raw, r.proxy_a_rep, record.extras.get("n_pairs", 0),
            record.seeds.get("pairs", 0), record.seeds.get("train", 0),
            record.seeds.get("cv_tissue", 0), record.seeds.get("cv_pad_raw", 0),
            record.seeds.get("cv_pad_rep", 0), record.config_hash]


def write_timing(path, records, keys):
    rows = [[*(getattr(rec, k, rec.extras.get(k, "")) for k in keys),
             f"{rec.wall_ms:.1f}"] for rec in records]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join([*keys, "wall_ms"]) + "\n")
        for row in rows:
            fh.write(",".join(str(v) for v in row) + "\n")


def mean_sem(values):
    arr = np.asarray([v for v in values if not math.isnan(v)], dtype=float)
    if len(arr) == 0:
        return math.nan, math.nan
    sem = float(arr.std(ddof=1) / np.sqrt(len(arr))) if len(arr) > 1 else 0.0
    return float(arr.mean()), sem


# ---------------------------------------------------------------------------
# Experiment 1: one (or few) target patches, manual vs random selection

def run_exp1(cfg, out_dir, jobs=1):
    n_target = cfg.target_patches_per_tissue[0]
    tasks = [(arm, n_target, r)
             for arm in ("manual", "random") for r in range(cfg.repeats)]
    records = _run_tasks(cfg, tasks, jobs, loss_log_dir=out_dir)

    rows = [_result_row(cfg, rec) for rec in records]
    write_rows(f"{out_dir}/exp1_results.csv", RESULT_COLUMNS, rows)

    summary_rows = []
    for arm in ("manual", "random"):
        sub = [rec for rec in records if rec.arm == arm]
        pad_raw, _ = mean_sem([rec.report.proxy_a_raw for rec in sub])
        pad_rep, _ = mean_sem([rec.report.proxy_a_rep for rec in sub])
        for name, attr in (("source", "tissue_error_source"),
                           ("mrai", "tissue_error_mrai"),
                           ("target", "tissue_error_target")):
            mean, sem = mean_sem([getattr(rec.report, attr) for rec in sub])
            summary_rows.append([name, arm, mean, sem, pad_raw, pad_rep])
    write_rows(f"{out_dir}/exp1_summary.csv",
               ["classifier", "arm", "mean_err", "sem", "pad_raw", "pad_rep"],
               summary_rows, footer=REFERENCE_FOOTER)
    write_timing(f"{out_dir}/exp1_timing.csv", records, ["arm", "repeat_index"])
    return records


# ---------------------------------------------------------------------------
# Experiment 2: learning curves over the target patch budget

def run_exp2(cfg, out_dir, jobs=1):
    counts = list(cfg.target_patches_per_tissue)
    if counts != sorted(counts):
        raise ConfigError("target patch counts must be increasing")
    tasks = [("random", c, r) for c in counts for r in range(cfg.repeats)]
    records = _run_tasks(cfg, tasks, jobs, loss_log_dir=out_dir)

    rows = [_result_row(cfg, rec) for rec in records]
    write_rows(f"{out_dir}/exp2_results.csv", RESULT_COLUMNS, rows)

    curve_rows = []
    curves = {name: {"mean": [], "sem": []}
              for name in ("source", "mrai", "target", "pad_raw", "pad_rep")}
    for c in counts:
        sub = [rec for rec in records if rec.report.n_target_patches == c]
        cells = {}
        for name, attr in (("source", "tissue_error_source"),
                           ("mrai", "tissue_error_mrai"),
                           ("target", "tissue_error_target"),
                           ("pad_raw", "proxy_a_raw"),
                           ("pad_rep", "proxy_a_rep")):
            mean, sem = mean_sem([getattr(rec.report, attr) for rec in sub])
            curves[name]["mean"].append(mean)
            curves[name]["sem"].append(sem)
            cells[name] = (mean, sem)
        curve_rows.append([c,
                           cells["source"][0], cells["source"][1],
                           cells["mrai"][0], cells["mrai"][1],
                           cells["target"][0], cells["target"][1],
                           cells["pad_raw"][0], cells["pad_rep"][0]])
    write_rows(f"{out_dir}/exp2_curve.csv",
               ["n_target_per_tissue", "source_mean", "source_sem",
                "mrai_mean", "mrai_sem", "target_mean", "target_sem",
                "pad_raw_mean", "pad_rep_mean"], curve_rows)

    svgplot.write_line_plot(f"{out_dir}/exp2_curves.svg", [
        {"title": "Distance between source and target",
         "xlabel": "target patches per tissue", "ylabel": "proxy A-distance",
         "log_x": True, "series": [
             {"label": "raw", "x": counts, "y": curves["pad_raw"]["mean"],
              "sem": curves["pad_raw"]["sem"], "color": "#d7191c"},
             {"label": "rep", "x": counts, "y": curves["pad_rep"]["mean"],
              "sem": curves["pad_rep"]["sem"], "color": "#1f78b4"}]},
        {"title": "Tissue classification on target test data",
         "xlabel": "target patches per tissue", "ylabel": "error",
         "log_x": True, "series": [
             {"label": "source", "x": counts, "y": curves["source"]["mean"],
              "sem": curves["source"]["sem"], "color": "#7b3294"},
             {"label": "mrai", "x": counts, "y": curves["mrai"]["mean"],
              "sem": curves["mrai"]["sem"], "color": "#1f78b4"},
             {"label": "target", "x": counts, "y": curves["target"]["mean"],
              "sem": curves["target"]["sem"], "color": "#00a6c4"}]},
    ])
    write_timing(f"{out_dir}/exp2_timing.csv", records,
                 ["arm", "repeat_index"])
    return records


# ---------------------------------------------------------------------------
# Experiment 3: layer-width sweep

def run_exp3(cfg, out_dir, jobs=1):
    n_target = cfg.target_patches_per_tissue[0]
    tasks = [("random", n_target, r, widths)
             for widths in cfg.sweep for r in range(cfg.repeats)]
    records = _run_tasks(cfg, tasks, jobs, loss_log_dir=None, sweep=True)

    rows = []
    for rec in records:
        widths = rec.extras["widths"]
        rows.append([cfg.experiment_id, "x".join(map(str, widths)),
                     rec.extras["param_count"], rec.report.repeat_index,
                     rec.report.tissue_error_mrai, rec.report.proxy_a_raw,
                     rec.report.proxy_a_rep, rec.extras.get("n_pairs", 0),
                     rec.config_hash])
    write_rows(f"{out_dir}/exp3_results.csv",
               ["experiment", "widths", "param_count", "repeat", "err_mrai",
                "pad_raw", "pad_rep", "n_pairs", "config_hash"], rows)

    xs, pad_mean, pad_sem, err_mean, err_sem = [], [], [], [], []
    for widths in cfg.sweep:
        sub = [rec for rec in records if rec.extras["widths"] == widths]
        xs.append(sub[0].extras["param_count"])
        mean, sem = mean_sem([rec.report.proxy_a_rep for rec in sub])
        pad_mean.append(mean)
        pad_sem.append(sem)
        mean, sem = mean_sem([rec.report.tissue_error_mrai for rec in sub])
        err_mean.append(mean)
        err_sem.append(sem)
    write_rows(f"{out_dir}/exp3_curve.csv",
               ["param_count", "pad_rep_mean", "pad_rep_sem",
                "err_mrai_mean", "err_mrai_sem"],
               [[x, pm, ps, em, es] for x, pm, ps, em, es
                in zip(xs, pad_mean, pad_sem, err_mean, err_sem)])
    svgplot.write_line_plot(f"{out_dir}/exp3_curves.svg", [
        {"title": "Acquisition invariance vs network size",
         "xlabel": "parameters", "ylabel": "proxy A-distance", "log_x": True,
         "series": [{"label": "rep", "x": xs, "y": pad_mean, "sem": pad_sem,
                     "color": "#1f78b4"}]},
        {"title": "Tissue error vs network size",
         "xlabel": "parameters", "ylabel": "error", "log_x": True,
         "series": [{"label": "mrai", "x": xs, "y": err_mean, "sem": err_sem,
                     "color": "#7b3294"}]},
    ])
    write_timing(f"{out_dir}/exp3_timing.csv", records,
                 ["arm", "repeat_index"])
    return records


# ---------------------------------------------------------------------------
# Experiment 4: margin sweep on synthetic 2-D data

def make_margin_data(seed, n_per_cell=60, class_gap=3.0, domain_gap=5.0,
                     spread=0.25):
    """Two domains x two classes of 2-D Gaussian blobs.

    Classes separate along x, domains along y, and the second domain flips
    the class axis the way a different acquisition sequence inverts tissue
    contrast, so aligning the domains requires a domain-conditioned map
    rather than a plain translation.
    """
    rng = np.random.default_rng(int(seed))
    samples = []
    for domain in (0, 1):
        for cls in (0, 1):
            flip = 1.0 if domain == 0 else -1.0
            mean = np.array([flip * (cls - 0.5) * class_gap,
                             domain * domain_gap])
            pts = rng.normal(0.0, spread, size=(n_per_cell, 2)) + mean
            for row in pts:
                samples.append(Patch(row.copy(), (len(samples), 0),
                                     cls, domain, 0))
    return samples


def _mean_pairwise_distance(points):
    n = len(points)
    if n < 2:
        return 0.0
    diff = points[:, None, :] - points[None, :, :]
    d = np.abs(diff).sum(axis=2)
    return float(d.sum() / (n * (n - 1)))


def run_exp4(cfg, out_dir, jobs=1):
    m = cfg.master_seed
    train_samples = make_margin_data(derive(m, "exp4", "train"))
    val_samples = make_margin_data(derive(m, "exp4", "val"))
    dataset = build_pairs([p for p in train_samples if p.scanner_id == 0],
                          [p for p in train_samples if p.scanner_id == 1],
                          cfg.max_pairs, derive(m, "exp4", "pairs"))

    svgplot.write_scatter_plot(
        f"{out_dir}/exp4_input.svg",
        _scatter_groups(np.stack([p.pixels for p in val_samples]), val_samples),
        title="Synthetic input data", xlabel="x1", ylabel="x2")

    records = []
    rows = []
    for margin in cfg.margins:
        started = time.perf_counter()
        net = dataclasses.replace(cfg.net, margin=float(margin))
        seed_train = derive(m, "exp4", "train-net", margin)
        init = init_model(net, derive(seed_train, "init"), kind="vector",
                          vector_dim=2)
        initial_emb = _embed_vectors(init, val_samples)
        model, history = train_siamese(
            dataset, net, cfg.epochs, cfg.batch_size, seed_train,
            model=init.copy(), kind="vector", vector_dim=2)
        emb = _embed_vectors(model, val_samples)

        initial_spread = _mean_pairwise_distance(initial_emb)
        final_spread = _mean_pairwise_distance(emb)
        pad = proxy_a_distance(emb[[p.scanner_id == 0 for p in val_samples]],
                               emb[[p.scanner_id == 1 for p in val_samples]],
                               folds=5, seed=derive(m, "exp4", "pad", margin))
        cls_labels = np.array([p.tissue for p in val_samples])
        train_emb = _embed_vectors(model, train_samples)
        train_labels = np.array([p.tissue for p in train_samples])
        if final_spread < 1e-9:
            cls_error = 0.5    # collapsed embedding carries no class signal
        else:
            linear = train_linear(
                FeatureSet(train_emb, train_labels), "logistic",
                folds=5, cv_seed=derive(m, "exp4", "cv", margin))
            cls_error = float(np.mean(predict(linear, emb) != cls_labels))

        svgplot.write_scatter_plot(
            f"{out_dir}/exp4_margin_{_margin_tag(margin)}.svg",
            _scatter_groups(emb, val_samples),
            title=f"Embedding, margin {margin:g}",
            xlabel="dim 1", ylabel="dim 2")

        report = EvalReport(math.nan, pad, math.nan, cls_error, math.nan,
                            0, 0)
        rec = RunRecord(cfg.config_hash(), 0, report, history,
                        (time.perf_counter() - started) * 1000.0, "margin",
                        extras={"margin": float(margin),
                                "initial_spread": initial_spread,
                                "final_spread": final_spread,
                                "n_pairs": len(dataset)})
        records.append(rec)
        rows.append([margin, initial_spread, final_spread,
                     final_spread / initial_spread if initial_spread else 0.0,
                     pad, cls_error, len(dataset)])

    write_rows(f"{out_dir}/exp4_results.csv",
               ["margin", "initial_mean_distance", "final_mean_distance",
                "spread_ratio", "pad_rep", "class_error", "n_pairs"], rows)
    write_timing(f"{out_dir}/exp4_timing.csv", records, ["arm"])
    return records


def _margin_tag(margin):
    return f"{margin:g}".replace(".", "p")


def _embed_vectors(model, samples):
    x = np.stack([np.asarray(p.pixels, dtype=float) for p in samples])
    bits = np.array([float(p.scanner_id) for p in samples])
    out, _ = _forward(model, x, bits)
    return out


def _scatter_groups(points, samples):
    groups = []
    for domain, marker in ((0, "cross"), (1, "square")):
        for cls, color in ((0, "#d7191c"), (1, "#2b83ba")):
            pts = [tuple(points[i]) for i, p in enumerate(samples)
                   if p.scanner_id == domain and p.tissue == cls]
            groups.append({"label": f"domain {domain} class {cls}",
                           "points": pts, "color": color, "marker": marker})
    return groups


# ---------------------------------------------------------------------------
# Task scheduling (repeats are independent; order of results is fixed)

_WORKER_STATE = {}


def _run_tasks(cfg, tasks, jobs, loss_log_dir=None, sweep=False):
    if jobs and jobs > 1:
        import multiprocessing as mp
        with mp.get_context("spawn").Pool(
                jobs, initializer=_worker_init,
                initargs=(cfg.canonical_text(), loss_log_dir, sweep)) as pool:
            return pool.map(_worker_run, tasks)
    env = build_environment(cfg)
    return [_task_record(cfg, env, task, loss_log_dir, sweep)
            for task in tasks]


def _worker_init(cfg_text, loss_log_dir, sweep):
    cfg = config_from_dict(json.loads(cfg_text))
    _WORKER_STATE["cfg"] = cfg
    _WORKER_STATE["env"] = build_environment(cfg)
    _WORKER_STATE["loss_log_dir"] = loss_log_dir
    _WORKER_STATE["sweep"] = sweep


def _worker_run(task):
    return _task_record(_WORKER_STATE["cfg"], _WORKER_STATE["env"], task,
                        _WORKER_STATE["loss_log_dir"], _WORKER_STATE["sweep"])


def _task_record(cfg, env, task, loss_log_dir, sweep):
    if sweep:
        arm, n_target, repeat, widths = task
        k, h1, h2 = widths
        net = dataclasses.replace(cfg.net, conv_kernels=k, dense1=h1, dense2=h2)
        rec = run_condition(cfg, env, arm, n_target, repeat, net=net,
                            with_baselines=False, loss_log_dir=loss_log_dir,
                            tag="x".join(map(str, widths)) + "_")
        rec.extras["widths"] = tuple(widths)
        rec.extras["param_count"] = param_count(net)
    else:
        arm, n_target, repeat = task
        rec = run_condition(cfg, env, arm, n_target, repeat,
                            loss_log_dir=loss_log_dir)
    rec.extras.pop("model", None)   # keep records light once evaluated
    return rec


# ---------------------------------------------------------------------------
# Segmentation

SEGMENT_PALETTE = {
    TissueId.BKG: (0, 0, 0),
    TissueId.CSF: (30, 60, 255),
    TissueId.GM: (40, 200, 70),
    TissueId.WM: (255, 220, 0),
}


def segment_image(model, linear, scan):
    """Classify every in-brain voxel that has a full window around it.

    Border voxels without a full window and background stay BKG.  Returns a
    label image the same shape as the scan.
    """
    from numpy.lib.stride_tricks import sliding_window_view

    labels = scan.label_map.labels
    h, w = labels.shape
    out = np.full((h, w), TissueId.BKG, dtype=np.uint8)
    brain = labels != TissueId.BKG
    brain[:HALF, :] = False
    brain[h - HALF:, :] = False
    brain[:, :HALF] = False
    brain[:, w - HALF:] = False
    ys, xs = np.nonzero(brain)
    if len(ys) == 0:
        return out
    windows = sliding_window_view(scan.intensities, (2 * HALF + 1, 2 * HALF + 1))
    bit = float(scan.scanner_id)
    for lo in range(0, len(ys), 2048):
        sel_y = ys[lo:lo + 2048]
        sel_x = xs[lo:lo + 2048]
        patch_stack = windows[sel_y - HALF, sel_x - HALF]
        emb, _ = _forward(model, patch_stack.astype(float),
                          np.full(len(sel_y), bit))
        scores = emb @ linear.weights.T + linear.bias
        pred = linear.classes[np.argmax(scores, axis=1)]
        out[sel_y, sel_x] = pred
    return out


def write_ppm(labels, path, palette=SEGMENT_PALETTE):
    """Binary PPM raster of a label image."""
    h, w = labels.shape
    rgb = np.zeros((h, w, 3), dtype=np.uint8)
    for tissue, color in palette.items():
        rgb[labels == tissue] = color
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode())
        fh.write(rgb.tobytes())


def write_segmentation(labels, subject_seed, out_base):
    from .phantom import TissueLabelMap
    label_map = TissueLabelMap(labels, subject_seed)
    write_label_map(label_map, f"{out_base}.lab")
    write_ppm(labels, f"{out_base}.ppm")
