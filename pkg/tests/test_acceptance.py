"""Acceptance gate: one test per shipped criterion, each printing a
PASS/FAIL line with the measured values.

Criteria 4, 5 and 8 run the desk-scale experiments end to end, so the full
module takes tens of minutes single-threaded.  Criterion 9's rank-order
clause is unattainable with the shipped signal model and relaxation table
(both protocols order the tissues WM > GM > CSF); it is implemented
faithfully and marked as a strict expected failure.  The decisions ledger
documents the analysis.
"""

import dataclasses
import itertools
import json
import subprocess
import sys
import time

import numpy as np
import pytest

import crossscan as cs
from crossscan.evaluate import a_distance_from_error
from crossscan.experiments import default_config, run_exp1, run_exp2, run_exp4
from crossscan.network import (NetConfig, init_model, pair_batch_loss_grads,
                               param_count)
from crossscan.phantom import (BRAINWEB_15T, BRAINWEB_30T,
                               AcquisitionProtocol, CLASSIFICATION_TISSUES,
                               TissueId, signal)
from crossscan.sampling import PairKind, Patch, PatchPair, count_pairs


def report(criterion, passed, detail):
    marker = "PASS" if passed else "FAIL"
    print(f"\nACCEPTANCE {criterion}: {marker} ({detail})")
    return passed


def test_criterion_1_param_count_oracle():
    """param_count reproduces the published totals for five configs."""
    expected = {(4, 8, 4): 1254, (8, 16, 8): 4874, (16, 32, 16): 19218,
                (32, 64, 32): 76322, (64, 128, 64): 304194}
    started = time.perf_counter()
    got = {widths: param_count(NetConfig(conv_kernels=widths[0],
                                         dense1=widths[1], dense2=widths[2]))
           for widths in expected}
    elapsed = time.perf_counter() - started
    ok = got == expected and elapsed < 0.001
    assert report(1, ok, f"{got}, {elapsed * 1000:.3f} ms")


def brute_force_pair_count(n, m):
    """Independent enumeration straight from the pair-kind definitions."""
    total = 0
    tissues = range(len(n))
    for t in tissues:
        pool = n[t] + m[t]
        total += pool * (pool - 1)          # ordered same-tissue, no self
    for t, u in itertools.combinations(tissues, 2):
        total += n[t] * n[u] + n[t] * m[u] + m[t] * m[u]
    return total


def test_criterion_2_pair_count_oracle():
    """count_pairs hits 2784 over four source scans and the brute-force
    enumeration matches the formula minus self-pairs for all counts <= 3."""
    started = time.perf_counter()
    per_scan = count_pairs([10, 10, 10], [1, 1, 1])
    total = 4 * per_scan
    assert per_scan == 696
    assert total == 2784

    checked = 0
    for counts in itertools.product(range(4), repeat=6):
        n, m = list(counts[:3]), list(counts[3:])
        expected = count_pairs(n, m) - (sum(n) + sum(m))
        assert brute_force_pair_count(n, m) == expected, (n, m)
        checked += 1

    # the sampler's actual enumeration agrees on a spot-check sample
    rng = np.random.default_rng(0)
    for _ in range(12):
        n = rng.integers(0, 4, 3)
        m = rng.integers(0, 4, 3)
        if n.sum() + m.sum() < 2:
            continue
        src = [Patch(np.zeros(1), (i, 0), t, 0, 0)
               for t, k in zip(CLASSIFICATION_TISSUES, n) for i in range(k)]
        tgt = [Patch(np.zeros(1), (i, 1), t, 1, 0)
               for t, k in zip(CLASSIFICATION_TISSUES, m) for i in range(k)]
        if not src and not tgt:
            continue
        ds = cs.build_pairs(src, tgt, 10**6, 1)
        assert len(ds) == count_pairs(n, m) - int(n.sum() + m.sum())
    elapsed = time.perf_counter() - started
    assert report(2, elapsed < 1.0,
                  f"2784 exact, {checked} count vectors, {elapsed:.2f} s")


def test_criterion_3_gradient_correctness():
    """Central differences agree with the analytic gradients on every
    parameter of a [2,4,4,2] model over a six-pair batch, dropout off."""
    started = time.perf_counter()
    config = NetConfig(conv_kernels=2, dense1=4, dense2=4, embed_dim=2,
                       dropout_rate=0.0, l2_lambda=0.001, margin=1.0, norm_p=1)
    rng = np.random.default_rng(3)
    model = init_model(config, 123)
    for key in model.params:   # evaluate at a generic, kink-free point
        model.params[key] = model.params[key] \
            + rng.normal(0, 0.3, model.params[key].shape)
    pairs = []
    for kind in PairKind:
        a_sc = 0 if kind.name.startswith(("SS", "ST")) else 1
        b_sc = 1 if kind.name.startswith(("TT", "ST")) else 0
        same = "SAME" in kind.name
        a = Patch(rng.normal(0, 1, (15, 15)), (7, 7), TissueId.GM, a_sc, 0)
        b = Patch(rng.normal(0, 1, (15, 15)), (7, 7),
                  TissueId.GM if same else TissueId.WM, b_sc, 0)
        pairs.append(PatchPair(a, b, 1 if same else 0, kind))

    _, grads = pair_batch_loss_grads(model, pairs)
    h = 1e-5
    worst = 0.0
    for key, arr in model.params.items():
        flat = arr.ravel()
        g = grads[key].ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up, _ = pair_batch_loss_grads(model, pairs)
            flat[i] = orig - h
            down, _ = pair_batch_loss_grads(model, pairs)
            flat[i] = orig
            num = (up - down) / (2 * h)
            worst = max(worst, abs(num - g[i]) / max(1.0, abs(num), abs(g[i])))
    elapsed = time.perf_counter() - started
    ok = worst <= 1e-4 and elapsed < 10.0
    assert report(3, ok, f"worst rel err {worst:.2e}, {elapsed:.1f} s")


@pytest.mark.slow
def test_criterion_4_experiment_one(tmp_path):
    """Desk-scale one-target-patch calibration: the embedding classifier
    beats both supervised baselines and the domain distance collapses."""
    started = time.perf_counter()
    cfg = default_config("exp1")
    assert cfg.repeats == 10 and cfg.target_patches_per_tissue == (1,)
    records = run_exp1(cfg, str(tmp_path))
    lines = []
    ok = True
    for arm in ("manual", "random"):
        sub = [r.report for r in records if r.arm == arm]
        mrai = float(np.mean([r.tissue_error_mrai for r in sub]))
        src = float(np.mean([r.tissue_error_source for r in sub]))
        tgt = float(np.mean([r.tissue_error_target for r in sub]))
        pad_raw = float(np.mean([r.proxy_a_raw for r in sub]))
        pad_rep = float(np.mean([r.proxy_a_rep for r in sub]))
        arm_ok = (mrai < src and mrai < tgt and pad_raw > 1.5
                  and pad_rep < 0.6)
        ok = ok and arm_ok
        lines.append(f"{arm}: mrai={mrai:.3f} src={src:.3f} tgt={tgt:.3f} "
                     f"pad {pad_raw:.2f}->{pad_rep:.2f}")
    elapsed = time.perf_counter() - started
    ok = ok and elapsed < 15 * 60
    assert report(4, ok, "; ".join(lines) + f"; {elapsed / 60:.1f} min")


@pytest.mark.slow
def test_criterion_5_experiment_two_trend(tmp_path):
    """Learning-curve trend over 1/10/100 target patches per tissue."""
    started = time.perf_counter()
    cfg = dataclasses.replace(default_config("exp2"),
                              target_patches_per_tissue=(1, 10, 100))
    assert cfg.repeats == 10
    records = run_exp2(cfg, str(tmp_path))
    means = {}
    for count in (1, 10, 100):
        sub = [r.report for r in records if r.report.n_target_patches == count]
        means[count] = (float(np.mean([r.tissue_error_mrai for r in sub])),
                        float(np.mean([r.tissue_error_source for r in sub])),
                        float(np.mean([r.tissue_error_target for r in sub])))
    dominated = all(means[c][0] <= min(means[c][1], means[c][2])
                    for c in (1, 10, 100))
    monotone = means[1][0] > means[10][0] > means[100][0]
    elapsed = time.perf_counter() - started
    ok = dominated and monotone and elapsed < 45 * 60
    detail = " ".join(f"n={c}: mrai={means[c][0]:.3f} "
                      f"min(base)={min(means[c][1], means[c][2]):.3f}"
                      for c in (1, 10, 100))
    assert report(5, ok, detail + f"; {elapsed / 60:.1f} min")


@pytest.mark.slow
def test_criterion_6_margin_properties(tmp_path):
    """Margin sweep on synthetic 2-D data: collapse at 0, alignment at 1,
    class-only separation at 10."""
    started = time.perf_counter()
    cfg = default_config("exp4")
    records = run_exp4(cfg, str(tmp_path))
    by_margin = {rec.extras["margin"]: rec for rec in records}
    collapse = by_margin[0.0].extras["final_spread"] \
        <= 0.01 * by_margin[0.0].extras["initial_spread"]
    m1 = by_margin[1.0].report
    m10 = by_margin[10.0].report
    ok_m1 = m1.proxy_a_rep < 0.5 and m1.tissue_error_mrai < 0.1
    ok_m10 = m10.proxy_a_rep > 1.0 and m10.tissue_error_mrai < 0.1
    elapsed = time.perf_counter() - started
    ok = collapse and ok_m1 and ok_m10 and elapsed < 5 * 60
    detail = (f"collapse ratio "
              f"{by_margin[0.0].extras['final_spread'] / by_margin[0.0].extras['initial_spread']:.5f}; "
              f"m1 pad={m1.proxy_a_rep:.2f} err={m1.tissue_error_mrai:.3f}; "
              f"m10 pad={m10.proxy_a_rep:.2f} err={m10.tissue_error_mrai:.3f}; "
              f"{elapsed:.0f} s")
    assert report(6, ok, detail)


def test_criterion_7_proxy_a_point_checks():
    """Exact domain-distance values at e = 0, 0.03 and 0.5."""
    got = (a_distance_from_error(0.0), a_distance_from_error(0.03),
           a_distance_from_error(0.5))
    ok = got == (2.0, 1.88, 0.0)
    assert report(7, ok, f"e=(0, 0.03, 0.5) -> {got}")


@pytest.mark.slow
def test_criterion_8_full_run_determinism(tmp_path):
    """Two end-to-end exp1 CLI runs with one master seed produce
    byte-identical result CSVs."""
    started = time.perf_counter()
    cfg = {"n_source_subjects": 2, "n_test_subjects": 2,
           "source_patches_per_tissue": 30, "test_patches_per_tissue": 20,
           "repeats": 2, "epochs": 8, "batch_size": 32, "max_pairs": 800,
           "image_size": 128, "master_seed": 424242}
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(cfg))
    outs = []
    for run in ("a", "b"):
        out = tmp_path / run
        out.mkdir()
        proc = subprocess.run(
            [sys.executable, "-m", "crossscan.cli", "exp1",
             "--config", str(cfg_path), "--out", str(out)],
            capture_output=True, text=True, timeout=15 * 60)
        assert proc.returncode == 0, proc.stderr
        outs.append(out)
    same_results = (outs[0] / "exp1_results.csv").read_bytes() \
        == (outs[1] / "exp1_results.csv").read_bytes()
    same_summary = (outs[0] / "exp1_summary.csv").read_bytes() \
        == (outs[1] / "exp1_summary.csv").read_bytes()
    elapsed = time.perf_counter() - started
    ok = same_results and same_summary and elapsed < 30 * 60
    assert report(8, ok,
                  f"results identical={same_results}, "
                  f"summary identical={same_summary}, {elapsed / 60:.1f} min")


def test_criterion_9_simulator_invariants():
    """Signal monotone decreasing in TE; SKULL signal zero at both fields."""
    started = time.perf_counter()
    monotone = True
    for tissue in CLASSIFICATION_TISSUES:
        for b0 in (1.5, 3.0):
            values = [signal(tissue, AcquisitionProtocol("p", b0, 20.0, 60.0, te))
                      for te in (1.0, 5.0, 15.0, 30.0, 55.0)]
            monotone &= all(a > b for a, b in zip(values, values[1:]))
    skull_zero = (signal(TissueId.SKULL, BRAINWEB_15T) == 0.0
                  and signal(TissueId.SKULL, BRAINWEB_30T) == 0.0)
    elapsed = time.perf_counter() - started
    ok = monotone and skull_zero and elapsed < 1.0
    assert report(9, ok, f"TE monotone={monotone}, skull zero={skull_zero}, "
                         f"{elapsed * 1000:.1f} ms")


@pytest.mark.xfail(strict=True, reason=(
    "Unattainable as specified: with the shipped signal equation and "
    "relaxation table, both presets order the tissues WM > GM > CSF "
    "(1.5T: 5.24/4.86/1.71, 3.0T: 0.52/0.36/0.18), so the rank orders are "
    "identical; see the decisions ledger for the full analysis."))
def test_criterion_9_rank_order_clause():
    """CSF/GM/WM intensity rank order should differ between the presets."""
    orders = []
    for proto in (BRAINWEB_15T, BRAINWEB_30T):
        values = {t.name: signal(t, proto) for t in CLASSIFICATION_TISSUES}
        orders.append(tuple(sorted(values, key=values.get, reverse=True)))
    report("9-rank-order", orders[0] != orders[1],
           f"1.5T order {orders[0]}, 3.0T order {orders[1]}")
    assert orders[0] != orders[1]
