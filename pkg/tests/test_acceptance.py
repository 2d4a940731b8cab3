"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The heavy criteria share a single command-line run of the benchmark config
(module-scoped fixture); the determinism check replays it with 8 workers.
"""
import json
import math
import time
from fractions import Fraction
from itertools import product

import numpy as np
import pytest
import yaml

from rfsel import cli
from rfsel.config import ferns_for_coverage, parse_config
from rfsel.evaluation import (ErrorReport, MethodSpec, SelectionMatrix, compare_methods,
                              replicate_resamples, run_bootstrap_experiment, scs_analysis)
from rfsel.selectors import ImportanceSource, rfe_schedule
from rfsel.stats import binomial_tail, wilcoxon_signed_rank
from rfsel.synthgen import SyntheticSpec, generate_synthetic, score_against_truth

BORUTA = [f"Bor. Ferns {k}" for k in (1, 3, 5, 7)] + ["Bor. RF Gini", "Bor. RF Raw",
                                                       "Bor. RF Norm."]
LINEAR = {"n_objects": 60, "n_relevant": 5, "n_redundant": 20, "sigma": 0.5, "n_noise": 475,
          "seed": 2024}
BENCH = {
    "seed": 7,
    "replicates": 30,
    "data": {"synthetic": LINEAR},
    "validation": {"n_trees": 500},
    "baseline": True,
    "methods": (
        [{"name": f"Bor. Ferns {k}", "selector": "boruta",
          "importance": {"kind": "ferns", "depth": k, "n_members": "auto"}} for k in (1, 3, 5, 7)]
        + [{"name": f"Bor. RF {lab}", "selector": "boruta",
            "importance": {"kind": "forest", "measure": m, "n_members": 500}}
           for lab, m in (("Gini", "gini"), ("Raw", "raw"), ("Norm.", "normalized"))]
        + [{"name": "RFE RF Raw", "selector": "rfe",
            "importance": {"kind": "forest", "measure": "raw", "n_members": 500}},
           {"name": "RRF", "selector": "rrf"}]),
}


@pytest.fixture(scope="module")
def bench(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("bench")
    config = tmp / "bench.yaml"
    config.write_text(yaml.safe_dump(BENCH, sort_keys=False))
    t0 = time.perf_counter()
    assert cli.main(["run", str(config), "-o", str(tmp / "w1"), "-w", "1"]) == 0
    elapsed = time.perf_counter() - t0
    cfg, d, truth = parse_config(BENCH)
    sel = {}
    for row in json.loads((tmp / "w1" / "selections.json").read_text()):
        mask = np.zeros((len(row["selected"]), d.n_features), dtype=bool)
        for r, idx in enumerate(row["selected"]):
            mask[r, idx] = True
        sel[row["method"]] = mask
    errors = json.loads((tmp / "w1" / "errors.json").read_text())
    timing = {row["method"]: row for row in
              json.loads((tmp / "w1" / "timing.json").read_text())}
    return dict(tmp=tmp, config=config, elapsed=elapsed, d=d, truth=truth, sel=sel,
                errors=errors, timing=timing)


def test_criterion_1_statistical_oracles(verdict):
    t0 = time.perf_counter()
    worst_binom = 0.0
    for n in range(0, 31):
        for p in (Fraction(1, 2), Fraction(1, 10), Fraction(3, 7), Fraction(9, 10)):
            pmf = [math.comb(n, j) * p**j * (1 - p)**(n - j) for j in range(n + 1)]
            for k in range(0, n + 1):
                exact = float(sum(pmf[k:]))
                worst_binom = max(worst_binom, abs(binomial_tail(k, n, float(p)) - exact))
    rng = np.random.default_rng(0)
    worst_wilcoxon = 0.0
    for n in range(1, 13):
        for _ in range(6):
            d = rng.integers(-4, 5, n).astype(float) / 2  # ties and zeros on purpose
            x, y = d, np.zeros(n)
            nz = np.flatnonzero(d != 0)
            if len(nz) == 0:
                continue
            mags = np.abs(d[nz])
            order = np.argsort(mags, kind="stable")
            ranks = np.empty(len(nz))
            sm = mags[order]
            i = 0
            while i < len(sm):
                j = i
                while j + 1 < len(sm) and sm[j + 1] == sm[i]:
                    j += 1
                ranks[order[i:j + 1]] = (i + j) / 2 + 1
                i = j + 1
            w = ranks[d[nz] > 0].sum()
            hits = sum(1 for s in product((0, 1), repeat=len(nz))
                       if np.dot(s, ranks) >= w - 1e-9)
            oracle = hits / 2 ** len(nz)
            worst_wilcoxon = max(worst_wilcoxon, abs(wilcoxon_signed_rank(x, y) - oracle))
    secs = time.perf_counter() - t0
    ok = worst_binom <= 1e-10 and worst_wilcoxon <= 1e-10 and secs < 60
    verdict(1, ok, f"max binomial diff {worst_binom:.2e}, max wilcoxon diff "
                   f"{worst_wilcoxon:.2e}, {secs:.1f}s")
    assert ok


def test_criterion_2_scs_null_calibration(verdict):
    t0 = time.perf_counter()
    rs = replicate_resamples(50, 30, 0)
    empty = 0
    for seed in range(50):
        sel = np.random.default_rng(seed).random((30, 500)) < 0.1
        m = SelectionMatrix("random", sel, rs, np.ones(30))
        empty += len(scs_analysis(m, 0.01).scs_set) == 0
    secs = time.perf_counter() - t0
    ok = empty >= 45 and secs < 60
    verdict(2, ok, f"empty SCS set in {empty}/50 trials, {secs:.1f}s")
    assert ok


def test_criterion_3_relevant_recovery(bench, verdict):
    truth = bench["truth"]
    rel = sorted(truth.relevant)
    noise = sorted(truth.noise)
    parts, ok = [], True
    for name in BORUTA:
        sel = bench["sel"][name]
        full = int(sel[:, rel].all(axis=1).sum())
        worst_noise = float(sel[:, noise].mean(axis=1).max())
        ok &= full >= 27 and worst_noise <= 0.02
        parts.append(f"{name}: {full}/30 full, max noise {worst_noise:.3f}")
    boruta_secs = sum(bench["timing"][n]["mean_seconds"] * 30 for n in BORUTA)
    ok &= boruta_secs < 20 * 60
    verdict(3, ok, "; ".join(parts) + f"; Boruta time {boruta_secs:.0f}s")
    assert ok


def test_criterion_4_all_relevant_vs_minimal_optimal(bench, verdict):
    truth = bench["truth"]
    size = {n: bench["sel"][n].sum(axis=1).mean() for n in BORUTA + ["RFE RF Raw", "RRF"]}
    recall = {n: np.mean([score_against_truth(np.flatnonzero(row), truth).recall
                          for row in bench["sel"][n]]) for n in ("Bor. RF Raw", "RFE RF Raw")}
    ok = (size["Bor. RF Raw"] > size["RFE RF Raw"] > size["RRF"]
          and recall["Bor. RF Raw"] > recall["RFE RF Raw"])
    verdict(4, ok, f"mean size Boruta RF Raw {size['Bor. RF Raw']:.1f}, RFE RF Raw "
                   f"{size['RFE RF Raw']:.1f}, RRF {size['RRF']:.1f} (other Boruta sources "
                   f"{min(size[n] for n in BORUTA):.1f}-{max(size[n] for n in BORUTA):.1f}); "
                   f"recall Boruta {recall['Bor. RF Raw']:.3f} vs RFE {recall['RFE RF Raw']:.3f}")
    assert ok


def test_criterion_6_baseline_not_better(bench, verdict):
    errs = {row["method"]: row for row in bench["errors"]}
    base = errs["All features"]
    parts, ok = [], True
    for name in BORUTA:
        rows = compare_methods([ErrorReport(name, np.array(errs[name]["errors"], float), "b"),
                                ErrorReport("All features", np.array(base["errors"], float),
                                            "b")], 0.01)
        worse = rows[1].best and rows[0].significantly_worse
        ok &= not worse
        parts.append(f"{name} {rows[0].mean_error:.3f} (p={rows[0].p_value:.3g})")
    verdict(6, ok, f"baseline {np.nanmean(np.array(base['errors'], float)):.3f}; "
                   + "; ".join(parts))
    assert ok


def test_criterion_9_determinism_across_workers(bench, verdict):
    tmp = bench["tmp"]
    assert cli.main(["run", str(bench["config"]), "-o", str(tmp / "w8"), "-w", "8"]) == 0
    same = [n for n in cli.PAYLOAD_FILES
            if (tmp / "w1" / n).read_bytes() == (tmp / "w8" / n).read_bytes()]
    ok = len(same) == len(cli.PAYLOAD_FILES)
    verdict(9, ok, f"{len(same)}/{len(cli.PAYLOAD_FILES)} report files byte-identical "
                   "between 1 and 8 workers")
    assert ok


def test_criterion_5_xor_needs_depth(verdict):
    t0 = time.perf_counter()
    d, truth = generate_synthetic(SyntheticSpec(n_objects=200, n_relevant=2, n_noise=100,
                                                signal="xor-pairs", seed=5))
    rel = sorted(truth.relevant)
    found = {}
    for depth in (1, 2, 3):
        src = ImportanceSource("ferns", depth=depth,
                               n_members=ferns_for_coverage(d.n_features, depth))
        m = run_bootstrap_experiment(d, MethodSpec(f"ferns {depth}", "boruta", src), B=30,
                                     master_seed=11)
        found[depth] = int(m.selected[:, rel].all(axis=1).sum())
    secs = time.perf_counter() - t0
    ok = (min(found[2], found[3]) >= 24 and found[1] < min(found[2], found[3])
          and secs < 600)
    verdict(5, ok, f"both XOR features confirmed: depth 1 {found[1]}/30, depth 2 "
                   f"{found[2]}/30, depth 3 {found[3]}/30, {secs:.0f}s")
    assert ok


def test_criterion_7_rfe_schedule(verdict):
    expect = {5: [5, 4], 8: [8, 4], 100: [100, 64, 32, 16, 8, 4],
              2000: [2000, 1024, 512, 256, 128, 64, 32, 16, 8, 4]}
    got = {p: rfe_schedule(p) for p in expect}
    ok = got == expect
    verdict(7, ok, "; ".join(f"P={p}: {got[p]}" for p in expect))
    assert ok


def test_criterion_8_ferns_speed(verdict):
    d, _ = generate_synthetic(SyntheticSpec(**LINEAR))
    mean = {}
    for label, src in (("ferns", ImportanceSource("ferns", depth=5, n_members=500)),
                       ("forest", ImportanceSource("forest", measure="raw", n_members=500))):
        m = run_bootstrap_experiment(d, MethodSpec(label, "boruta", src), B=5, master_seed=3)
        mean[label] = float(m.wall_clock.mean())
    ratio = mean["forest"] / mean["ferns"]
    ok = ratio >= 5
    verdict(8, ok, f"Boruta mean seconds: ferns D5 {mean['ferns']:.2f}, forest raw "
                   f"{mean['forest']:.2f}, speed-up {ratio:.1f}x")
    assert ok
