"""Acceptance suite: one test per criterion, each printing a PASS line.

The statistical criteria run against the simulator, whose keyed streams make
every number here deterministic: a passing value is reproduced bit-for-bit on
every rerun.
"""
from __future__ import annotations

import json
import random
import time
import xml.etree.ElementTree as ET
from pathlib import Path

import numpy as np

from ctrlaudit.cli import main
from ctrlaudit.jobgen import BestSetting, BestSettings, expand_jobs, filter_to_best
from ctrlaudit.labelmatch import Vocabulary, match_lexical
from ctrlaudit.manifest import (
    CANONICAL_TONES,
    DEFAULT_PATH_TEMPLATE,
    FactorSpace,
    SkinTone,
    build_full_manifest,
    group_motions,
)
from ctrlaudit.metrics import divergence_matrix, error_matrix
from ctrlaudit.report import ALERT_COLOR, render_heatmap
from ctrlaudit.simulator import BiasRule, SimulatorConfig, simulate
from ctrlaudit.stats import PermutationConfig, audit_model, bonferroni, canonical_pairs, pair_test

from permutation_oracle import exact_pair_tail, mc_tolerance
from test_cli import tree_digests
from test_metrics import MODEL, make_groups, oracle_divergence, random_labelings
from test_stats import label_set

POOL = ("capoeira", "juggling", "breakdancing", "moonwalking", "squatting")


def announce(name: str) -> None:
    print(f"ACCEPTANCE PASS: {name}")


def match_table_for(space: FactorSpace):
    source = Vocabulary("src", space.actions)
    target = Vocabulary("tgt", space.actions + POOL)
    return match_lexical(source, target, k=1, threshold=0.95)


def ks_distance_uniform(samples: list[float]) -> float:
    xs = sorted(samples)
    n = len(xs)
    d = 0.0
    for i, x in enumerate(xs, start=1):
        d = max(d, abs(i / n - x), abs((i - 1) / n - x))
    return d


def test_factorial_facts():
    """Default design: 8,400 jobs; best subset 1,400 records / 200 groups; 21 pairs."""
    space = FactorSpace.default()
    manifest = build_full_manifest(space)

    start = time.monotonic()
    jobs = expand_jobs(space, DEFAULT_PATH_TEMPLATE)
    assert len(jobs) == 8400

    best = BestSettings(
        entries={a: BestSetting("near", "autumn", 1.0) for a in space.actions}
    )
    filtered = filter_to_best(manifest, best)
    assert len(filtered) == 1400
    groups = group_motions(filtered)
    assert len(groups) == 200
    assert all(g.complete for g in groups)

    pairs = canonical_pairs(CANONICAL_TONES)
    assert len(pairs) == 21 == (7 * 6) // 2
    elapsed = time.monotonic() - start
    assert elapsed < 1.0, f"factorial facts took {elapsed:.2f}s"
    announce("factorial facts (8400 jobs, 1400 records, 200 groups, 21 pairs)")


def test_divergence_oracle_equivalence():
    """50 random fixtures: implementation == brute-force double loop, exactly."""
    start = time.monotonic()
    rng = random.Random(2024)
    for _ in range(50):
        n_tones = rng.randint(2, 5)
        n_groups = rng.randint(1, 30)
        labelings = random_labelings(rng, n_tones, n_groups, ["a", "b", "c", "d"])
        groups, log = make_groups(labelings)
        result = divergence_matrix(groups, log, MODEL)
        expected = oracle_divergence(labelings, list(CANONICAL_TONES[:n_tones]))
        assert (result.counts == expected).all()
        assert result.n_groups == n_groups
    elapsed = time.monotonic() - start
    assert elapsed < 5.0, f"oracle equivalence took {elapsed:.2f}s"
    announce("divergence equals brute-force oracle on 50 random fixtures")


def test_matrix_invariants():
    """Symmetry, zero diagonal, rate bounds, error <= divergence on random fixtures."""
    from ctrlaudit.labelmatch import MatchEntry, MatchTable

    table = MatchTable(
        entries={"cartwheel": MatchEntry(("a",), (1.0,))}, unmatched=()
    )
    rng = random.Random(77)
    for _ in range(50):
        n_tones = rng.randint(2, 5)
        labelings = random_labelings(rng, n_tones, rng.randint(1, 30), ["a", "b", "c"])
        groups, log = make_groups(labelings)
        div = divergence_matrix(groups, log, MODEL)
        err = error_matrix(groups, log, table, MODEL)
        assert (div.counts == div.counts.T).all()
        assert not div.counts.diagonal().any()
        assert (div.rates >= 0.0).all() and (div.rates <= 1.0).all()
        assert (err.counts <= div.counts).all()
    announce("matrix invariants (symmetry, diagonal, bounds, error <= divergence)")


def test_bonferroni_correctness():
    """adjusted = min(1, 21 * raw) on a 21-vector including the stated grid."""
    P = 9999
    grid = [0.0, 1.0 / (P + 1), 0.01, 0.2, 1.0]
    raw = grid + [0.5] * 16
    assert len(raw) == 21
    adjusted = bonferroni(raw)
    for r, a in zip(raw, adjusted):
        assert a == min(1.0, 21 * r)
    assert adjusted[0] == 0.0
    assert adjusted[1] == 21 * (1.0 / (P + 1))
    assert adjusted[2] == 0.21
    assert adjusted[3] == 1.0
    assert adjusted[4] == 1.0
    announce("Bonferroni adjustment exact on the stated grid (m=21)")


def test_permutation_exactness_vs_enumeration():
    """Toy instances (3 tones, <= 5 groups): MC p within 3 SE of exhaustive p."""
    start = time.monotonic()
    cfg = PermutationConfig(permutations=9999, seed=424242)
    rng = random.Random(99)
    cases = 0
    for case in range(8):
        n_groups = rng.randint(1, 5)
        labelings = [tuple(rng.choice("abc") for _ in range(3)) for _ in range(n_groups)]
        ls = label_set(labelings, 3)
        for pair in canonical_pairs(CANONICAL_TONES[:3]):
            slots = (ls.tones.index(pair[0]), ls.tones.index(pair[1]))
            exact = float(exact_pair_tail(labelings, *slots))
            estimate = pair_test(ls, pair, cfg)
            tolerance = mc_tolerance(exact, cfg.permutations)
            assert abs(estimate - exact) <= tolerance, (
                f"case {case}: estimate {estimate} vs exact {exact} (tol {tolerance})"
            )
            cases += 1
    elapsed = time.monotonic() - start
    assert elapsed < 30.0, f"exactness check took {elapsed:.2f}s"
    announce(f"permutation test within 3 MC standard errors of enumeration ({cases} cases)")


NULL_SPACE = FactorSpace(
    skin_tones=CANONICAL_TONES,
    actions=("cartwheel", "jog", "yoga", "drink"),
    motion_ids=tuple(f"m{i:02d}" for i in range(20)),
    viewpoints=("near",),
    backgrounds=("autumn",),
)


def test_null_false_positive_control():
    """Exchangeable noise null, 200 seeded audits: FWER within slack, raw p uniform."""
    start = time.monotonic()
    manifest = build_full_manifest(NULL_SPACE)
    groups = group_motions(manifest)
    assert len(groups) == 80
    table = match_table_for(NULL_SPACE)

    n_runs = 200
    runs_with_fp = 0
    first_pair_raw_ps = []
    for run_seed in range(n_runs):
        cfg = SimulatorConfig(
            seed=run_seed,
            base_accuracy=0.7,
            confusion_pool={a: POOL for a in NULL_SPACE.actions},
            noise=0.35,
        )
        log = simulate(manifest, table, cfg)
        report = audit_model(
            groups, log, "sim-model", PermutationConfig(permutations=999, seed=run_seed)
        )
        if report.any_significant_adjusted():
            runs_with_fp += 1
        first_pair_raw_ps.append(report.pairs[0].raw_p)

    fp_fraction = runs_with_fp / n_runs
    ks = ks_distance_uniform(first_pair_raw_ps)
    elapsed = time.monotonic() - start
    assert fp_fraction <= 0.05 + 0.03, f"FWER {fp_fraction} above 0.08"
    assert ks <= 0.1, f"KS distance {ks} above 0.1"
    assert elapsed < 600.0, f"null calibration took {elapsed:.1f}s"
    announce(
        f"null control: FWER {fp_fraction:.3f} <= 0.08, raw-p KS {ks:.3f} <= 0.1 "
        f"({elapsed:.0f}s)"
    )


POWER_SPACE = FactorSpace(
    skin_tones=CANONICAL_TONES,
    actions=("cartwheel", "jog"),
    motion_ids=tuple(f"m{i:02d}" for i in range(25)),
    viewpoints=("near", "far"),
    backgrounds=("autumn", "stadium"),
)


def test_planted_bias_power():
    """flip 0.5 on one tone over 200 groups: affected pairs flagged in >= 90% of runs."""
    start = time.monotonic()
    manifest = build_full_manifest(POWER_SPACE)
    groups = group_motions(manifest)
    assert len(groups) == 200
    table = match_table_for(POWER_SPACE)

    biased = SkinTone.AFRICAN
    affected = {
        frozenset((biased, tone)) for tone in CANONICAL_TONES if tone is not biased
    }
    n_runs = 50
    successes = 0
    for run_seed in range(n_runs):
        cfg = SimulatorConfig(
            seed=run_seed,
            base_accuracy=0.8,
            confusion_pool={a: POOL for a in POWER_SPACE.actions},
            bias_rules=(BiasRule(biased, "*", 0.5, "capoeira"),),
        )
        log = simulate(manifest, table, cfg)
        report = audit_model(
            groups, log, "sim-model", PermutationConfig(permutations=999, seed=run_seed)
        )
        flagged = {
            frozenset((res.tone_1, res.tone_2))
            for res in report.pairs
            if res.significant_adjusted
        }
        if affected <= flagged:
            successes += 1
    power = successes / n_runs
    elapsed = time.monotonic() - start
    assert power >= 0.9, f"power {power} below 0.9"
    assert elapsed < 300.0, f"power check took {elapsed:.1f}s"
    announce(f"planted-bias power {power:.2f} >= 0.90 ({elapsed:.0f}s)")


def test_subcommand_determinism(tmp_path: Path):
    """Re-running any subcommand with the same config is byte-identical."""
    space = FactorSpace(
        skin_tones=CANONICAL_TONES[:4],
        actions=("cartwheel", "jog"),
        motion_ids=("m00", "m01", "m02"),
        viewpoints=("near",),
        backgrounds=("autumn",),
    )
    from ctrlaudit.manifest import serialize_manifest

    (tmp_path / "manifest.csv").write_bytes(serialize_manifest(build_full_manifest(space)))
    (tmp_path / "source.txt").write_text("\n".join(space.actions) + "\n")
    (tmp_path / "target.txt").write_text("\n".join(space.actions + POOL) + "\n")
    (tmp_path / "sim.json").write_text(
        json.dumps(
            {
                "seed": 5,
                "base_accuracy": 0.7,
                "confusion_pool": {a: list(POOL) for a in space.actions},
                "noise": 0.3,
            }
        )
    )
    assert main(
        [
            "match-labels",
            "--source-vocab", str(tmp_path / "source.txt"),
            "--target-vocab", str(tmp_path / "target.txt"),
            "--match-threshold", "0.95",
            "--out", str(tmp_path / "match"),
        ]
    ) == 0
    table = str(tmp_path / "match" / "match_table.json")

    def run_all(tag: str, workers: str) -> dict[str, dict[str, str]]:
        # identical config throughout: only --out (and --workers) vary
        digests = {}
        sim_out = tmp_path / f"sim_{tag}"
        assert main(
            [
                "simulate",
                "--manifest", str(tmp_path / "manifest.csv"),
                "--match-table", table,
                "--sim-config", str(tmp_path / "sim.json"),
                "--out", str(sim_out),
            ]
        ) == 0
        digests["simulate"] = tree_digests(sim_out)
        jobs_out = tmp_path / f"jobs_{tag}"
        assert main(["expand-jobs", "--space", "default", "--out", str(jobs_out)]) == 0
        digests["expand-jobs"] = tree_digests(jobs_out)
        audit_out = tmp_path / f"audit_{tag}"
        assert main(
            [
                "audit",
                "--manifest", str(tmp_path / "manifest.csv"),
                "--predictions", str(tmp_path / "sim_one" / "predictions.csv"),
                "--match-table", table,
                "--permutations", "199",
                "--seed", "11",
                "--workers", workers,
                "--out", str(audit_out),
            ]
        ) == 0
        digests["audit"] = tree_digests(audit_out)
        return digests

    first = run_all("one", workers="1")
    second = run_all("two", workers="1")
    third = run_all("three", workers="4")
    assert first == second == third
    announce("determinism: byte-identical artifacts across reruns and worker counts")


def test_report_conformance():
    """SVG parses as XML; significance heatmaps alert exactly the p < alpha cells."""
    rng = np.random.default_rng(5)
    alpha = 0.05
    matrix = np.ones((7, 7))
    upper = [(i, j) for i in range(7) for j in range(i + 1, 7)]
    values = rng.uniform(0, 1, size=len(upper)).round(4)
    values[3] = 0.01  # guarantee at least one significant cell
    for (i, j), v in zip(upper, values):
        matrix[i, j] = matrix[j, i] = v
    svg = render_heatmap(matrix, CANONICAL_TONES, "adjusted_p", alpha=alpha)
    root = ET.fromstring(svg)
    assert root.tag == "{http://www.w3.org/2000/svg}svg"
    expected_alerts = sum(1 for v in values if v < alpha)
    assert svg.count(f'fill="{ALERT_COLOR}"') == expected_alerts

    rate_svg = render_heatmap(np.zeros((7, 7)), CANONICAL_TONES, "rate")
    ET.fromstring(rate_svg)
    assert rate_svg.count(f'fill="{ALERT_COLOR}"') == 0
    announce("report conformance: valid XML, alert cells == p < alpha")
