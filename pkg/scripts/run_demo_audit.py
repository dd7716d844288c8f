#!/usr/bin/env python3
"""End-to-end demo on synthetic logs: one unbiased model, one with planted bias.

Builds the full 8,400-clip default manifest, simulates two models, then walks
the whole CLI pipeline (validate -> match-labels -> simulate -> ablate ->
select-best -> audit -> report). Artifacts land under --out (default
out/demo). The biased model flips one tone's label half the time, so its
audit should flag exactly the six pairs involving that tone.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from ctrlaudit.cli import main as cli
from ctrlaudit.manifest import FactorSpace, build_full_manifest, serialize_manifest

POOL = ["capoeira", "juggling soccer ball", "breakdancing", "moonwalking", "squatting"]


def run(argv: list[str]) -> None:
    code = cli(argv)
    if code != 0:
        raise SystemExit(f"step {' '.join(argv[:1])} exited with {code}")


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="out/demo")
    parser.add_argument("--seed", type=int, default=42)
    parser.add_argument("--permutations", type=int, default=999)
    args = parser.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    space = FactorSpace.default()
    manifest_path = out / "manifest.csv"
    manifest_path.write_bytes(serialize_manifest(build_full_manifest(space)))
    (out / "source_vocab.txt").write_text("\n".join(space.actions) + "\n")
    (out / "target_vocab.txt").write_text("\n".join(list(space.actions) + POOL) + "\n")
    (out / "sim_null.json").write_text(
        json.dumps(
            {
                "seed": args.seed,
                "base_accuracy": 0.75,
                "confusion_pool": {a: POOL for a in space.actions},
                "noise": 0.0,
            },
            indent=2,
        )
    )
    (out / "sim_biased.json").write_text(
        json.dumps(
            {
                "seed": args.seed,
                "base_accuracy": 0.75,
                "confusion_pool": {a: POOL for a in space.actions},
                "bias_rules": [
                    {
                        "skin_tone": "african",
                        "action": "*",
                        "flip_probability": 0.5,
                        "flip_target": "capoeira",
                    }
                ],
            },
            indent=2,
        )
    )

    run(["validate", "--manifest", str(manifest_path), "--out", str(out / "validate")])
    run(
        [
            "match-labels",
            "--source-vocab", str(out / "source_vocab.txt"),
            "--target-vocab", str(out / "target_vocab.txt"),
            "--match-threshold", "0.95",
            "--out", str(out / "match"),
        ]
    )
    table = str(out / "match" / "match_table.json")
    for tag in ("null", "biased"):
        run(
            [
                "simulate",
                "--manifest", str(manifest_path),
                "--match-table", table,
                "--sim-config", str(out / f"sim_{tag}.json"),
                "--models", f"demo-{tag}",
                "--out", str(out / f"sim_{tag}"),
            ]
        )
    # merge the two logs so ablate/audit see both models in one file
    merged = out / "predictions.csv"
    null_lines = (out / "sim_null" / "predictions.csv").read_text().splitlines()
    biased_lines = (out / "sim_biased" / "predictions.csv").read_text().splitlines()
    merged.write_text("\n".join(null_lines + biased_lines[1:]) + "\n")

    run(
        [
            "ablate",
            "--manifest", str(manifest_path),
            "--predictions", str(merged),
            "--match-table", table,
            "--variant", "initial",
            "--out", str(out / "ablate"),
        ]
    )
    run(
        [
            "select-best",
            "--manifest", str(manifest_path),
            "--ablation", str(out / "ablate" / "ablation.json"),
            "--out", str(out / "best"),
        ]
    )
    run(
        [
            "audit",
            "--manifest", str(manifest_path),
            "--predictions", str(merged),
            "--match-table", table,
            "--best", str(out / "best" / "best.json"),
            "--models", "demo-null,demo-biased",
            "--permutations", str(args.permutations),
            "--seed", str(args.seed),
            "--out", str(out / "audit"),
        ]
    )
    run(
        [
            "report",
            "--ablation", str(out / "ablate" / "ablation.json"),
            "--group-axis", "action",
            "--series-axis", "viewpoint",
            "--out", str(out / "figures"),
        ]
    )

    for tag in ("null", "biased"):
        report = json.loads(
            (out / "audit" / f"demo-{tag}" / "significance.json").read_text()
        )
        flagged = [
            f"{p['tone_1']}-{p['tone_2']}"
            for p in report["pairs"]
            if p["significant_adjusted"]
        ]
        print(f"demo-{tag}: {len(flagged)} adjusted-significant pairs "
              + (f"-> {', '.join(flagged)}" if flagged else ""))
    print(f"artifacts under {out}/")
    return 0


if __name__ == "__main__":
    sys.exit(main())
