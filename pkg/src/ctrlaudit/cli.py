"""Command-line entry point: the audit workflow as composable subcommands.

Every subcommand reads inputs named by flags (or a JSON config file; flags
win), writes machine-readable artifacts into ``--out``, and prints a short
human summary to stdout. Exit codes: 0 success, 1 validation failure,
2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path

from . import __version__
from .errors import AuditError, ConfigError, ValidationError
from .jobgen import (
    BestSettings,
    expand_jobs,
    filter_to_best,
    jobs_to_csv,
    jobs_to_json,
    select_best_settings,
    select_worst_settings,
    validate_best_subset,
)
from .labelmatch import EmbeddingTable, MatchTable, Vocabulary, match_lexical, match_semantic
from .manifest import (
    DEFAULT_PATH_TEMPLATE,
    FactorSpace,
    Manifest,
    group_motions,
    parse_manifest,
    serialize_manifest,
    validate_factorial,
)
from .metrics import (
    AblationTable,
    accuracy,
    best_worst_summary,
    divergence_by_action,
    divergence_matrix,
    error_matrix,
    load_predictions,
)
from .report import ReportBundle, render_grouped_bars, render_heatmap
from .rng import derive_seed
from .simulator import SimulatorConfig, simulate
from .stats import PermutationConfig, audit_model

SEED_ENV_VAR = "CTRL_AUDIT_SEED"


def _read_bytes(path: str) -> bytes:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"input file not found: {path}")
    return p.read_bytes()


def _read_text(path: str) -> str:
    return _read_bytes(path).decode("utf-8")


def _write_bytes(outdir: Path, name: str, data: bytes) -> Path:
    outdir.mkdir(parents=True, exist_ok=True)
    path = outdir / name
    path.write_bytes(data)
    return path


class Resolver:
    """Merge CLI flags over config-file values; track inputs for the digest."""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.config: dict = {}
        if getattr(args, "config", None):
            try:
                self.config = json.loads(_read_text(args.config))
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config file is not valid JSON: {exc}") from None
            if not isinstance(self.config, dict):
                raise ConfigError("config file must hold a JSON object")
        self.params: dict = {}
        self.input_digests: dict[str, str] = {}

    def get(self, key: str, default=None, required: bool = False):
        value = getattr(self.args, key, None)
        if value is None:
            value = self.config.get(key, default)
        if value is None and required:
            raise ConfigError(f"missing required option --{key.replace('_', '-')}")
        self.params[key] = value
        return value

    def seed(self) -> int:
        value = self.get("seed")
        if value is None:
            env = os.environ.get(SEED_ENV_VAR)
            value = int(env) if env is not None else 0
        value = int(value)
        self.params["seed"] = value
        return value

    def note_input(self, name: str, data: bytes) -> None:
        self.input_digests[name] = hashlib.sha256(data).hexdigest()

    def config_digest(self) -> str:
        """Digest over resolved parameters and input file contents.

        Input files enter by content hash, not by path, so the digest is
        stable across working directories. Execution-resource knobs (workers,
        output directory) are excluded: they must not change any artifact.
        """
        payload = {
            "params": {
                k: v for k, v in sorted(self.params.items()) if k not in ("out", "workers")
            },
            "inputs": dict(sorted(self.input_digests.items())),
        }
        blob = json.dumps(payload, sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()

    def metadata(self, subcommand: str) -> dict:
        return {
            "tool": "ctrl-audit",
            "version": __version__,
            "subcommand": subcommand,
            "params": {
                k: v for k, v in sorted(self.params.items()) if k not in ("out", "workers")
            },
            "inputs": dict(sorted(self.input_digests.items())),
            "config_digest": self.config_digest(),
        }


def _load_manifest(res: Resolver) -> Manifest:
    path = res.get("manifest", required=True)
    data = _read_bytes(path)
    res.note_input("manifest", data)
    return parse_manifest(data)


def _load_prediction_log(res: Resolver):
    path = res.get("predictions", required=True)
    data = _read_bytes(path)
    res.note_input("predictions", data)
    return load_predictions(data)


def _load_match_table(res: Resolver, required: bool) -> MatchTable | None:
    path = res.get("match_table", required=required)
    if path is None:
        return None
    data = _read_bytes(path)
    res.note_input("match_table", data)
    return MatchTable.from_json(data.decode("utf-8"))


def _model_list(res: Resolver, preds) -> list[str]:
    raw = res.get("models")
    if raw is None:
        models = list(preds.model_ids())
        if not models:
            raise ValidationError("prediction log contains no models")
        return models
    if isinstance(raw, str):
        return [m.strip() for m in raw.split(",") if m.strip()]
    return list(raw)


def _write_run_json(res: Resolver, outdir: Path, subcommand: str, extra: dict | None = None) -> None:
    payload = res.metadata(subcommand)
    if extra:
        payload.update(extra)
    _write_bytes(outdir, "run.json", (json.dumps(payload, indent=2, sort_keys=True) + "\n").encode("utf-8"))


def cmd_validate(args: argparse.Namespace) -> int:
    res = Resolver(args)
    outdir = Path(res.get("out", required=True))
    manifest = _load_manifest(res)
    report = validate_factorial(manifest)
    _write_bytes(outdir, "validation.json", report.to_json().encode("utf-8"))
    _write_run_json(res, outdir, "validate")
    sizes = manifest.space.sizes()
    print(
        f"manifest: {len(manifest)} records, factor sizes "
        f"(tones={sizes[0]}, actions={sizes[1]}, motions={sizes[2]}, "
        f"viewpoints={sizes[3]}, backgrounds={sizes[4]})"
    )
    print(
        f"complete={report.complete} missing={len(report.missing)} "
        f"duplicated={len(report.duplicated)}"
    )
    return 0 if report.complete else 1


def cmd_match_labels(args: argparse.Namespace) -> int:
    res = Resolver(args)
    outdir = Path(res.get("out", required=True))
    source_text = _read_text(res.get("source_vocab", required=True))
    target_text = _read_text(res.get("target_vocab", required=True))
    res.note_input("source_vocab", source_text.encode("utf-8"))
    res.note_input("target_vocab", target_text.encode("utf-8"))
    source = Vocabulary.from_text("source", source_text)
    target = Vocabulary.from_text("target", target_text)
    k = int(res.get("match_k", 1))
    threshold = float(res.get("match_threshold", 0.6))
    embeddings_path = res.get("embeddings")
    backend = res.get("match_backend") or ("semantic" if embeddings_path else "lexical")
    res.params["match_backend"] = backend
    if backend == "semantic":
        if embeddings_path is None:
            raise ConfigError("semantic matching needs --embeddings")
        emb_text = _read_text(embeddings_path)
        res.note_input("embeddings", emb_text.encode("utf-8"))
        table = match_semantic(source, target, EmbeddingTable.from_csv(emb_text), k, threshold)
    elif backend == "lexical":
        table = match_lexical(source, target, k, threshold)
    else:
        raise ConfigError(f"unknown match backend {backend!r}")
    _write_bytes(outdir, "match_table.json", table.to_json().encode("utf-8"))
    _write_run_json(res, outdir, "match-labels")
    print(
        f"matched {len(table.entries)}/{len(source.labels)} source labels "
        f"({backend}, k={k}, threshold={threshold}); unmatched: "
        + (", ".join(table.unmatched) if table.unmatched else "none")
    )
    return 0


def cmd_expand_jobs(args: argparse.Namespace) -> int:
    res = Resolver(args)
    outdir = Path(res.get("out", required=True))
    space_opt = res.get("space")
    manifest_path = res.get("manifest")
    if space_opt and manifest_path:
        raise ConfigError("give either --space or --manifest, not both")
    if space_opt == "default":
        space = FactorSpace.default()
    elif space_opt:
        text = _read_text(space_opt)
        res.note_input("space", text.encode("utf-8"))
        space = FactorSpace.from_json(text)
    elif manifest_path:
        space = _load_manifest(res).space
    else:
        raise ConfigError("expand-jobs needs --space (default|file.json) or --manifest")
    template = res.get("path_template", DEFAULT_PATH_TEMPLATE)
    jobs = expand_jobs(space, template)
    _write_bytes(outdir, "jobs.json", jobs_to_json(jobs).encode("utf-8"))
    _write_bytes(outdir, "jobs.csv", jobs_to_csv(jobs).encode("utf-8"))
    _write_run_json(res, outdir, "expand-jobs", extra={"job_count": len(jobs)})
    print(f"expanded {len(jobs)} render jobs")
    return 0


def cmd_ablate(args: argparse.Namespace) -> int:
    res = Resolver(args)
    outdir = Path(res.get("out", required=True))
    manifest = _load_manifest(res)
    preds = _load_prediction_log(res)
    table = _load_match_table(res, required=True)
    group_by = tuple((res.get("group_by") or "action,viewpoint,background").split(","))
    variant = res.get("variant", "initial")
    if variant not in ("initial", "modified", "all"):
        raise ConfigError(f"unknown --variant {variant!r}")
    if variant != "all":
        kept = tuple(rec for rec in manifest.records if rec.variant == variant)
        manifest = Manifest(records=kept, space=manifest.space)
    models = _model_list(res, preds)
    combined: AblationTable | None = None
    for model_id in models:
        part = accuracy(manifest, preds, table, model_id, group_by)
        combined = part if combined is None else combined.merged_with(part)
    assert combined is not None
    _write_bytes(outdir, "ablation.json", combined.to_json().encode("utf-8"))
    _write_bytes(outdir, "ablation.csv", combined.to_csv().encode("utf-8"))
    _write_run_json(res, outdir, "ablate", extra={"models": models, "variant": variant})
    print(
        f"ablation over {len(models)} model(s), {len(combined.cells)} cells, "
        f"group_by={','.join(group_by)}, variant={variant}"
    )
    return 0


def cmd_select_best(args: argparse.Namespace) -> int:
    res = Resolver(args)
    outdir = Path(res.get("out", required=True))
    manifest = _load_manifest(res)
    ablation_text = _read_text(res.get("ablation", required=True))
    res.note_input("ablation", ablation_text.encode("utf-8"))
    table = AblationTable.from_json(ablation_text)
    best = select_best_settings(table)
    worst = select_worst_settings(table)
    summary = best_worst_summary(table, best, worst)
    filtered = filter_to_best(manifest, best)
    report = validate_best_subset(filtered, best)
    _write_bytes(outdir, "best.json", best.to_json().encode("utf-8"))
    _write_bytes(outdir, "worst.json", worst.to_json().encode("utf-8"))
    _write_bytes(
        outdir,
        "best_worst.json",
        (json.dumps(summary, indent=2, sort_keys=True) + "\n").encode("utf-8"),
    )
    _write_bytes(outdir, "filtered_manifest.csv", serialize_manifest(filtered))
    _write_bytes(outdir, "filtered_validation.json", report.to_json().encode("utf-8"))
    _write_run_json(res, outdir, "select-best")
    print(
        f"selected best settings for {len(best.entries)} actions; "
        f"filtered manifest keeps {len(filtered)} records "
        f"(complete={report.complete})"
    )
    return 0


def _by_action_csv(matrices) -> str:
    lines = ["model_id,action,tone_1,tone_2,count,n_groups,rate"]
    for action, matrix in matrices.items():
        rates = matrix.rates
        for i in range(len(matrix.tones)):
            for j in range(i + 1, len(matrix.tones)):
                lines.append(
                    ",".join(
                        (
                            matrix.model_id,
                            action,
                            matrix.tones[i].value,
                            matrix.tones[j].value,
                            str(int(matrix.counts[i, j])),
                            str(matrix.n_groups),
                            repr(float(rates[i, j])),
                        )
                    )
                )
    return "\n".join(lines) + "\n"


def cmd_audit(args: argparse.Namespace) -> int:
    res = Resolver(args)
    outdir = Path(res.get("out", required=True))
    manifest = _load_manifest(res)
    preds = _load_prediction_log(res)
    table = _load_match_table(res, required=False)
    best_path = res.get("best")
    if best_path:
        best_text = _read_text(best_path)
        res.note_input("best", best_text.encode("utf-8"))
        manifest = filter_to_best(manifest, BestSettings.from_json(best_text))
    cfg = PermutationConfig(
        permutations=int(res.get("permutations", 9999)),
        seed=res.seed(),
        alpha=float(res.get("alpha", 0.05)),
    )
    workers = int(res.get("workers") or os.cpu_count() or 1)
    models = _model_list(res, preds)

    groups = group_motions(manifest)
    complete = [g for g in groups if g.complete]
    excluded = len(groups) - len(complete)
    tones = manifest.space.skin_tones
    n_pairs = len(tones) * (len(tones) - 1) // 2
    floor_adjusted = n_pairs / (cfg.permutations + 1)
    if floor_adjusted >= cfg.alpha:
        print(
            f"warning: with P={cfg.permutations} and m={n_pairs} the smallest "
            f"achievable adjusted p is {floor_adjusted:.4f} >= alpha={cfg.alpha}; "
            "no pair can reach adjusted significance (raise --permutations)",
            file=sys.stderr,
        )
    summary = {
        "models": models,
        "groups_total": len(groups),
        "groups_complete": len(complete),
        "groups_excluded_incomplete": excluded,
    }
    digest = res.config_digest()
    any_significant = False
    for model_id in models:
        matrix = divergence_matrix(complete, preds, model_id, tones)
        per_action = divergence_by_action(complete, preds, model_id, tones)
        report = audit_model(complete, preds, model_id, cfg, tones, workers=workers)
        any_significant = any_significant or report.any_significant_adjusted()
        bundle = ReportBundle(
            metadata={
                "tool": "ctrl-audit",
                "version": __version__,
                "subcommand": "audit",
                "model_id": model_id,
                "seed": cfg.seed,
                "permutations": cfg.permutations,
                "alpha": cfg.alpha,
                "config_digest": digest,
                "groups_excluded_incomplete": excluded,
            }
        )
        bundle.add_table("divergence", matrix.to_csv())
        bundle.add_table("divergence_by_action", _by_action_csv(per_action))
        bundle.add_table("significance_raw_grid", report.raw_grid_csv())
        bundle.add_table("significance_adjusted_grid", report.adjusted_grid_csv())
        bundle.add_figure(
            "divergence_heatmap",
            render_heatmap(matrix.rates, tones, "rate", title=f"{model_id}: divergence rate"),
        )
        bundle.add_figure(
            "raw_p_heatmap",
            render_heatmap(
                report.matrix("raw_p"), tones, "raw_p", alpha=cfg.alpha,
                title=f"{model_id}: raw p-values",
            ),
        )
        bundle.add_figure(
            "adjusted_p_heatmap",
            render_heatmap(
                report.matrix("adjusted_p"), tones, "adjusted_p", alpha=cfg.alpha,
                title=f"{model_id}: adjusted p-values",
            ),
        )
        errors = None
        if table is not None:
            errors = error_matrix(complete, preds, table, model_id, tones)
            bundle.add_table("error_matrix", errors.to_csv())
        model_dir = outdir / model_id
        bundle.write(model_dir)
        _write_bytes(model_dir, "divergence.json", matrix.to_json().encode("utf-8"))
        by_action_payload = {
            action: json.loads(m.to_json()) for action, m in per_action.items()
        }
        _write_bytes(
            model_dir,
            "divergence_by_action.json",
            (json.dumps(by_action_payload, indent=2, sort_keys=True) + "\n").encode("utf-8"),
        )
        if errors is not None:
            _write_bytes(model_dir, "error_matrix.json", errors.to_json().encode("utf-8"))
        _write_bytes(model_dir, "significance.json", report.to_json().encode("utf-8"))
        n_sig = sum(1 for r in report.pairs if r.significant_adjusted)
        print(
            f"{model_id}: N={len(complete)} groups, max rate "
            f"{float(matrix.rates.max()):.3f}, adjusted-significant pairs: {n_sig}/{report.m}"
        )
    _write_run_json(res, outdir, "audit", extra=summary)
    if excluded:
        print(f"note: {excluded} incomplete group(s) excluded from N")
    return 0


def cmd_simulate(args: argparse.Namespace) -> int:
    res = Resolver(args)
    outdir = Path(res.get("out", required=True))
    manifest = _load_manifest(res)
    table = _load_match_table(res, required=True)
    sim_text = _read_text(res.get("sim_config", required=True))
    res.note_input("sim_config", sim_text.encode("utf-8"))
    base_cfg = SimulatorConfig.from_json(sim_text)
    seed_override = res.get("seed")
    if seed_override is not None:
        base_cfg = SimulatorConfig(
            seed=int(seed_override),
            base_accuracy=base_cfg.base_accuracy,
            confusion_pool=base_cfg.confusion_pool,
            bias_rules=base_cfg.bias_rules,
            noise=base_cfg.noise,
        )
    models_raw = res.get("models")
    models = (
        [m.strip() for m in models_raw.split(",") if m.strip()]
        if isinstance(models_raw, str)
        else (list(models_raw) if models_raw else ["sim-model"])
    )
    from .metrics import PredictionLog, predictions_to_csv

    all_records = []
    for model_id in models:
        # one independent stream per model, derived from the base seed
        seed = base_cfg.seed if len(models) == 1 else derive_seed(base_cfg.seed, model_id)
        cfg = SimulatorConfig(
            seed=seed,
            base_accuracy=base_cfg.base_accuracy,
            confusion_pool=base_cfg.confusion_pool,
            bias_rules=base_cfg.bias_rules,
            noise=base_cfg.noise,
        )
        all_records.extend(simulate(manifest, table, cfg, model_id=model_id).records)
    log = PredictionLog(all_records)
    _write_bytes(outdir, "predictions.csv", predictions_to_csv(log))
    _write_run_json(res, outdir, "simulate", extra={"models": models})
    print(f"simulated {len(log)} predictions for {len(models)} model(s)")
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    res = Resolver(args)
    outdir = Path(res.get("out", required=True))
    bundle = ReportBundle(metadata=None)  # filled below once inputs are hashed
    rendered = []
    ablation_path = res.get("ablation")
    if ablation_path:
        text = _read_text(ablation_path)
        res.note_input("ablation", text.encode("utf-8"))
        table = AblationTable.from_json(text)
        group_axis = res.get("group_axis", "action")
        series_axis = res.get("series_axis", "viewpoint")
        bundle.add_figure(
            "accuracy_bars",
            render_grouped_bars(table, group_axis, series_axis,
                                title=f"accuracy by {group_axis} / {series_axis}"),
        )
        rendered.append("accuracy_bars")
    divergence_path = res.get("divergence")
    if divergence_path:
        text = _read_text(divergence_path)
        res.note_input("divergence", text.encode("utf-8"))
        payload = json.loads(text)
        from .manifest import SkinTone

        tones = tuple(SkinTone.from_value(v) for v in payload["tones"])
        bundle.add_figure(
            "divergence_heatmap",
            render_heatmap(payload["rates"], tones, "rate",
                           title=f"{payload['model_id']}: divergence rate"),
        )
        rendered.append("divergence_heatmap")
    significance_path = res.get("significance")
    if significance_path:
        text = _read_text(significance_path)
        res.note_input("significance", text.encode("utf-8"))
        payload = json.loads(text)
        from .manifest import SkinTone

        tones = tuple(SkinTone.from_value(v) for v in payload["tones"])
        alpha = float(payload["alpha"])
        n = len(tones)
        for attr in ("raw_p", "adjusted_p"):
            grid = [[1.0] * n for _ in range(n)]
            index = {t.value: i for i, t in enumerate(tones)}
            for pair in payload["pairs"]:
                i, j = index[pair["tone_1"]], index[pair["tone_2"]]
                grid[i][j] = pair[attr]
                grid[j][i] = pair[attr]
            bundle.add_figure(
                f"{attr}_heatmap",
                render_heatmap(grid, tones, attr, alpha=alpha,
                               title=f"{payload['model_id']}: {attr.replace('_', ' ')}"),
            )
            rendered.append(f"{attr}_heatmap")
    if not rendered:
        raise ConfigError("report needs at least one of --ablation/--divergence/--significance")
    bundle.metadata = res.metadata("report")
    bundle.write(outdir)
    print(f"rendered: {', '.join(rendered)}")
    return 0


_SUBCOMMANDS = {
    "validate": cmd_validate,
    "match-labels": cmd_match_labels,
    "expand-jobs": cmd_expand_jobs,
    "ablate": cmd_ablate,
    "select-best": cmd_select_best,
    "audit": cmd_audit,
    "simulate": cmd_simulate,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ctrl-audit",
        description="Counterfactual skin-tone bias audit for action recognition predictions",
    )
    parser.add_argument("--version", action="version", version=f"ctrl-audit {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def add(name: str, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON config file; explicit flags win")
        p.add_argument("--out", help="output directory")
        return p

    p = add("validate", "check factorial completeness of a manifest")
    p.add_argument("--manifest")

    p = add("match-labels", "match source actions to the target model vocabulary")
    p.add_argument("--source-vocab")
    p.add_argument("--target-vocab")
    p.add_argument("--embeddings")
    p.add_argument("--match-backend", choices=("semantic", "lexical"))
    p.add_argument("--match-k", type=int)
    p.add_argument("--match-threshold", type=float)

    p = add("expand-jobs", "expand a factor space into render jobs")
    p.add_argument("--space", help="'default' or a factor-space JSON file")
    p.add_argument("--manifest", help="infer the space from an existing manifest")
    p.add_argument("--path-template")

    p = add("ablate", "accuracy per setting cell from a prediction log")
    p.add_argument("--manifest")
    p.add_argument("--predictions")
    p.add_argument("--match-table")
    p.add_argument("--models")
    p.add_argument("--group-by")
    p.add_argument("--variant", choices=("initial", "modified", "all"))

    p = add("select-best", "pick best settings per action and filter the manifest")
    p.add_argument("--manifest")
    p.add_argument("--ablation")

    p = add("audit", "divergence + significance + report per model")
    p.add_argument("--manifest")
    p.add_argument("--predictions")
    p.add_argument("--match-table")
    p.add_argument("--best")
    p.add_argument("--models")
    p.add_argument("--permutations", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--workers", type=int)

    p = add("simulate", "generate a synthetic prediction log")
    p.add_argument("--manifest")
    p.add_argument("--match-table")
    p.add_argument("--sim-config")
    p.add_argument("--models")
    p.add_argument("--seed", type=int)

    p = add("report", "render figures from stored audit artifacts")
    p.add_argument("--ablation")
    p.add_argument("--divergence")
    p.add_argument("--significance")
    p.add_argument("--group-axis")
    p.add_argument("--series-axis")

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handler = _SUBCOMMANDS[args.subcommand]
    try:
        return handler(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except AuditError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
