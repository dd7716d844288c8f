"""Render-job expansion and best-setting selection/filtering.

``expand_jobs`` turns a factor space into the full list of clips to render.
After the viewpoint/background ablation, ``select_best_settings`` picks the
per-action setting with the highest mean accuracy across the audited models
and ``filter_to_best`` restricts a manifest to that bias-evaluation subset.
"""
from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass
from itertools import product
from typing import TYPE_CHECKING

from typing import Mapping

from .errors import ValidationError
from .manifest import (
    AttributeTuple,
    FactorSpace,
    Manifest,
    ValidationReport,
    _infer_space,
)

if TYPE_CHECKING:
    from .metrics import AblationTable

PLACEHOLDERS = ("action", "motion_id", "skin_tone", "viewpoint", "background")


@dataclass(frozen=True)
class RenderJob:
    job_id: str
    action: str
    motion_id: str
    skin_tone: str
    viewpoint: str
    background: str
    output_path: str


def expand_jobs(space: FactorSpace, path_template: str) -> tuple[RenderJob, ...]:
    """One job per Cartesian tuple, ordered lexicographically over the attributes.

    The template must reference all five placeholders so every output path is
    distinct.
    """
    for name in PLACEHOLDERS:
        if "{" + name + "}" not in path_template:
            raise ValidationError(f"path template missing placeholder {{{name}}}")
    space.require_nonempty()
    jobs = []
    seen_paths: set[str] = set()
    for idx, (action, motion, tone, viewpoint, background) in enumerate(
        product(
            sorted(space.actions),
            sorted(space.motion_ids),
            sorted(t.value for t in space.skin_tones),
            sorted(space.viewpoints),
            sorted(space.backgrounds),
        )
    ):
        try:
            output_path = path_template.format(
                action=action,
                motion_id=motion,
                skin_tone=tone,
                viewpoint=viewpoint,
                background=background,
            )
        except (KeyError, IndexError) as exc:
            raise ValidationError(f"unknown placeholder in path template: {exc}") from None
        if output_path in seen_paths:
            raise ValidationError(f"path template collides on {output_path!r}")
        seen_paths.add(output_path)
        jobs.append(
            RenderJob(
                job_id=f"job-{idx:06d}",
                action=action,
                motion_id=motion,
                skin_tone=tone,
                viewpoint=viewpoint,
                background=background,
                output_path=output_path,
            )
        )
    return tuple(jobs)


def jobs_to_json(jobs: tuple[RenderJob, ...]) -> str:
    payload = [
        {
            "job_id": j.job_id,
            "action": j.action,
            "motion_id": j.motion_id,
            "skin_tone": j.skin_tone,
            "viewpoint": j.viewpoint,
            "background": j.background,
            "output_path": j.output_path,
        }
        for j in jobs
    ]
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def jobs_to_csv(jobs: tuple[RenderJob, ...]) -> str:
    lines = ["job_id,action,motion_id,skin_tone,viewpoint,background,output_path"]
    for j in jobs:
        lines.append(
            ",".join(
                (j.job_id, j.action, j.motion_id, j.skin_tone, j.viewpoint,
                 j.background, j.output_path)
            )
        )
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class BestSetting:
    viewpoint: str
    background: str
    mean_accuracy: float


@dataclass(frozen=True)
class BestSettings:
    """Per action, the (viewpoint, background) maximizing mean model accuracy."""

    entries: Mapping[str, BestSetting]

    def to_json(self) -> str:
        payload = {
            action: {
                "viewpoint": s.viewpoint,
                "background": s.background,
                "mean_accuracy": s.mean_accuracy,
            }
            for action, s in self.entries.items()
        }
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "BestSettings":
        payload = json.loads(text)
        return cls(
            entries={
                action: BestSetting(
                    viewpoint=s["viewpoint"],
                    background=s["background"],
                    mean_accuracy=float(s["mean_accuracy"]),
                )
                for action, s in payload.items()
            }
        )


def _extreme_settings(ablation: "AblationTable", minimize: bool) -> BestSettings:
    if tuple(ablation.group_by) != ("action", "viewpoint", "background"):
        raise ValidationError(
            "setting selection needs a table grouped by action,viewpoint,background"
        )
    models = sorted({key[0] for key in ablation.cells})
    actions = sorted({key[1] for key in ablation.cells})
    viewpoints = sorted({key[2] for key in ablation.cells})
    backgrounds = sorted({key[3] for key in ablation.cells})
    if not models:
        raise ValidationError("empty ablation table")
    entries = {}
    for action in actions:
        chosen: tuple[float, str, str] | None = None
        for viewpoint, background in product(viewpoints, backgrounds):
            accs = []
            for model in models:
                cell = ablation.cells.get((model, action, viewpoint, background))
                if cell is None:
                    raise ValidationError(
                        f"no predictions for cell (action={action}, viewpoint={viewpoint}, "
                        f"background={background}, model={model})"
                    )
                accs.append(cell.accuracy)
            mean_acc = sum(accs) / len(accs)
            # strict comparison keeps the lexicographically first argopt
            if chosen is None:
                chosen = (mean_acc, viewpoint, background)
            elif (mean_acc < chosen[0]) if minimize else (mean_acc > chosen[0]):
                chosen = (mean_acc, viewpoint, background)
        assert chosen is not None
        entries[action] = BestSetting(
            viewpoint=chosen[1], background=chosen[2], mean_accuracy=chosen[0]
        )
    return BestSettings(entries=entries)


def select_best_settings(ablation: "AblationTable") -> BestSettings:
    """Pick, per action, the setting cell with the highest mean accuracy across models.

    Ties break toward the lexicographically smallest (viewpoint, background).
    Every (model, action, viewpoint, background) cell must be present: an
    absent cell means no predictions were logged for it.
    """
    return _extreme_settings(ablation, minimize=False)


def select_worst_settings(ablation: "AblationTable") -> BestSettings:
    """Mirror of :func:`select_best_settings` minimizing mean accuracy."""
    return _extreme_settings(ablation, minimize=True)


def filter_to_best(manifest: Manifest, best: BestSettings) -> Manifest:
    """Keep only records rendered at their action's best setting."""
    for action in manifest.space.actions:
        if action not in best.entries:
            raise ValidationError(f"best settings missing action {action!r}")
    kept = tuple(
        rec
        for rec in manifest.records
        if (rec.viewpoint, rec.background)
        == (best.entries[rec.action].viewpoint, best.entries[rec.action].background)
    )
    return Manifest(records=kept, space=_infer_space(kept))


def validate_best_subset(filtered: Manifest, best: BestSettings) -> ValidationReport:
    """Completeness of a best-setting subset over the remaining dimensions.

    Per action the setting is fixed, so the expected product is
    motion_ids x skin_tones at that action's best (viewpoint, background).
    """
    counts = Counter(rec.attribute_tuple() for rec in filtered.records)
    expected: set[AttributeTuple] = set()
    for action in filtered.space.actions:
        setting = best.entries[action]
        for motion in filtered.space.motion_ids:
            for tone in filtered.space.skin_tones:
                expected.add(
                    (action, motion, tone.value, setting.viewpoint, setting.background)
                )
    stray = set(counts) - expected
    if stray:
        raise ValidationError(
            f"manifest not filtered to best settings: {sorted(stray)[0]} and "
            f"{len(stray) - 1} more records sit outside their action's best cell"
        )
    missing = tuple(sorted(expected - set(counts)))
    duplicated = tuple(sorted(t for t, c in counts.items() if c > 1))
    return ValidationReport(
        complete=not missing and not duplicated,
        missing=missing,
        duplicated=duplicated,
    )
