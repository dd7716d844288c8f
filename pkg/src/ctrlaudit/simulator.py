"""Seeded model-of-a-model: synthetic prediction logs with known bias structure.

The simulator is the statistical oracle for the audit pipeline. Base labels
are drawn once per motion group, so with no bias rules and no noise all tones
inside a group agree and every divergence matrix is exactly zero (a sharp
negative control). A tone-independent per-video ``noise`` jitter produces an
exchangeable-but-nonzero null for calibrating p-values, and bias rules inject
known per-tone label flips for power checks.

All draws come from streams keyed by (seed, purpose, object identity), so a
config is a pure function from manifest to log.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping

from .errors import ValidationError
from .labelmatch import MatchTable, normalize_label
from .manifest import Manifest, SkinTone, group_motions
from .metrics import PredictionLog, PredictionRecord
from .rng import keyed_generator


@dataclass(frozen=True)
class BiasRule:
    """Flip one tone's label to ``flip_target`` with some probability.

    ``action`` may be a specific action or ``"*"`` for all actions. A rule
    affecting a pair of tones is expressed as two single-tone rules.
    """

    skin_tone: SkinTone
    action: str
    flip_probability: float
    flip_target: str

    def __post_init__(self) -> None:
        if not 0.0 <= self.flip_probability <= 1.0:
            raise ValidationError(
                f"flip_probability {self.flip_probability} outside [0, 1]"
            )
        object.__setattr__(self, "flip_target", normalize_label(self.flip_target))


@dataclass(frozen=True)
class SimulatorConfig:
    seed: int
    base_accuracy: float | Mapping[str, float] = 0.7
    confusion_pool: Mapping[str, tuple[str, ...]] = field(default_factory=dict)
    bias_rules: tuple[BiasRule, ...] = ()
    noise: float = 0.0

    def __post_init__(self) -> None:
        accuracies = (
            self.base_accuracy.values()
            if isinstance(self.base_accuracy, Mapping)
            else [self.base_accuracy]
        )
        for acc in accuracies:
            if not 0.0 <= acc <= 1.0:
                raise ValidationError(f"base_accuracy {acc} outside [0, 1]")
        if not 0.0 <= self.noise <= 1.0:
            raise ValidationError(f"noise {self.noise} outside [0, 1]")

    def accuracy_for(self, action: str) -> float:
        if isinstance(self.base_accuracy, Mapping):
            try:
                return self.base_accuracy[action]
            except KeyError:
                raise ValidationError(
                    f"no base_accuracy configured for action {action!r}"
                ) from None
        return self.base_accuracy

    def pool_for(self, action: str) -> tuple[str, ...]:
        return tuple(self.confusion_pool.get(action, ()))

    @classmethod
    def from_json(cls, text: str) -> "SimulatorConfig":
        payload = json.loads(text)
        base = payload.get("base_accuracy", 0.7)
        if isinstance(base, dict):
            base = {action: float(v) for action, v in base.items()}
        else:
            base = float(base)
        rules = tuple(
            BiasRule(
                skin_tone=SkinTone.from_value(rule["skin_tone"]),
                action=rule.get("action", "*"),
                flip_probability=float(rule["flip_probability"]),
                flip_target=rule["flip_target"],
            )
            for rule in payload.get("bias_rules", ())
        )
        pools = {
            action: tuple(normalize_label(label) for label in labels)
            for action, labels in payload.get("confusion_pool", {}).items()
        }
        return cls(
            seed=int(payload["seed"]),
            base_accuracy=base,
            confusion_pool=pools,
            bias_rules=rules,
            noise=float(payload.get("noise", 0.0)),
        )


def simulate(
    manifest: Manifest,
    table: MatchTable,
    cfg: SimulatorConfig,
    model_id: str = "sim-model",
) -> PredictionLog:
    """Emit one rank-1 prediction per manifest video under the configured behavior.

    Draw structure, per motion group g and member video v:

    1. base label, keyed (seed, "base", g): the action's matched label with
       probability base_accuracy, else uniform over the confusion pool;
    2. noise, keyed (seed, "noise", v): with probability ``noise`` replace the
       label with a uniform confusion-pool draw (tone-independent, hence the
       within-group exchangeable null);
    3. bias rules in order, keyed (seed, "bias", rule index, v): with the
       rule's probability set the label to its flip target.
    """
    groups = group_motions(manifest)
    records = []
    for group in groups:
        action = group.action
        matched = table.matched_label(action)
        pool = cfg.pool_for(action)
        acc = cfg.accuracy_for(action)
        if not pool and (acc < 1.0 or cfg.noise > 0.0):
            raise ValidationError(
                f"action {action!r} needs a confusion pool "
                "(base_accuracy < 1 or noise > 0)"
            )
        base_rng = keyed_generator(cfg.seed, "base", group.identity_token)
        if base_rng.random() < acc:
            base = matched
        else:
            base = pool[int(base_rng.integers(len(pool)))]
        for tone, video_id in group.members.items():
            label = base
            if cfg.noise > 0.0:
                noise_rng = keyed_generator(cfg.seed, "noise", video_id)
                if noise_rng.random() < cfg.noise:
                    label = pool[int(noise_rng.integers(len(pool)))]
            for rule_index, rule in enumerate(cfg.bias_rules):
                if rule.skin_tone is tone and rule.action in ("*", action):
                    rule_rng = keyed_generator(cfg.seed, "bias", rule_index, video_id)
                    if rule_rng.random() < rule.flip_probability:
                        label = rule.flip_target
            records.append(
                PredictionRecord(
                    video_id=video_id,
                    model_id=model_id,
                    rank=1,
                    label=label,
                    score=1.0,
                )
            )
    records.sort(key=lambda rec: rec.video_id)
    return PredictionLog(records)
