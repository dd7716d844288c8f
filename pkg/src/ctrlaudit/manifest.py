"""Factorial video-manifest parsing, validation, and motion grouping.

The manifest is a UTF-8 CSV with one row per rendered clip:

    video_id,path,action,motion_id,skin_tone,viewpoint,background,variant

Identifiers are restricted to the alphabet ``[a-z0-9_./-]`` so the file
round-trips byte-exactly without quoting. ``skin_tone`` is a closed
enumeration of seven values; ``variant`` is ``initial`` or ``modified``.
"""
from __future__ import annotations

import csv
import io
import json
import re
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from itertools import product
from typing import Iterable, Mapping

from .errors import ManifestParseError, ValidationError


class SkinTone(Enum):
    """The seven skin-texture categories, in canonical reporting order."""

    WHITE = "white"
    AFRICAN = "african"
    ASIAN = "asian"
    HISPANIC = "hispanic"
    INDIAN = "indian"
    MIDDLE_EASTERN = "middle_eastern"
    SOUTH_EAST_ASIAN = "south_east_asian"

    @classmethod
    def from_value(cls, value: str) -> "SkinTone":
        try:
            return cls(value)
        except ValueError:
            known = ", ".join(t.value for t in cls)
            raise ValidationError(
                f"unknown skin_tone {value!r} (expected one of: {known})"
            ) from None

    def __lt__(self, other: "SkinTone") -> bool:
        return self.value < other.value


#: Canonical tone order used for every matrix row/column and pair grid.
CANONICAL_TONES: tuple[SkinTone, ...] = tuple(SkinTone)

_TONE_INDEX = {tone: i for i, tone in enumerate(CANONICAL_TONES)}


def canonical_sorted(tones: Iterable[SkinTone]) -> tuple[SkinTone, ...]:
    """Sort tones by their canonical reporting order."""
    return tuple(sorted(tones, key=_TONE_INDEX.__getitem__))


VARIANTS = ("initial", "modified")

MANIFEST_HEADER = (
    "video_id",
    "path",
    "action",
    "motion_id",
    "skin_tone",
    "viewpoint",
    "background",
    "variant",
)

_IDENTIFIER = re.compile(r"[a-z0-9_./-]+\Z")

#: Twenty single-actor action labels used by the default factor space.
DEFAULT_ACTIONS = (
    "cartwheel",
    "celebrate",
    "climb",
    "cry",
    "dance",
    "drink",
    "golf",
    "jog",
    "jump",
    "kick",
    "lunge",
    "push_up",
    "run",
    "sit",
    "squat",
    "stretch",
    "throw",
    "walk",
    "wave",
    "yoga",
)

DEFAULT_VIEWPOINTS = ("near", "far")
DEFAULT_BACKGROUNDS = ("autumn", "konzerthaus", "stadium")

DEFAULT_PATH_TEMPLATE = (
    "videos/{action}/{action}_{motion_id}_{skin_tone}_{viewpoint}_{background}.mp4"
)


def _check_unique(name: str, values: Iterable[object]) -> None:
    values = list(values)
    if len(set(values)) != len(values):
        raise ValidationError(f"duplicate {name} levels in factor space")


@dataclass(frozen=True)
class FactorSpace:
    """Levels of the five controlled dimensions.

    Motion levels are shared identifiers across actions (variant indices),
    so the full design is the plain Cartesian product of the five lists.
    """

    skin_tones: tuple[SkinTone, ...]
    actions: tuple[str, ...]
    motion_ids: tuple[str, ...]
    viewpoints: tuple[str, ...]
    backgrounds: tuple[str, ...]

    def __post_init__(self) -> None:
        _check_unique("skin_tone", self.skin_tones)
        _check_unique("action", self.actions)
        _check_unique("motion_id", self.motion_ids)
        _check_unique("viewpoint", self.viewpoints)
        _check_unique("background", self.backgrounds)

    @property
    def motions_per_action(self) -> int:
        return len(self.motion_ids)

    def sizes(self) -> tuple[int, int, int, int, int]:
        return (
            len(self.skin_tones),
            len(self.actions),
            len(self.motion_ids),
            len(self.viewpoints),
            len(self.backgrounds),
        )

    def require_nonempty(self) -> None:
        for name, levels in (
            ("skin_tones", self.skin_tones),
            ("actions", self.actions),
            ("motion_ids", self.motion_ids),
            ("viewpoints", self.viewpoints),
            ("backgrounds", self.backgrounds),
        ):
            if not levels:
                raise ValidationError(f"factor {name} has no levels")

    @classmethod
    def default(cls) -> "FactorSpace":
        """The 7 x 20 x 10 x 2 x 3 default design (8,400 combinations)."""
        return cls(
            skin_tones=CANONICAL_TONES,
            actions=DEFAULT_ACTIONS,
            motion_ids=tuple(f"m{i:02d}" for i in range(10)),
            viewpoints=DEFAULT_VIEWPOINTS,
            backgrounds=DEFAULT_BACKGROUNDS,
        )

    def to_json(self) -> str:
        payload = {
            "skin_tones": [t.value for t in self.skin_tones],
            "actions": list(self.actions),
            "motion_ids": list(self.motion_ids),
            "viewpoints": list(self.viewpoints),
            "backgrounds": list(self.backgrounds),
        }
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "FactorSpace":
        payload = json.loads(text)
        try:
            return cls(
                skin_tones=tuple(SkinTone.from_value(v) for v in payload["skin_tones"]),
                actions=tuple(payload["actions"]),
                motion_ids=tuple(payload["motion_ids"]),
                viewpoints=tuple(payload["viewpoints"]),
                backgrounds=tuple(payload["backgrounds"]),
            )
        except KeyError as exc:
            raise ValidationError(f"factor space JSON missing key {exc}") from None


@dataclass(frozen=True)
class VideoRecord:
    """One rendered clip, identified by its controlled attributes."""

    video_id: str
    path: str
    action: str
    motion_id: str
    skin_tone: SkinTone
    viewpoint: str
    background: str
    variant: str

    def attribute_tuple(self) -> tuple[str, str, str, str, str]:
        """The factorial identity (action, motion, tone, viewpoint, background)."""
        return (
            self.action,
            self.motion_id,
            self.skin_tone.value,
            self.viewpoint,
            self.background,
        )


def _infer_space(records: Iterable[VideoRecord]) -> FactorSpace:
    tones: set[SkinTone] = set()
    actions: set[str] = set()
    motions: set[str] = set()
    viewpoints: set[str] = set()
    backgrounds: set[str] = set()
    for rec in records:
        tones.add(rec.skin_tone)
        actions.add(rec.action)
        motions.add(rec.motion_id)
        viewpoints.add(rec.viewpoint)
        backgrounds.add(rec.background)
    return FactorSpace(
        skin_tones=canonical_sorted(tones),
        actions=tuple(sorted(actions)),
        motion_ids=tuple(sorted(motions)),
        viewpoints=tuple(sorted(viewpoints)),
        backgrounds=tuple(sorted(backgrounds)),
    )


@dataclass
class Manifest:
    """Parsed manifest: records in file order plus the inferred factor space.

    Treated as immutable after construction; safe to share across threads.
    """

    records: tuple[VideoRecord, ...]
    space: FactorSpace

    @cached_property
    def by_id(self) -> Mapping[str, VideoRecord]:
        return {rec.video_id: rec for rec in self.records}

    def __len__(self) -> int:
        return len(self.records)


def _validate_identifier(name: str, value: str, line: int) -> str:
    if not _IDENTIFIER.match(value):
        raise ValidationError(
            f"line {line}: field {name} value {value!r} outside the "
            "identifier alphabet [a-z0-9_./-]"
        )
    return value


def parse_manifest(data: bytes | str) -> Manifest:
    """Parse manifest CSV bytes into records plus an inferred factor space.

    Hard errors: wrong header, row arity mismatch (with line number), any
    identifier outside the restricted alphabet, unknown skin_tone or variant,
    and duplicate video_id. Duplicate attribute tuples are tolerated here and
    reported by :func:`validate_factorial`.
    """
    if isinstance(data, bytes):
        text = data.decode("utf-8")
    else:
        text = data
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ManifestParseError("empty manifest: missing header row", line=1) from None
    if tuple(header) != MANIFEST_HEADER:
        raise ManifestParseError(
            f"bad header {header!r}, expected {','.join(MANIFEST_HEADER)}", line=1
        )

    records: list[VideoRecord] = []
    seen_ids: set[str] = set()
    for line, row in enumerate(reader, start=2):
        if not row:
            continue  # tolerate a trailing blank line
        if len(row) != len(MANIFEST_HEADER):
            raise ManifestParseError(
                f"expected {len(MANIFEST_HEADER)} fields, found {len(row)}", line=line
            )
        video_id, path, action, motion_id, tone, viewpoint, background, variant = row
        for name, value in (
            ("video_id", video_id),
            ("path", path),
            ("action", action),
            ("motion_id", motion_id),
            ("viewpoint", viewpoint),
            ("background", background),
        ):
            _validate_identifier(name, value, line)
        if variant not in VARIANTS:
            raise ValidationError(
                f"line {line}: unknown variant {variant!r} (expected initial|modified)"
            )
        if video_id in seen_ids:
            raise ValidationError(f"duplicate video_id {video_id!r}")
        seen_ids.add(video_id)
        records.append(
            VideoRecord(
                video_id=video_id,
                path=path,
                action=action,
                motion_id=motion_id,
                skin_tone=SkinTone.from_value(tone),
                viewpoint=viewpoint,
                background=background,
                variant=variant,
            )
        )
    recs = tuple(records)
    return Manifest(records=recs, space=_infer_space(recs))


def serialize_manifest(manifest: Manifest) -> bytes:
    """Write the manifest back to canonical CSV bytes (LF, no quoting)."""
    lines = [",".join(MANIFEST_HEADER)]
    for rec in manifest.records:
        lines.append(
            ",".join(
                (
                    rec.video_id,
                    rec.path,
                    rec.action,
                    rec.motion_id,
                    rec.skin_tone.value,
                    rec.viewpoint,
                    rec.background,
                    rec.variant,
                )
            )
        )
    return ("\n".join(lines) + "\n").encode("utf-8")


AttributeTuple = tuple[str, str, str, str, str]


@dataclass(frozen=True)
class ValidationReport:
    """Factorial completeness over (action, motion_id, skin_tone, viewpoint, background)."""

    complete: bool
    missing: tuple[AttributeTuple, ...]
    duplicated: tuple[AttributeTuple, ...]

    def to_json(self) -> str:
        payload = {
            "complete": self.complete,
            "missing": [list(t) for t in self.missing],
            "duplicated": [list(t) for t in self.duplicated],
        }
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def validate_factorial(manifest: Manifest) -> ValidationReport:
    """Check that every tuple of the inferred factor product appears exactly once.

    The ``variant`` column is metadata, not a factorial dimension, so it does
    not participate in the product.
    """
    counts = Counter(rec.attribute_tuple() for rec in manifest.records)
    space = manifest.space
    expected = {
        (action, motion, tone.value, viewpoint, background)
        for action in space.actions
        for motion in space.motion_ids
        for tone in space.skin_tones
        for viewpoint in space.viewpoints
        for background in space.backgrounds
    }
    missing = tuple(sorted(expected - set(counts)))
    duplicated = tuple(sorted(t for t, c in counts.items() if c > 1))
    return ValidationReport(
        complete=not missing and not duplicated,
        missing=missing,
        duplicated=duplicated,
    )


@dataclass(frozen=True)
class MotionGroup:
    """Videos sharing one motion in one setting, differing only in skin tone."""

    action: str
    motion_id: str
    viewpoint: str
    background: str
    members: Mapping[SkinTone, str]  # tone -> video_id
    complete: bool

    @property
    def key(self) -> tuple[str, str, str, str]:
        return (self.action, self.motion_id, self.viewpoint, self.background)

    @property
    def identity_token(self) -> str:
        """Stable identity used to key permutation streams: sorted member ids."""
        return "|".join(sorted(self.members.values()))

    def tones(self) -> tuple[SkinTone, ...]:
        return canonical_sorted(self.members)


def group_motions(manifest: Manifest) -> tuple[MotionGroup, ...]:
    """Partition records into motion groups keyed by (action, motion, viewpoint, background).

    A group is complete when it covers every skin tone of the manifest's
    factor space. Two records claiming the same tone inside one group violate
    attribute-tuple uniqueness and raise.
    """
    buckets: dict[tuple[str, str, str, str], dict[SkinTone, str]] = {}
    for rec in manifest.records:
        key = (rec.action, rec.motion_id, rec.viewpoint, rec.background)
        members = buckets.setdefault(key, {})
        if rec.skin_tone in members:
            raise ValidationError(
                f"group {key} has two records for tone {rec.skin_tone.value!r}: "
                f"{members[rec.skin_tone]!r} and {rec.video_id!r}"
            )
        members[rec.skin_tone] = rec.video_id
    full = set(manifest.space.skin_tones)
    groups = []
    for key in sorted(buckets):
        members = buckets[key]
        groups.append(
            MotionGroup(
                action=key[0],
                motion_id=key[1],
                viewpoint=key[2],
                background=key[3],
                members=dict(sorted(members.items(), key=lambda kv: _TONE_INDEX[kv[0]])),
                complete=set(members) == full,
            )
        )
    return tuple(groups)


def build_full_manifest(
    space: FactorSpace,
    path_template: str = DEFAULT_PATH_TEMPLATE,
    initial_tone: SkinTone | None = None,
) -> Manifest:
    """Construct the complete-product manifest for a factor space.

    Rows carry ``variant=initial`` for the designated initial tone (first tone
    of the space by default) and ``modified`` otherwise, mirroring how the
    rendered dataset flags its ablation subset.
    """
    space.require_nonempty()
    if initial_tone is None:
        initial_tone = space.skin_tones[0]
    records = []
    counter = 0
    for action, motion, tone, viewpoint, background in product(
        sorted(space.actions),
        sorted(space.motion_ids),
        sorted(space.skin_tones),
        sorted(space.viewpoints),
        sorted(space.backgrounds),
    ):
        records.append(
            VideoRecord(
                video_id=f"v{counter:06d}",
                path=path_template.format(
                    action=action,
                    motion_id=motion,
                    skin_tone=tone.value,
                    viewpoint=viewpoint,
                    background=background,
                ),
                action=action,
                motion_id=motion,
                skin_tone=tone,
                viewpoint=viewpoint,
                background=background,
                variant="initial" if tone == initial_tone else "modified",
            )
        )
        counter += 1
    recs = tuple(records)
    return Manifest(records=recs, space=_infer_space(recs))
