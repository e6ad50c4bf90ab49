"""Coarse-to-fine curation pipeline over manifest records.

Stages: prompt-score filter, face-detection-score filter, style filter
(edge metric + color variance on decoded pixels), exclusion-word filter on
the style text, manual-review consumption, and face cropping. Learned
models never run here; their scores arrive in record metadata.

Every stage reports input / retained / dropped / missing counts, where
"missing" holds records that could not be judged (no score, undecodable
image, pending review) — those are set aside, never silently dropped.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .datasets import Manifest, SampleRecord
from .errors import DomainError
from .imaging import Image, canny_edge_metric, color_variance, crop_face, load_image, save_image

STAGE_NAMES = ("prompt", "detect", "style", "word", "manual", "crop")


@dataclass(frozen=True)
class StageConfig:
    prompt_threshold: float = 0.5
    detect_threshold: float = 0.5
    edge_threshold: float = 100.0
    color_threshold: float = 200.0
    exclusion_words: tuple[str, ...] = ("anime",)
    crop_size: int = 256
    min_face_px: int = 64
    edge_metric: str = "components"  # or "pixel_fraction"
    color_pooled: bool = False

    def __post_init__(self):
        import math

        for name in ("prompt_threshold", "detect_threshold", "edge_threshold", "color_threshold"):
            if not math.isfinite(getattr(self, name)):
                raise DomainError(f"{name} must be finite")
        if self.crop_size <= 0:
            raise DomainError("crop_size must be positive")
        if self.min_face_px < 0:
            raise DomainError("min_face_px must be nonnegative")
        object.__setattr__(self, "exclusion_words", tuple(self.exclusion_words))


@dataclass
class StageRow:
    name: str
    input_count: int
    retained_count: int
    dropped_count: int
    missing_count: int = 0
    missing_ids: list[str] = field(default_factory=list)
    notes: dict = field(default_factory=dict)


@dataclass
class CurationReport:
    rows: list[StageRow] = field(default_factory=list)

    def validate(self) -> None:
        """Chaining: each stage's input must equal the previous retained."""
        for prev, cur in zip(self.rows, self.rows[1:]):
            if cur.input_count != prev.retained_count:
                raise DomainError(
                    f"stage {cur.name!r} input {cur.input_count} != "
                    f"stage {prev.name!r} retained {prev.retained_count}"
                )

    def to_table(self) -> str:
        header = f"{'stage':<8} {'input':>7} {'retained':>9} {'dropped':>8} {'missing':>8}"
        lines = [header, "-" * len(header)]
        for r in self.rows:
            lines.append(
                f"{r.name:<8} {r.input_count:>7} {r.retained_count:>9} "
                f"{r.dropped_count:>8} {r.missing_count:>8}"
            )
        return "\n".join(lines)


def _copy(r: SampleRecord, **changes) -> SampleRecord:
    return replace(r, meta=dict(r.meta), extra=dict(r.extra), **changes)


def _score_filter(manifest: Manifest, name: str, score_key: str, threshold: float):
    """Shared retain-iff-score>=threshold rule; missing scores set aside."""
    retained, missing = [], []
    dropped = 0
    for r in manifest.records:
        score = r.meta.get(score_key)
        if score is None:
            missing.append(r.id)
        elif float(score) >= threshold:
            retained.append(_copy(r))
        else:
            dropped += 1
    row = StageRow(
        name=name,
        input_count=len(manifest.records),
        retained_count=len(retained),
        dropped_count=dropped,
        missing_count=len(missing),
        missing_ids=missing,
    )
    return Manifest(records=retained, sources=dict(manifest.sources)), row


def prompt_filter(manifest: Manifest, threshold: float = 0.5):
    """Keep records whose prompt face score meets the threshold."""
    return _score_filter(manifest, "prompt", "prompt_face_score", threshold)


def detection_filter(manifest: Manifest, threshold: float = 0.5):
    """Keep records whose face-detector confidence meets the threshold."""
    return _score_filter(manifest, "detect", "det_conf", threshold)


def default_loader(image_root):
    def load(record: SampleRecord) -> Image | None:
        try:
            return load_image(f"{image_root}/{record.path}")
        except (OSError, ValueError):
            return None

    return load


def style_filter(manifest: Manifest, config: StageConfig, load):
    """Drop stylized images: too many edges OR too little color variance.

    `load(record)` returns an Image or None for undecodable input. Grayscale
    images cannot take the variance test; for them only the edge rule
    applies, and the bypass is counted in the report notes.
    """
    retained, missing = [], []
    dropped = 0
    gray_bypassed = 0
    for r in manifest.records:
        img = load(r)
        if img is None:
            missing.append(r.id)
            continue
        edges = canny_edge_metric(img, metric=config.edge_metric)
        try:
            variance = color_variance(img, pooled=config.color_pooled)
        except DomainError:
            gray_bypassed += 1
            variance = None
        drop = edges > config.edge_threshold or (
            variance is not None and variance < config.color_threshold
        )
        if drop:
            dropped += 1
        else:
            retained.append(_copy(r))
    row = StageRow(
        name="style",
        input_count=len(manifest.records),
        retained_count=len(retained),
        dropped_count=dropped,
        missing_count=len(missing),
        missing_ids=missing,
        notes={"gray_bypassed": gray_bypassed} if gray_bypassed else {},
    )
    return Manifest(records=retained, sources=dict(manifest.sources)), row


def word_filter(manifest: Manifest, exclusion_words=("anime",)):
    """Drop records whose style text contains an exclusion word.

    Matching is case-insensitive substring on meta.style only. Records with
    no style text pass through, even if the excluded word appears elsewhere
    (e.g. in the prompt); the filter judges the style field alone.
    """
    words = [w.lower() for w in exclusion_words]
    retained = []
    dropped = 0
    for r in manifest.records:
        style = str(r.meta.get("style", "") or "").lower()
        if any(w in style for w in words):
            dropped += 1
        else:
            retained.append(_copy(r))
    row = StageRow(
        name="word",
        input_count=len(manifest.records),
        retained_count=len(retained),
        dropped_count=dropped,
    )
    return Manifest(records=retained, sources=dict(manifest.sources)), row


def manual_filter(manifest: Manifest):
    """Consume review decisions from meta.review; pending records held back."""
    retained, missing = [], []
    dropped = 0
    for r in manifest.records:
        verdict = r.meta.get("review")
        if verdict == "keep":
            retained.append(_copy(r))
        elif verdict == "drop":
            dropped += 1
        else:
            missing.append(r.id)
    row = StageRow(
        name="manual",
        input_count=len(manifest.records),
        retained_count=len(retained),
        dropped_count=dropped,
        missing_count=len(missing),
        missing_ids=missing,
        notes={"pending": len(missing)} if missing else {},
    )
    return Manifest(records=retained, sources=dict(manifest.sources)), row


def crop_stage(manifest: Manifest, config: StageConfig, load, out_dir=None):
    """Crop every detected face to crop_size squares.

    Records may carry one box (meta.face_box) or several (meta.face_boxes);
    each box becomes its own output record, so this stage can emit more
    records than it consumes — the expansion count lands in the notes.
    Undersized faces are dropped; boxless or undecodable records are set
    aside as missing.
    """
    retained: list[SampleRecord] = []
    missing = []
    rejected_boxes = 0
    dropped_records = 0
    producing_records = 0
    for r in manifest.records:
        boxes = r.meta.get("face_boxes")
        if boxes is None:
            box = r.meta.get("face_box")
            boxes = [box] if box is not None else []
        if not boxes:
            missing.append(r.id)
            continue
        img = load(r)
        if img is None:
            missing.append(r.id)
            continue
        produced = 0
        for j, box in enumerate(boxes):
            cropped = crop_face(img, box, crop_size=config.crop_size, min_face_px=config.min_face_px)
            if cropped is None:
                rejected_boxes += 1
                continue
            new_id = r.id if len(boxes) == 1 else f"{r.id}#f{j}"
            path = r.path
            if out_dir is not None:
                path = f"{new_id.replace('/', '_').replace('#', '_')}.png"
                save_image(cropped, f"{out_dir}/{path}")
            out = _copy(r, id=new_id, path=path)
            out.meta["crop_box"] = [float(v) for v in box]
            retained.append(out)
            produced += 1
        if produced == 0:
            dropped_records += 1
        else:
            producing_records += 1
    # Multi-face records emit one output per box, so retained can exceed the
    # record count; the surplus is reported rather than hidden.
    expanded = len(retained) - producing_records
    row = StageRow(
        name="crop",
        input_count=len(manifest.records),
        retained_count=len(retained),
        dropped_count=dropped_records,
        missing_count=len(missing),
        missing_ids=missing,
        notes={"expanded": expanded, "rejected_boxes": rejected_boxes},
    )
    return Manifest(records=retained, sources=dict(manifest.sources)), row


def run_pipeline(manifest: Manifest, config: StageConfig, stages, image_root=None, loader=None, out_dir=None):
    """Apply the named stages in order; returns (manifest, CurationReport)."""
    for s in stages:
        if s not in STAGE_NAMES:
            raise DomainError(f"unknown stage {s!r}; choose from {STAGE_NAMES}")
    load = loader if loader is not None else default_loader(image_root)

    report = CurationReport()
    current = manifest
    for s in stages:
        if s == "prompt":
            current, row = prompt_filter(current, config.prompt_threshold)
        elif s == "detect":
            current, row = detection_filter(current, config.detect_threshold)
        elif s == "style":
            current, row = style_filter(current, config, load)
        elif s == "word":
            current, row = word_filter(current, config.exclusion_words)
        elif s == "manual":
            current, row = manual_filter(current)
        else:
            current, row = crop_stage(current, config, load, out_dir=out_dir)
        report.rows.append(row)
    report.validate()
    return current, report
