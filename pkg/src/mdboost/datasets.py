"""Manifest-backed multi-source datasets.

A manifest is a JSONL file, one record per line. Records track id, path,
label (serialized "real"/"fake"), source, split, optional inline features
(for synthetic data) and a free-form meta map. Unknown top-level keys are
preserved on round-trip. Manifests are treated as immutable values: every
operation returns a new one.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DomainError, ManifestParseError, ValidationError

LABEL_NAMES = {0: "real", 1: "fake"}
LABEL_CODES = {"real": 0, "fake": 1}
SPLITS = ("train", "test", "val", "unassigned")

_KNOWN_KEYS = ("id", "path", "label", "source", "split", "features", "meta")


@dataclass
class SampleRecord:
    id: str
    path: str
    label: int  # 0 = real, 1 = fake
    source: str
    split: str = "unassigned"
    features: list[float] | None = None
    meta: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)  # unknown manifest keys, kept verbatim

    def __post_init__(self):
        if self.label not in (0, 1):
            raise ValidationError(f"record {self.id!r}: label must be 0 or 1, got {self.label}")
        if self.split not in SPLITS:
            raise ValidationError(f"record {self.id!r}: unknown split {self.split!r}")


@dataclass
class Manifest:
    records: list[SampleRecord] = field(default_factory=list)
    sources: dict[str, str] = field(default_factory=dict)  # source id -> description

    def __post_init__(self):
        # Every record's source must appear in the registry.
        for r in self.records:
            self.sources.setdefault(r.source, "")

    def __len__(self) -> int:
        return len(self.records)


def _check_unique_ids(records, line_of=None):
    seen: dict[str, int] = {}
    for i, r in enumerate(records):
        if r.id in seen:
            if line_of is not None:
                raise ValidationError(
                    f"duplicate id {r.id!r} at lines {line_of[seen[r.id]]} and {line_of[i]}"
                )
            raise ValidationError(f"duplicate id {r.id!r}")
        seen[r.id] = i


def _record_from_obj(obj: dict, line_no: int) -> SampleRecord:
    for key in ("id", "path", "label", "source"):
        if key not in obj:
            raise ManifestParseError(line_no, f"missing required key {key!r}")
    label_str = obj["label"]
    if label_str not in LABEL_CODES:
        raise ManifestParseError(line_no, f"unknown label {label_str!r}")
    split = obj.get("split", "unassigned")
    if split not in SPLITS:
        raise ManifestParseError(line_no, f"unknown split {split!r}")
    extra = {k: v for k, v in obj.items() if k not in _KNOWN_KEYS}
    return SampleRecord(
        id=obj["id"],
        path=obj["path"],
        label=LABEL_CODES[label_str],
        source=obj["source"],
        split=split,
        features=obj.get("features"),
        meta=obj.get("meta", {}),
        extra=extra,
    )


def loads_manifest(text: str) -> Manifest:
    records = []
    line_of = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ManifestParseError(line_no, f"invalid JSON: {exc.msg}") from exc
        if not isinstance(obj, dict):
            raise ManifestParseError(line_no, "record is not an object")
        records.append(_record_from_obj(obj, line_no))
        line_of.append(line_no)
    _check_unique_ids(records, line_of)
    return Manifest(records=records)


def load_manifest(path) -> Manifest:
    with open(path, encoding="utf-8") as fh:
        return loads_manifest(fh.read())


def record_to_obj(r: SampleRecord) -> dict:
    obj = {
        "id": r.id,
        "path": r.path,
        "label": LABEL_NAMES[r.label],
        "source": r.source,
        "split": r.split,
    }
    if r.features is not None:
        obj["features"] = list(r.features)
    if r.meta:
        obj["meta"] = r.meta
    obj.update(r.extra)
    return obj


def dumps_manifest(manifest: Manifest) -> str:
    lines = [json.dumps(record_to_obj(r)) for r in manifest.records]
    return "\n".join(lines) + ("\n" if lines else "")


def save_manifest(manifest: Manifest, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_manifest(manifest))


def merge_sources(manifests: list[Manifest], seed: int) -> Manifest:
    """Concatenate manifests and shuffle with the given seed.

    Record ids are namespaced as "<source>/<id>" unless already carrying
    that prefix; a collision after prefixing is a validation error.
    """
    merged: list[SampleRecord] = []
    sources: dict[str, str] = {}
    for m in manifests:
        for src, desc in m.sources.items():
            if desc or src not in sources:
                sources.setdefault(src, desc)
        for r in m.records:
            prefix = r.source + "/"
            new_id = r.id if r.id.startswith(prefix) else prefix + r.id
            merged.append(replace(r, id=new_id, meta=dict(r.meta), extra=dict(r.extra)))
    _check_unique_ids(merged)
    order = np.random.default_rng(seed).permutation(len(merged))
    return Manifest(records=[merged[i] for i in order], sources=sources)


def split_records(manifest: Manifest, ratios=(0.90, 0.05, 0.05), seed: int = 0) -> Manifest:
    """Assign train/test/val splits stratified per (source, label).

    Within each stratum the order is shuffled with the seed, floor(n * ratio)
    records go to test and to val, and the remainder to train, so small
    strata fall back to all-train rather than losing records.
    """
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise DomainError(f"split ratios must sum to 1, got {ratios}")
    if len(ratios) != 3 or any(r < 0 for r in ratios):
        raise DomainError(f"need three nonnegative ratios, got {ratios}")

    rng = np.random.default_rng(seed)
    strata: dict[tuple[str, int], list[int]] = {}
    for i, r in enumerate(manifest.records):
        strata.setdefault((r.source, r.label), []).append(i)

    assigned = {}
    for key in sorted(strata):
        idx = strata[key]
        order = rng.permutation(len(idx))
        n_test = int(len(idx) * ratios[1])
        n_val = int(len(idx) * ratios[2])
        for pos, j in enumerate(order):
            if pos < n_test:
                split = "test"
            elif pos < n_test + n_val:
                split = "val"
            else:
                split = "train"
            assigned[idx[j]] = split

    new_records = [
        replace(r, split=assigned[i], meta=dict(r.meta), extra=dict(r.extra))
        for i, r in enumerate(manifest.records)
    ]
    return Manifest(records=new_records, sources=dict(manifest.sources))


def filter_split(manifest: Manifest, split: str) -> Manifest:
    if split not in SPLITS:
        raise DomainError(f"unknown split {split!r}")
    return Manifest(
        records=[r for r in manifest.records if r.split == split],
        sources=dict(manifest.sources),
    )


# --- synthetic mixtures ----------------------------------------------------


@dataclass(frozen=True)
class SourceSpec:
    """One synthetic source: `count` samples total, split evenly per class.

    Real sits at +mean * e_axis and fake at -mean * e_axis with unit
    isotropic sigma, so |mean| is the class separation in sigma units. A
    negative mean flips which side each class occupies, which lets two
    sources disagree about a shared axis.
    """

    name: str
    count: int
    mean: float
    axis: int = 0

    def __post_init__(self):
        if self.count <= 0:
            raise DomainError(f"source {self.name!r}: count must be positive")
        if self.axis < 0:
            raise DomainError(f"source {self.name!r}: axis must be nonnegative")


@dataclass(frozen=True)
class MixtureSpec:
    sources: tuple[SourceSpec, ...]
    dim: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.dim < 1:
            raise DomainError(f"dim must be >= 1, got {self.dim}")
        if not self.sources:
            raise DomainError("mixture needs at least one source")
        for s in self.sources:
            if s.axis >= self.dim:
                raise DomainError(f"source {s.name!r}: axis {s.axis} out of range for dim {self.dim}")


def canonical_mixture(seed: int = 0) -> MixtureSpec:
    """The standard two-source test mixture: easy mu=3.0, hard mu=0.5."""
    return MixtureSpec(
        sources=(
            SourceSpec(name="easy", count=1000, mean=3.0),
            SourceSpec(name="hard", count=1000, mean=0.5),
        ),
        dim=2,
        seed=seed,
    )


def make_mixture(spec: MixtureSpec) -> Manifest:
    """Draw the mixture: per source, per class, isotropic Gaussians.

    Label real (0) sits at +mean * e_axis and fake (1) at -mean * e_axis.
    The same MixtureSpec always yields the same records.
    """
    rng = np.random.default_rng(spec.seed)
    records = []
    sources = {}
    for src in spec.sources:
        sources[src.name] = f"synthetic gaussian pair, separation {src.mean} sigma"
        n_real = src.count // 2
        n_fake = src.count - n_real
        center = np.zeros(spec.dim)
        center[src.axis] = src.mean
        for label, n, sign in ((0, n_real, 1.0), (1, n_fake, -1.0)):
            x = rng.standard_normal((n, spec.dim)) + sign * center
            for i in range(n):
                records.append(
                    SampleRecord(
                        id=f"{src.name}-{LABEL_NAMES[label]}-{i:04d}",
                        path="synthetic",
                        label=label,
                        source=src.name,
                        features=[float(v) for v in x[i]],
                    )
                )
    return Manifest(records=records, sources=sources)


def per_source_stats(manifest: Manifest) -> dict[tuple[str, str], dict[str, int]]:
    """Counts per (source, label name), with a per-split breakdown."""
    stats: dict[tuple[str, str], dict[str, int]] = {}
    for r in manifest.records:
        key = (r.source, LABEL_NAMES[r.label])
        row = stats.setdefault(key, {"count": 0, **{s: 0 for s in SPLITS}})
        row["count"] += 1
        row[r.split] += 1
    return stats


def training_arrays(manifest: Manifest, image_root=None):
    """Materialize (X, y, sources) for training.

    Synthetic records carry features inline; image records are decoded from
    image_root/path, flattened and scaled to [0, 1].
    """
    feats = []
    labels = []
    sources = []
    for r in manifest.records:
        if r.features is not None:
            feats.append(np.asarray(r.features, dtype=np.float64))
        else:
            if image_root is None:
                raise DomainError(f"record {r.id!r} has no features and no image_root was given")
            from .imaging import load_image

            img = load_image(f"{image_root}/{r.path}")
            feats.append(img.pixels.astype(np.float64).ravel() / 255.0)
        labels.append(r.label)
        sources.append(r.source)
    if not feats:
        return np.zeros((0, 0)), np.zeros(0, dtype=np.int64), []
    x = np.stack(feats)
    y = np.asarray(labels, dtype=np.int64)
    return x, y, sources
