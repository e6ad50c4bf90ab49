"""Curation stages: boundary semantics, bookkeeping, record conservation.

Boundary fixtures are built to land exactly on the thresholds: a channel
with population variance exactly 200, and a step-edge image whose Canny
component count is exactly 1, so the >= / > / < rules are pinned down
without tolerance games.
"""

from __future__ import annotations

import numpy as np
import pytest

from mdboost import curation, datasets, imaging
from mdboost.errors import DomainError


def make_record(i, source="s", **meta):
    return datasets.SampleRecord(
        id=f"{source}-{i:03d}",
        path=f"img/{i}.png",
        label=1,
        source=source,
        meta=meta,
    )


def manifest_of(records):
    return datasets.Manifest(records=list(records))


def fake_loader(images):
    def load(record):
        return images.get(record.id)

    return load


def variance_200_image():
    # 30 px per channel: 20 at 128 +/- 10, 10 at 128 +/- 20 -> variance 200.
    values = [118] * 10 + [138] * 10 + [108] * 5 + [148] * 5
    ch = np.array(values, dtype=np.uint8).reshape(5, 6)
    return imaging.image_from_array(np.stack([ch, ch, ch], axis=2))


def one_edge_image():
    px = np.zeros((64, 64), dtype=np.uint8)
    px[:, 32:] = 255
    return imaging.image_from_array(np.stack([px] * 3, axis=2))


# --- score filters -----------------------------------------------------------


def test_prompt_filter_keeps_scores_at_the_threshold():
    m = manifest_of(
        [
            make_record(0, prompt_face_score=0.5),
            make_record(1, prompt_face_score=0.49),
            make_record(2, prompt_face_score=0.9),
            make_record(3),
        ]
    )
    out, row = curation.prompt_filter(m, threshold=0.5)
    assert [r.id for r in out.records] == ["s-000", "s-002"]
    assert (row.input_count, row.retained_count, row.dropped_count) == (4, 2, 1)
    assert row.missing_ids == ["s-003"]
    assert row.missing_count == 1


def test_detection_filter_uses_detector_confidence():
    m = manifest_of(
        [make_record(0, det_conf=0.7), make_record(1, det_conf=0.2)]
    )
    out, row = curation.detection_filter(m, threshold=0.5)
    assert [r.id for r in out.records] == ["s-000"]
    assert row.name == "detect"


def test_score_filter_does_not_mutate_input_records():
    m = manifest_of([make_record(0, prompt_face_score=0.9)])
    out, _ = curation.prompt_filter(m)
    out.records[0].meta["prompt_face_score"] = -1.0
    assert m.records[0].meta["prompt_face_score"] == 0.9


# --- style filter ------------------------------------------------------------


def style_config(**kw):
    return curation.StageConfig(**kw)


def test_style_filter_variance_boundary_is_strict_less_than():
    m = manifest_of([make_record(0)])
    load = fake_loader({"s-000": variance_200_image()})
    out, row = curation.style_filter(m, style_config(color_threshold=200.0), load)
    assert row.retained_count == 1

    out, row = curation.style_filter(m, style_config(color_threshold=200.0001), load)
    assert row.retained_count == 0
    assert row.dropped_count == 1


def test_style_filter_edge_boundary_is_strict_greater_than():
    # The step image has exactly one edge component; color variance is huge.
    m = manifest_of([make_record(0)])
    load = fake_loader({"s-000": one_edge_image()})
    out, row = curation.style_filter(
        m, style_config(edge_threshold=1.0, color_threshold=100.0), load
    )
    assert row.retained_count == 1

    out, row = curation.style_filter(
        m, style_config(edge_threshold=0.0, color_threshold=100.0), load
    )
    assert row.dropped_count == 1


def test_style_filter_gray_images_bypass_the_variance_rule():
    gray = imaging.image_from_array(np.full((16, 16), 200, dtype=np.uint8))
    m = manifest_of([make_record(0)])
    out, row = curation.style_filter(
        m, style_config(color_threshold=1e9), fake_loader({"s-000": gray})
    )
    # A color image this flat would be dropped; grayscale skips the rule.
    assert row.retained_count == 1
    assert row.notes == {"gray_bypassed": 1}


def test_style_filter_undecodable_images_are_set_aside():
    m = manifest_of([make_record(0), make_record(1)])
    load = fake_loader({"s-001": variance_200_image()})
    out, row = curation.style_filter(m, style_config(color_threshold=100.0), load)
    assert row.missing_ids == ["s-000"]
    assert [r.id for r in out.records] == ["s-001"]


# --- word filter -------------------------------------------------------------


def test_word_filter_is_case_insensitive_substring_on_style():
    m = manifest_of(
        [
            make_record(0, style="Anime portrait"),
            make_record(1, style="photorealistic"),
            make_record(2, style="semi-ANIME sketch"),
        ]
    )
    out, row = curation.word_filter(m, exclusion_words=("anime",))
    assert [r.id for r in out.records] == ["s-001"]
    assert row.dropped_count == 2


def test_word_filter_judges_only_the_style_field():
    m = manifest_of([make_record(0, prompt="anime girl with sword")])
    out, row = curation.word_filter(m, exclusion_words=("anime",))
    assert row.retained_count == 1


def test_word_filter_empty_or_missing_style_passes():
    m = manifest_of([make_record(0, style=""), make_record(1, style=None), make_record(2)])
    out, row = curation.word_filter(m, exclusion_words=("anime", "cartoon"))
    assert row.retained_count == 3


# --- manual filter -----------------------------------------------------------


def test_manual_filter_consumes_decisions_and_holds_pending():
    m = manifest_of(
        [
            make_record(0, review="keep"),
            make_record(1, review="drop"),
            make_record(2),
            make_record(3, review="keep"),
        ]
    )
    out, row = curation.manual_filter(m)
    assert [r.id for r in out.records] == ["s-000", "s-003"]
    assert (row.dropped_count, row.missing_count) == (1, 1)
    assert row.notes == {"pending": 1}
    assert row.missing_ids == ["s-002"]


# --- crop stage --------------------------------------------------------------


def crop_fixture():
    rng = np.random.default_rng(7)
    img = imaging.image_from_array(
        rng.integers(0, 256, size=(100, 100, 3), dtype=np.uint8)
    )
    records = [
        make_record(0, face_box=(10, 10, 40, 40)),
        make_record(1, face_boxes=[(0, 0, 50, 50), (60, 60, 8, 8)]),
        make_record(2),
        make_record(3, face_box=(0, 0, 30, 30)),
    ]
    images = {r.id: img for r in records}
    images.pop("s-003")
    return manifest_of(records), fake_loader(images)


def test_crop_stage_bookkeeping_and_expansion():
    m, load = crop_fixture()
    config = curation.StageConfig(crop_size=32, min_face_px=16)
    out, row = curation.crop_stage(m, config, load)
    # Record 0 -> one crop; record 1 -> one kept + one undersized box;
    # record 2 has no box; record 3 has no decodable image.
    assert [r.id for r in out.records] == ["s-000", "s-001#f0"]
    assert row.input_count == 4
    assert row.retained_count == 2
    assert row.dropped_count == 0
    assert sorted(row.missing_ids) == ["s-002", "s-003"]
    assert row.notes == {"expanded": 0, "rejected_boxes": 1}
    assert out.records[0].meta["crop_box"] == [10.0, 10.0, 40.0, 40.0]


def test_crop_stage_expands_multi_face_records():
    rng = np.random.default_rng(8)
    img = imaging.image_from_array(
        rng.integers(0, 256, size=(80, 80, 3), dtype=np.uint8)
    )
    m = manifest_of([make_record(0, face_boxes=[(0, 0, 40, 40), (30, 30, 40, 40)])])
    config = curation.StageConfig(crop_size=16, min_face_px=8)
    out, row = curation.crop_stage(m, config, fake_loader({"s-000": img}))
    assert [r.id for r in out.records] == ["s-000#f0", "s-000#f1"]
    assert row.retained_count == 2
    assert row.notes["expanded"] == 1
    assert row.notes["rejected_boxes"] == 0


def test_crop_stage_all_boxes_undersized_drops_the_record():
    img = imaging.image_from_array(np.zeros((50, 50, 3), dtype=np.uint8))
    m = manifest_of([make_record(0, face_box=(0, 0, 10, 10))])
    config = curation.StageConfig(crop_size=16, min_face_px=32)
    out, row = curation.crop_stage(m, config, fake_loader({"s-000": img}))
    assert row.dropped_count == 1
    assert row.retained_count == 0
    assert row.notes["rejected_boxes"] == 1


def test_crop_stage_writes_sanitized_files(tmp_path):
    rng = np.random.default_rng(9)
    img = imaging.image_from_array(
        rng.integers(0, 256, size=(60, 60, 3), dtype=np.uint8)
    )
    rec = datasets.SampleRecord(
        id="src/a-1", path="orig.png", label=1, source="src",
        meta={"face_boxes": [(0, 0, 30, 30), (20, 20, 30, 30)]},
    )
    config = curation.StageConfig(crop_size=24, min_face_px=16)
    out, row = curation.crop_stage(
        manifest_of([rec]), config, fake_loader({"src/a-1": img}), out_dir=tmp_path
    )
    assert [r.path for r in out.records] == ["src_a-1_f0.png", "src_a-1_f1.png"]
    for r in out.records:
        loaded = imaging.load_image(tmp_path / r.path)
        assert (loaded.width, loaded.height) == (24, 24)


# --- pipeline ----------------------------------------------------------------


def funnel_manifest(n_total, n_after_prompt, n_after_detect):
    records = []
    for i in range(n_total):
        meta = {}
        meta["prompt_face_score"] = 0.9 if i < n_after_prompt else 0.1
        meta["det_conf"] = 0.9 if i < n_after_detect else 0.1
        records.append(make_record(i, **meta))
    return manifest_of(records)


@pytest.mark.parametrize("counts", [(10, 6, 4), (6, 4, 2)])
def test_pipeline_funnel_counts(counts):
    n_total, n_prompt, n_detect = counts
    m = funnel_manifest(*counts)
    out, report = curation.run_pipeline(
        m, curation.StageConfig(), stages=("prompt", "detect"), loader=fake_loader({})
    )
    assert [r.retained_count for r in report.rows] == [n_prompt, n_detect]
    assert report.rows[0].input_count == n_total
    assert report.rows[1].input_count == n_prompt
    assert len(out) == n_detect
    report.validate()


def test_pipeline_rejects_unknown_stages():
    with pytest.raises(DomainError):
        curation.run_pipeline(
            manifest_of([]), curation.StageConfig(), stages=("prompt", "dedupe")
        )


def test_pipeline_conservation_on_random_fixtures():
    rng = np.random.default_rng(10)
    for trial in range(10):
        records = []
        for i in range(50):
            meta = {}
            if rng.random() < 0.8:
                meta["prompt_face_score"] = float(rng.random())
            if rng.random() < 0.8:
                meta["det_conf"] = float(rng.random())
            if rng.random() < 0.5:
                meta["style"] = rng.choice(["anime", "photo", "oil painting"])
            if rng.random() < 0.7:
                meta["review"] = rng.choice(["keep", "drop", "unsure"])
            records.append(make_record(i, **meta))
        m = manifest_of(records)
        out, report = curation.run_pipeline(
            m,
            curation.StageConfig(),
            stages=("prompt", "detect", "word", "manual"),
            loader=fake_loader({}),
        )
        report.validate()
        for row in report.rows:
            assert row.input_count == row.retained_count + row.dropped_count + row.missing_count
        assert report.rows[0].input_count == 50
        assert len(out) == report.rows[-1].retained_count


def test_filter_stages_are_idempotent():
    m = funnel_manifest(10, 6, 4)
    once, row1 = curation.prompt_filter(m, 0.5)
    twice, row2 = curation.prompt_filter(once, 0.5)
    assert row2.dropped_count == 0
    assert [r.id for r in twice.records] == [r.id for r in once.records]

    styled = manifest_of([make_record(0, style="photo"), make_record(1, style="anime")])
    once, _ = curation.word_filter(styled)
    twice, row2 = curation.word_filter(once)
    assert row2.dropped_count == 0


def test_report_validate_catches_broken_chaining():
    report = curation.CurationReport(
        rows=[
            curation.StageRow(name="prompt", input_count=10, retained_count=6, dropped_count=4),
            curation.StageRow(name="detect", input_count=5, retained_count=5, dropped_count=0),
        ]
    )
    with pytest.raises(DomainError):
        report.validate()


def test_report_to_table_lists_all_stages():
    _, report = curation.run_pipeline(
        funnel_manifest(10, 6, 4),
        curation.StageConfig(),
        stages=("prompt", "detect"),
        loader=fake_loader({}),
    )
    table = report.to_table()
    assert "stage" in table and "retained" in table
    assert "prompt" in table and "detect" in table
    assert "10" in table


def test_stage_config_validation():
    with pytest.raises(DomainError):
        curation.StageConfig(prompt_threshold=float("nan"))
    with pytest.raises(DomainError):
        curation.StageConfig(crop_size=0)
    with pytest.raises(DomainError):
        curation.StageConfig(min_face_px=-1)
