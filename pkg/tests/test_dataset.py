import json
import random

import numpy as np
import pytest

from colordet import dataset as ds
from colordet.errors import DataError


def _line(objects, image="x.jpg", w=100, h=100):
    return json.dumps({"image": image, "width": w, "height": h, "objects": objects})


def test_names_and_counts():
    assert len(ds.COLOR_NAMES) == 24 and len(set(ds.COLOR_NAMES)) == 24
    assert ds.COLOR_IDS["purple"] == 23
    assert sum(ds.TABLE2_COUNTS) == ds.TABLE2_TOTAL == 31232


def test_load_empty(tmp_path):
    (tmp_path / "a.jsonl").write_text("")
    assert ds.load_annotations(tmp_path / "a.jsonl") == []


def test_load_one(tmp_path):
    (tmp_path / "a.jsonl").write_text(_line([{"bbox": [1, 2, 30, 40], "color": 0}]) + "\n")
    (im,) = ds.load_annotations(tmp_path / "a.jsonl")
    assert im.objects == [ds.Object((1.0, 2.0, 30.0, 40.0), 0)]


@pytest.mark.parametrize("bad", [
    "{not json",
    _line([{"bbox": [10, 10, 5, 20], "color": 0}]),
    _line([{"bbox": [1, 1, 5, 5], "color": 24}]),
    _line([{"bbox": [1, 1, 500, 5], "color": 1}]),
    _line([{"bbox": [1, 1, 5], "color": 1}]),
    json.dumps({"image": "x", "objects": []}),
])
def test_load_errors_name_the_line(tmp_path, bad):
    p = tmp_path / "a.jsonl"
    p.write_text(_line([]) + "\n" + bad + "\n")
    with pytest.raises(DataError) as exc:
        ds.load_annotations(p)
    assert exc.value.line == 2 and ":2:" in str(exc.value)


def test_write_load_roundtrip(tmp_path):
    images = ds.synthetic_table2(n_images=50, seed=1, counts=[3] * 24)
    ds.write_annotations(images, tmp_path / "a.jsonl")
    assert ds.load_annotations(tmp_path / "a.jsonl") == images


def test_table2_stats():
    stats = ds.class_stats(ds.synthetic_table2(seed=0))
    assert stats.total == 31232
    assert stats.counts == list(ds.TABLE2_COUNTS)
    assert abs(100 * stats.proportions[0] - 37.87) <= 0.005
    assert stats.imbalance == pytest.approx(11827 / 15)
    assert abs(sum(stats.proportions) - 1) <= 1e-9


def test_table2_check_flags_purple_only():
    rows = ds.table2_check(ds.class_stats(ds.synthetic_table2(seed=0)))
    assert all(r["count_ok"] for r in rows)
    # 15 / 31232 = 0.048%, printed as 0.04%
    assert [r["color"] for r in rows if not r["percent_ok"]] == ["purple"]


def test_split_single_class():
    images = [ds.AnnotatedImage(f"{i}.jpg", 10, 10, [ds.Object((0, 0, 5, 5), 3)]) for i in range(10)]
    train, val, test = ds.stratified_split(images, seed=0)
    assert (len(train), len(val), len(test)) == (8, 1, 1)


def _partition_ok(images, splits):
    seen = [im.path for part in splits for im in part]
    assert sorted(seen) == sorted(im.path for im in images)
    assert len(seen) == len(set(seen))


def test_split_partition_and_determinism():
    images = ds.synthetic_table2(n_images=300, seed=2, counts=[40] * 24)
    a = ds.stratified_split(images, seed=7)
    b = ds.stratified_split(images, seed=7)
    _partition_ok(images, a)
    assert a == b
    shuffled = images[:]
    random.Random(0).shuffle(shuffled)
    assert ds.stratified_split(shuffled, seed=7) == a
    assert ds.split_report(a)["max_abs_deviation"] <= 1.0


def test_split_keeps_empty_images():
    images = [ds.AnnotatedImage(f"e{i}", 10, 10, []) for i in range(10)]
    images += ds.synthetic_table2(n_images=20, seed=3, counts=[2] * 24)
    parts = ds.stratified_split(images, seed=1)
    _partition_ok(images, parts)
