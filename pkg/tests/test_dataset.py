"""Dataset store, persistence format, splitting, synthetic generation."""

import json

import numpy as np
import pytest

from cuepose.dataset import (
    DatasetError,
    GestureClass,
    GestureDataset,
    GestureSample,
    generate_synthetic,
    load,
    make_synthetic_config,
    save,
    stratified_split,
    take_per_class,
)
from cuepose.pose import FeatureVector, PoseError
from oracles import knn_loo_accuracy


def toy_dataset(counts: dict[int, int]) -> GestureDataset:
    classes = [GestureClass(0, "other")] + [GestureClass(i, f"g{i}") for i in sorted(counts) if i]
    rng = np.random.default_rng(1)
    ds = GestureDataset("pose-v1", classes)
    t = 0
    for cid, n in sorted(counts.items()):
        for _ in range(n):
            fv = FeatureVector("pose-v1", rng.normal(size=46))
            ds.append_sample(GestureSample(fv, cid, t, "toy"))
            t += 1
    return ds


def test_append_and_count():
    ds = toy_dataset({0: 0, 1: 0})
    ds.append_sample(GestureSample(FeatureVector("pose-v1", np.zeros(46)), 1, 5, "x"))
    assert ds.counts()[1] == 1


def test_append_unknown_class():
    ds = toy_dataset({0: 1, 1: 1})
    with pytest.raises(DatasetError, match="unknown class id 9"):
        ds.append_sample(GestureSample(FeatureVector("pose-v1", np.zeros(46)), 9, 0, "x"))


def test_append_spec_mismatch():
    ds = toy_dataset({0: 0, 1: 0})
    with pytest.raises(DatasetError, match="spec"):
        ds.append_sample(GestureSample(FeatureVector("hand-v1", np.zeros(42)), 1, 0, "x"))


def test_table_sized_counts_sum():
    # per-gesture sample counts of a realistic single-performer session set
    ds = toy_dataset({0: 0, 1: 58, 2: 36, 3: 36, 4: 24})
    assert len(ds) == 154


def test_save_load_round_trip(tmp_path):
    ds = toy_dataset({0: 3, 1: 2, 2: 4})
    path = tmp_path / "ds.jsonl"
    save(ds, path)
    assert load(path) == ds


def test_file_header_layout(tmp_path):
    ds = toy_dataset({0: 1, 1: 1})
    path = tmp_path / "ds.jsonl"
    save(ds, path)
    lines = path.read_text().splitlines()
    header = json.loads(lines[0])
    assert header["format"] == "cuepose-dataset"
    assert header["version"] == 1
    assert header["spec_id"] == "pose-v1"
    assert {"id": 0, "name": "other"} in header["classes"]
    row = json.loads(lines[1])
    assert set(row) == {"c", "t", "s", "v"}


def test_load_version_mismatch(tmp_path):
    ds = toy_dataset({0: 1, 1: 1})
    path = tmp_path / "ds.jsonl"
    save(ds, path)
    lines = path.read_text().splitlines()
    header = json.loads(lines[0])
    header["version"] = 2
    path.write_text("\n".join([json.dumps(header)] + lines[1:]) + "\n")
    with pytest.raises(DatasetError, match="version mismatch"):
        load(path)


def test_load_malformed_line_reports_lineno(tmp_path):
    ds = toy_dataset({0: 1, 1: 1})
    path = tmp_path / "ds.jsonl"
    save(ds, path)
    with open(path, "a") as f:
        f.write("{not json\n")
    with pytest.raises(DatasetError, match=":4:"):
        load(path)


def test_load_header_only(tmp_path):
    ds = toy_dataset({0: 0, 1: 0})
    path = tmp_path / "ds.jsonl"
    save(ds, path)
    loaded = load(path)
    assert len(loaded) == 0
    assert loaded.classes == ds.classes


def test_load_unknown_spec(tmp_path):
    path = tmp_path / "ds.jsonl"
    header = {"format": "cuepose-dataset", "version": 1, "spec_id": "martian-v1",
              "classes": [{"id": 0, "name": "other"}]}
    path.write_text(json.dumps(header) + "\n")
    with pytest.raises(PoseError, match="unknown feature spec"):
        load(path)


def test_split_counts_round():
    ds = toy_dataset({0: 10, 1: 10})
    train, val = stratified_split(ds, 0.3, seed=7)
    assert val.counts() == {0: 3, 1: 3}
    assert train.counts() == {0: 7, 1: 7}


def test_split_deterministic():
    ds = toy_dataset({0: 10, 1: 10})
    a = stratified_split(ds, 0.3, seed=7)
    b = stratified_split(ds, 0.3, seed=7)
    assert a[0] == b[0] and a[1] == b[1]


def test_split_partition():
    ds = toy_dataset({0: 9, 1: 13, 2: 5})
    train, val = stratified_split(ds, 0.25, seed=0)
    assert len(train) + len(val) == len(ds)
    train_keys = {(s.captured_at_ms, s.class_id) for s in train.samples}
    val_keys = {(s.captured_at_ms, s.class_id) for s in val.samples}
    assert not train_keys & val_keys


def test_split_table_sized_supports():
    # round(0.3 * {58, 36, 36, 24}) per class
    ds = toy_dataset({0: 20, 1: 58, 2: 36, 3: 36, 4: 24})
    _, val = stratified_split(ds, 0.3, seed=0)
    counts = val.counts()
    assert (counts[1], counts[2], counts[3], counts[4]) == (17, 11, 11, 7)


def test_split_rejects_tiny_class():
    ds = toy_dataset({0: 5, 1: 1})
    with pytest.raises(DatasetError, match="'g1'"):
        stratified_split(ds, 0.3, seed=0)


def test_take_per_class_deterministic():
    ds = toy_dataset({0: 8, 1: 8})
    a = take_per_class(ds, 4, seed=3)
    b = take_per_class(ds, 4, seed=3)
    assert a == b
    assert a.counts() == {0: 4, 1: 4}


def test_synthetic_zero_noise_identical_samples():
    cfg = make_synthetic_config(n_classes=2, samples_per_class=3, noise_std=0.0, seed=1)
    ds = generate_synthetic(cfg)
    per_class = {}
    for s in ds.samples:
        per_class.setdefault(s.class_id, []).append(s.features.values)
    for values in per_class.values():
        for v in values[1:]:
            assert np.array_equal(values[0], v)


def test_synthetic_deterministic():
    cfg = make_synthetic_config(n_classes=4, samples_per_class=5, noise_std=0.02, seed=9)
    assert generate_synthetic(cfg) == generate_synthetic(cfg)


def test_synthetic_shape_and_classes():
    cfg = make_synthetic_config(n_classes=4, samples_per_class=6, seed=2)
    ds = generate_synthetic(cfg)
    assert [c.id for c in ds.classes] == [0, 1, 2, 3, 4]
    assert ds.counts() == {0: 6, 1: 6, 2: 6, 3: 6, 4: 6}
    assert ds.samples[0].features.values.shape == (46,)


def test_synthetic_right_hand_up_above_nose():
    cfg = make_synthetic_config(n_classes=1, samples_per_class=1, noise_std=0.0, seed=0)
    ds = generate_synthetic(cfg)
    hand_up = [s for s in ds.samples if s.class_id == 1][0].features.values
    nose_y = hand_up[1]
    right_wrist_y = hand_up[2 * (1 + 16 - 11) + 1]  # spec index order: 0, 11..32
    assert right_wrist_y < nose_y  # image y grows downward


def test_synthetic_nearest_neighbour_separability():
    cfg = make_synthetic_config(n_classes=4, samples_per_class=15, noise_std=0.02, seed=42)
    ds = generate_synthetic(cfg)
    assert knn_loo_accuracy(ds) >= 0.99


def test_synthetic_zero_noise_perfect_1nn():
    cfg = make_synthetic_config(n_classes=3, samples_per_class=4, noise_std=0.0, seed=5)
    # zero noise duplicates prototypes exactly; every neighbour is its own class
    assert knn_loo_accuracy(generate_synthetic(cfg)) == 1.0


def test_user_shift_moves_features():
    base = generate_synthetic(make_synthetic_config(2, 2, 0.0, user_shift=0.0, seed=1))
    shifted = generate_synthetic(make_synthetic_config(2, 2, 0.0, user_shift=0.08, seed=1))
    delta = np.abs(base.feature_matrix() - shifted.feature_matrix())
    assert delta.max() > 0.05
