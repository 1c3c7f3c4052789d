import collections

import numpy as np
import pytest

from deface_bench.errors import ParseError
from deface_bench.score_io import (
    ATTRIBUTE_HEADER,
    NUM_LANDMARKS,
    REGION_VOCABULARY,
    AttributeRecord,
    AttributeTable,
    DetectionTable,
    EmbeddingTable,
    Heatmap,
    LandmarkSet,
    detection_rate,
    emit_attributes,
    emit_detections,
    emit_embeddings,
    emit_heatmap,
    emit_landmarks,
    load_attributes,
    load_confidences,
    load_detections,
    load_embeddings,
    load_heatmap,
    load_landmarks,
    load_region_map,
)


def test_embeddings_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    entries = {f"img{i}": rng.normal(size=5) for i in range(7)}
    table = EmbeddingTable(model_tag="m", dim=5, entries=entries)
    p = tmp_path / "emb.csv"
    emit_embeddings(table, p)
    back = load_embeddings(p, model_tag="m")
    assert back.dim == 5
    assert set(back.entries) == set(entries)
    for k in entries:
        assert np.allclose(back.vector(k), entries[k], rtol=0, atol=5e-7)


def test_embeddings_reject_ragged_and_nan(tmp_path):
    p = tmp_path / "e.csv"
    p.write_text("image_id,v0,v1\na,1.0,2.0\nb,3.0\n")
    with pytest.raises(ParseError):
        load_embeddings(p)
    p.write_text("image_id,v0,v1\na,1.0,nan\n")
    with pytest.raises(ParseError):
        load_embeddings(p)
    p.write_text("image_id,v0,v1\na,1,2\na,3,4\n")
    with pytest.raises(ParseError):
        load_embeddings(p)


def test_embedding_table_validates_shape():
    with pytest.raises(ValueError):
        EmbeddingTable(model_tag="m", dim=3, entries={"a": np.zeros(2)})
    with pytest.raises(ValueError):
        EmbeddingTable(model_tag="m", dim=2, entries={"a": np.array([1.0, np.inf])})


def test_detections_roundtrip_and_rate(tmp_path):
    table = DetectionTable(detector_tag="d", entries={"a": True, "b": False, "c": True})
    p = tmp_path / "det.csv"
    emit_detections(table, p)
    back = load_detections(p)
    assert back.entries == table.entries
    assert detection_rate(back) == pytest.approx(2 / 3)
    assert detection_rate(back, ["b"]) == 0.0
    with pytest.raises(ValueError):
        detection_rate(DetectionTable(detector_tag="d", entries={}))


def test_detections_reject_nonbinary(tmp_path):
    p = tmp_path / "det.csv"
    p.write_text("image_id,detected\na,yes\n")
    with pytest.raises(ParseError):
        load_detections(p)


def test_attributes_roundtrip(tmp_path):
    entries = {
        "a": AttributeRecord(gender="Female", race="Asian", emotion="happy", age=31.0,
                             pose=np.array([1.0, -2.0, 0.5])),
        "b": AttributeRecord(gender="Male"),  # everything else absent
    }
    table = AttributeTable(estimator_tag="t", entries=entries)
    p = tmp_path / "attr.csv"
    emit_attributes(table, p)
    back = load_attributes(p)
    assert back.entries["a"].emotion == "happy"
    assert back.entries["a"].age == 31.0
    assert np.allclose(back.entries["a"].pose, [1.0, -2.0, 0.5])
    assert back.entries["b"].race is None
    assert back.entries["b"].pose is None


def test_attributes_pose_all_or_none(tmp_path):
    p = tmp_path / "attr.csv"
    p.write_text(",".join(ATTRIBUTE_HEADER) + "\n" + "a,,,,,1.0,,\n")
    with pytest.raises(ParseError):
        load_attributes(p)


def test_attribute_record_validation():
    with pytest.raises(ValueError):
        AttributeRecord(emotion="bored")
    with pytest.raises(ValueError):
        AttributeRecord(age=130.0)
    with pytest.raises(ValueError):
        AttributeRecord(pose=np.array([1.0, 2.0]))


def test_heatmap_roundtrip(tmp_path):
    rng = np.random.default_rng(1)
    hm = Heatmap(values=rng.random((6, 9)))
    p = tmp_path / "h.hmap"
    emit_heatmap(hm, p)
    back = load_heatmap(p)
    assert back.shape == (6, 9)
    assert np.allclose(back.values, hm.values, atol=1e-7)


def test_heatmap_rejects_bad_files(tmp_path):
    p = tmp_path / "h.hmap"
    p.write_bytes(b"NOPE" + bytes(12))
    with pytest.raises(ParseError):
        load_heatmap(p)
    import struct

    p.write_bytes(b"HMAP" + struct.pack("<III", 2, 2, 0) + bytes(4 * 3))
    with pytest.raises(ParseError):
        load_heatmap(p)
    # out-of-range cell values
    bad = np.array([[2.0]], dtype="<f4")
    p.write_bytes(b"HMAP" + struct.pack("<III", 1, 1, 0) + bad.tobytes())
    with pytest.raises(ParseError):
        load_heatmap(p)


def test_heatmap_validates_range():
    with pytest.raises(ValueError):
        Heatmap(values=np.array([[0.5, 1.5]]))
    with pytest.raises(ValueError):
        Heatmap(values=np.array([0.5]))


def test_region_map_is_a_partition():
    mapping = load_region_map()
    assert set(mapping) == set(range(NUM_LANDMARKS))
    counts = collections.Counter(mapping.values())
    assert set(counts) == set(REGION_VOCABULARY)
    # every region is non-empty, the full map covers all 468 indices
    assert all(c > 0 for c in counts.values())
    assert sum(counts.values()) == NUM_LANDMARKS


def test_landmarks_roundtrip(tmp_path):
    region_map = load_region_map()
    rng = np.random.default_rng(2)
    sets = {
        f"img{i}": LandmarkSet(
            image_id=f"img{i}", points=rng.random((NUM_LANDMARKS, 2)), region_map=region_map
        )
        for i in range(2)
    }
    p = tmp_path / "lm.csv"
    emit_landmarks(sets, p)
    back = load_landmarks(p, region_map=region_map)
    assert set(back) == set(sets)
    for k in sets:
        assert np.allclose(back[k].points, sets[k].points, atol=5e-8)


def test_landmarks_require_full_index_set(tmp_path):
    p = tmp_path / "lm.csv"
    p.write_text("image_id,idx,x,y\nimg0,0,0.5,0.5\n")
    with pytest.raises(ParseError):
        load_landmarks(p)


def test_landmark_region_lookup():
    region_map = load_region_map()
    pts = np.full((NUM_LANDMARKS, 2), 0.5)
    lm = LandmarkSet(image_id="x", points=pts, region_map=region_map)
    lips = lm.region_indices("lips")
    assert len(lips) > 0
    assert all(region_map[i] == "lips" for i in lips)


def test_confidences(tmp_path):
    p = tmp_path / "conf.csv"
    p.write_text("probe_id,gallery_id,confidence\na,b,71.5\nc,d,0\n")
    rows = load_confidences(p)
    assert rows == [("a", "b", 71.5), ("c", "d", 0.0)]
    p.write_text("probe_id,gallery_id,confidence\na,b,101\n")
    with pytest.raises(ParseError):
        load_confidences(p)
