import json

import numpy as np
import pytest

from src import storage
from src.errors import ParseError
from src.models import ClassLabel, Convention, LandmarkEntry, LandmarkFile
from src.shape_core import Shape


def write_json(path, data) -> None:
    path.write_text(json.dumps(data), encoding="utf-8")


def test_model_round_trip_is_bit_exact(mask17_model, tmp_path) -> None:
    path = tmp_path / "model.json"
    storage.save_model(mask17_model, path)
    loaded = storage.load_model(path)

    assert np.array_equal(loaded.mean, mask17_model.mean)
    assert np.array_equal(loaded.modes, mask17_model.modes)
    assert np.array_equal(loaded.eigenvalues, mask17_model.eigenvalues)
    assert loaded.n_points == mask17_model.n_points
    assert loaded.corpus_hash == mask17_model.corpus_hash
    assert loaded.variance_fraction == mask17_model.variance_fraction
    assert loaded.procrustes_iterations == mask17_model.procrustes_iterations


def test_model_file_layout(mask17_model, tmp_path) -> None:
    path = tmp_path / "model.json"
    storage.save_model(mask17_model, path)
    data = json.loads(path.read_text())
    assert data["schema_version"] == 1
    assert data["modes"]["rows"] == 34
    assert data["modes"]["cols"] == mask17_model.t
    assert data["modes"]["order"] == "row-major"
    assert len(data["modes"]["data"]) == 34 * mask17_model.t


def test_model_with_inconsistent_dims_is_rejected(mask17_model, tmp_path) -> None:
    data = storage.model_to_dict(mask17_model)
    data["modes"]["cols"] += 1
    path = tmp_path / "model.json"
    write_json(path, data)
    with pytest.raises(ParseError):
        storage.load_model(path)


def test_landmark_file_round_trip(tmp_path, rng) -> None:
    landmarks = LandmarkFile(
        convention=Convention.MASK17,
        entries=[
            LandmarkEntry(image_path="a.png", points=Shape(rng.normal(size=(17, 2))), class_label=ClassLabel.INCORRECT),
            LandmarkEntry(image_path=None, points=Shape(rng.normal(size=(17, 2))), yaw=12.5),
        ],
    )
    path = tmp_path / "landmarks.json"
    storage.save_landmarks(landmarks, path)
    loaded = storage.load_landmarks(path)

    assert loaded.convention is Convention.MASK17
    assert loaded.entries[0].class_label is ClassLabel.INCORRECT
    assert loaded.entries[1].yaw == 12.5
    for a, b in zip(loaded.shapes, landmarks.shapes):
        assert np.array_equal(a.points, b.points)


def test_malformed_json_reports_position(tmp_path) -> None:
    path = tmp_path / "broken.json"
    path.write_text('{"schema_version": 1,\n "entries": [', encoding="utf-8")
    with pytest.raises(ParseError, match="line 2"):
        storage.load_landmarks(path)


def test_wrong_point_count_names_entry(tmp_path) -> None:
    path = tmp_path / "landmarks.json"
    write_json(path, {
        "schema_version": 1,
        "convention": "ibug68-1based",
        "entries": [{"image_path": None, "points": [[0.0, 0.0]] * 68}, {"points": [[0.0, 0.0]] * 17}],
    })
    with pytest.raises(ParseError, match="entry 1"):
        storage.load_landmarks(path)


def test_unknown_schema_version(tmp_path) -> None:
    path = tmp_path / "landmarks.json"
    write_json(path, {"schema_version": 2, "convention": "mask17", "entries": []})
    with pytest.raises(ParseError):
        storage.load_landmarks(path)


def test_non_finite_points_are_rejected(tmp_path) -> None:
    path = tmp_path / "landmarks.json"
    path.write_text(
        '{"schema_version": 1, "convention": "mask17", "entries": [{"points": '
        + json.dumps([[0.0, 0.0]] * 16)[:-1] + ', [NaN, 1.0]]}]}',
        encoding="utf-8",
    )
    with pytest.raises(ParseError, match="entry 0"):
        storage.load_landmarks(path)


def test_manifest_round_trip(templates, tmp_path) -> None:
    path = tmp_path / "templates" / "manifest.json"
    storage.save_manifest(templates, path)
    loaded = storage.load_manifest(path)

    assert [t.name for t in loaded] == [t.name for t in templates]
    for original, reloaded in zip(templates, loaded):
        assert reloaded.view is original.view
        assert reloaded.triangulation == original.triangulation
        assert np.array_equal(reloaded.landmarks.points, original.landmarks.points)
        assert np.array_equal(reloaded.image, original.image)
        assert reloaded.nose_bridge == original.nose_bridge
        assert reloaded.nose_bridge is not None


def test_manifest_triangulation_is_one_based(templates, tmp_path) -> None:
    path = tmp_path / "manifest.json"
    storage.save_manifest(templates, path)
    data = json.loads(path.read_text())
    indices = [i for tri in data["templates"][0]["triangulation"] for i in tri]
    assert min(indices) >= 1
    assert max(indices) <= 17


def test_manifest_without_nose_bridge_loads(templates, tmp_path) -> None:
    path = tmp_path / "manifest.json"
    storage.save_manifest(templates, path)
    data = json.loads(path.read_text())
    del data["templates"][0]["nose_bridge"]
    write_json(path, data)
    assert storage.load_manifest(path)[0].nose_bridge is None


def test_manifest_rejects_malformed_nose_bridge(templates, tmp_path) -> None:
    path = tmp_path / "manifest.json"
    storage.save_manifest(templates, path)
    data = json.loads(path.read_text())
    data["templates"][2]["nose_bridge"] = ["x", 1.0]
    write_json(path, data)
    with pytest.raises(ParseError, match="entry 2"):
        storage.load_manifest(path)


def test_manifest_rejects_out_of_range_triangle(templates, tmp_path) -> None:
    path = tmp_path / "manifest.json"
    storage.save_manifest(templates, path)
    data = json.loads(path.read_text())
    data["templates"][1]["triangulation"][0] = [1, 2, 18]
    write_json(path, data)
    with pytest.raises(ParseError, match="entry 1"):
        storage.load_manifest(path)


def test_manifest_rejects_degenerate_triangle(templates, tmp_path) -> None:
    path = tmp_path / "manifest.json"
    storage.save_manifest(templates, path)
    data = json.loads(path.read_text())
    data["templates"][0]["triangulation"][0] = [1, 1, 2]
    write_json(path, data)
    with pytest.raises(ParseError, match="degenerate"):
        storage.load_manifest(path)


def test_image_round_trip(tmp_path, rng) -> None:
    image = rng.integers(0, 256, size=(9, 7, 4), dtype=np.uint8)
    path = tmp_path / "image.png"
    storage.save_image(image, path)
    np.testing.assert_array_equal(storage.load_image(path), image)


def test_unreadable_image_is_a_parse_error(tmp_path) -> None:
    path = tmp_path / "image.png"
    path.write_bytes(b"not a png")
    with pytest.raises(ParseError):
        storage.load_image(path)


def test_map_round_trip_quantizes_to_8_bits(tmp_path) -> None:
    values = np.array([[0.0, 0.5], [1.0, 0.25]])
    path = tmp_path / "map.png"
    storage.save_map(values, path)
    np.testing.assert_allclose(storage.load_map(path), np.rint(values * 255) / 255)


def test_rows_to_csv() -> None:
    assert storage.rows_to_csv(["a", "b"], [[1, "x"], [2, "y"]]) == "a,b\n1,x\n2,y\n"
