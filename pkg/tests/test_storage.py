import json

import numpy as np
import pytest

from dream.errors import DataError, DimensionError
from dream.storage import read_blob, read_features, write_blob, write_features


def test_blob_round_trip_keeps_dtypes(tmp_path):
    arrays = {"a": np.arange(6, dtype=np.int64).reshape(2, 3),
              "b": np.linspace(0, 1, 5, dtype=np.float32),
              "c": np.zeros((0, 4), dtype=np.float64)}
    write_blob(tmp_path / "x.blob", {"k": 3, "tag": "graph"}, arrays)
    meta, back = read_blob(tmp_path / "x.blob")
    assert meta == {"k": 3, "tag": "graph"}
    for name, arr in arrays.items():
        assert back[name].dtype == arr.dtype and np.array_equal(back[name], arr)
    assert not (tmp_path / "x.blob.tmp").exists()


def test_blob_big_endian_input_is_stored_little(tmp_path):
    arr = np.arange(4, dtype=">f8")
    write_blob(tmp_path / "x.blob", {}, {"a": arr})
    _, back = read_blob(tmp_path / "x.blob")
    assert back["a"].dtype.str == "<f8" and back["a"].tolist() == arr.tolist()


def test_blob_bad_magic(tmp_path):
    (tmp_path / "x.blob").write_bytes(b"NOTABLOB" + b"\0" * 16)
    with pytest.raises(DataError, match="bad magic"):
        read_blob(tmp_path / "x.blob")


def test_features_round_trip(tmp_path, rng):
    feats = rng.normal(size=(7, 3)).astype(np.float32)
    write_features(tmp_path / "vision", feats, "vision", ids=list(range(7)))
    for name in ("vision", "vision.f32", "vision.json"):
        arr, meta = read_features(tmp_path / name)
        assert arr.tobytes() == feats.tobytes()
        assert meta["modality"] == "vision" and meta["ids"] == list(range(7))
    side = json.loads((tmp_path / "vision.json").read_text())
    assert side["rows"] == 7 and side["dim"] == 3
    assert (tmp_path / "vision.f32").stat().st_size == 7 * 3 * 4


def test_features_must_be_2d(tmp_path):
    with pytest.raises(DimensionError):
        write_features(tmp_path / "v", np.zeros(3), "vision")


def test_corrupt_sidecar_names_file(tmp_path, rng):
    write_features(tmp_path / "text", rng.normal(size=(2, 2)), "text")
    (tmp_path / "text.json").write_text("{not json")
    with pytest.raises(DataError, match="text.json"):
        read_features(tmp_path / "text")


def test_size_mismatch_and_missing_file(tmp_path, rng):
    write_features(tmp_path / "text", rng.normal(size=(2, 2)), "text")
    (tmp_path / "text.json").write_text(json.dumps({"rows": 3, "dim": 2, "modality": "text"}))
    with pytest.raises(DataError, match="expected 3x2"):
        read_features(tmp_path / "text")
    with pytest.raises(DataError, match="missing"):
        read_features(tmp_path / "nothing")


def test_non_finite_features_rejected(tmp_path):
    bad = np.array([[1.0, np.nan], [0.0, 1.0]])
    write_features(tmp_path / "v", bad, "vision")
    with pytest.raises(DataError, match="row 0, col 1"):
        read_features(tmp_path / "v")


def test_csv_and_npy_readers(tmp_path, rng):
    feats = np.round(rng.normal(size=(4, 3)), 3)
    np.savetxt(tmp_path / "text.csv", feats, delimiter=",")
    arr, meta = read_features(tmp_path / "text.csv")
    assert np.allclose(arr, feats, atol=1e-6) and meta["dim"] == 3
    np.save(tmp_path / "vision.npy", feats)
    arr, meta = read_features(tmp_path / "vision.npy")
    assert arr.dtype == np.float32 and meta["rows"] == 4
    (tmp_path / "broken.csv").write_text("1,2\n3,x\n")
    with pytest.raises(DataError):
        read_features(tmp_path / "broken.csv")
