import json
import math
import os
import struct
import subprocess

import numpy as np
import pytest

import clens


def softmax_log(rng, t, n, c):
    z = rng.normal(size=(t, n, c))
    p = np.exp(z - z.max(axis=-1, keepdims=True))
    return (p / p.sum(axis=-1, keepdims=True)).astype(np.float32)


def test_cpl_round_trip_is_f32_exact(tmp_path):
    probs = softmax_log(np.random.default_rng(0), 3, 5, 4)
    path = tmp_path / "run.cpl"
    clens.write_cpl(path, "run-a", probs)
    assert path.stat().st_size == clens.cpl_file_size(3, 5, 4, "run-a")
    model_id, back = clens.read_cpl(path)
    assert model_id == "run-a"
    assert back.shape == (3, 5, 4)
    assert back.dtype == np.float32
    assert np.array_equal(back, probs)


def test_cpl_header_layout():
    probs = np.array([[[0.25, 0.75], [1.0, 0.0]]], dtype=np.float32)
    data = clens.encode_cpl("m", probs)
    assert data[:4] == b"CPL1"
    version, t, n, c, id_len = struct.unpack_from("<IIIIH", data, 4)
    assert (version, t, n, c, id_len) == (1, 1, 2, 2, 1)
    assert data[22:23] == b"m"
    assert struct.unpack_from("<4f", data, 23) == (0.25, 0.75, 1.0, 0.0)


@pytest.mark.parametrize(
    "mutate, code",
    [
        (lambda b: b"XXXX" + b[4:], "BadMagic"),
        (lambda b: b[:-3], "TruncatedFile"),
        (lambda b: b + b"\0", "TrailingData"),
    ],
)
def test_malformed_cpl_rejected(mutate, code):
    data = clens.encode_cpl("m", softmax_log(np.random.default_rng(1), 2, 3, 2))
    with pytest.raises(clens.ClensError) as err:
        clens.decode_cpl(mutate(data))
    assert err.value.code == code


def test_bad_shapes_and_rows_rejected():
    with pytest.raises(clens.ClensError) as err:
        clens.encode_cpl("m", np.ones((3, 4), dtype=np.float32))
    assert err.value.code == "ShapeMismatch"
    with pytest.raises(clens.ClensError) as err:
        clens.encode_cpl("m", np.full((1, 2, 2), 0.6, dtype=np.float32))
    assert err.value.code == "RowSumOutOfTolerance"


def test_labels_and_metrics_round_trip():
    text = clens.format_labels([0, 2, 1])
    assert clens.parse_labels(text, 3, 3) == [0, 2, 1]
    with pytest.raises(clens.ClensError):
        clens.parse_labels(text, 3, 2)
    rows = [(1, "train", 1.5, 0.25), (2, "train", 0.75, 0.5), (1, "id", 1.25, 0.5)]
    assert clens.parse_metrics(clens.format_metrics(rows)) == rows


def test_manifest_fragments_merge():
    datasets = {
        "datasets": [{"name": "id", "role": "id", "n_samples": 4, "labels_path": "id.labels.csv"}],
        "runs": [],
    }
    runs = {
        "datasets": [{"name": "id", "role": "id", "n_samples": 4}],
        "runs": [
            {"model_id": "r0", "family": "mlp", "seed": 0, "param_count": 10, "logs": {"id": "logs/r0/id.cpl"}}
        ],
    }
    merged = json.loads(clens.merge_manifests(json.dumps(datasets), json.dumps(runs)))
    assert [d["name"] for d in merged["datasets"]] == ["id"]
    assert merged["datasets"][0]["labels_path"] == "id.labels.csv"
    assert [r["model_id"] for r in merged["runs"]] == ["r0"]
    assert json.loads(clens.normalize_manifest(json.dumps(merged))) == merged
    conflict = {"datasets": [{"name": "id", "role": "ood", "n_samples": 4}], "runs": []}
    with pytest.raises(clens.ClensError):
        clens.merge_manifests(json.dumps(datasets), json.dumps(conflict))
    with pytest.raises(clens.ClensError) as err:
        clens.normalize_manifest("{}")
    assert err.value.code == "SchemaError"


def test_entropy_and_confusion():
    assert math.isclose(clens.entropy([0.5, 0.25, 0.25]), 1.5 * math.log(2), abs_tol=1e-12)
    assert math.isclose(clens.entropy([0.25] * 4), math.log(4), abs_tol=1e-12)
    probs = softmax_log(np.random.default_rng(2), 4, 6, 3)
    scores = clens.confusion_scores([probs, probs], 1, 4)
    mean = probs.astype(np.float64)
    mean /= mean.sum(axis=-1, keepdims=True)
    expected = (-(mean * np.log(mean)).sum(axis=-1)).mean(axis=0)
    assert np.allclose(scores, expected, atol=1e-9)


def test_cli_in_process(tmp_path):
    code, out, _ = clens.run_cli(["gen", "--preset", "colored2", "--seed", "1", "--out", str(tmp_path)])
    assert code == 0
    assert (tmp_path / "ood_all_green.cft").exists()
    assert str(tmp_path / "datasets.json") in out
    code, _, err = clens.run_cli(["score", "--out", str(tmp_path)])
    assert code == 4
    assert "manifest" in err


@pytest.mark.skipif("CLENS_BIN" not in os.environ, reason="CLENS_BIN not set")
def test_binary_exit_codes(tmp_path):
    binary = os.environ["CLENS_BIN"]
    assert subprocess.run([binary, "--help"], capture_output=True).returncode == 0
    assert subprocess.run([binary, "score", "--nope"], capture_output=True).returncode == 4
    missing = subprocess.run(
        [binary, "score", "--out", str(tmp_path), "--manifest", str(tmp_path / "none.json")],
        capture_output=True,
    )
    assert missing.returncode == 3
