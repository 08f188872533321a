import json
import math

import numpy as np
import pytest

import permit_sentinel as ps


def small_devices():
    return [("r0", "reading"), ("r1", "reading"), ("s0", "setting"), ("b0", "status"), ("p0", "permit")]


def test_frame_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    values = rng.normal(size=(120, 5)).astype(np.float32)
    values[:, 3] = 5.0
    values[:, 4] = 1.0
    values[7, 0] = np.nan
    path = tmp_path / "h.fhf"
    ps.write_frame(path, values, small_devices(), start_time=1_700_000_000)
    back = ps.read_frame(path)
    assert back["start_time"] == 1_700_000_000
    assert back["tick_rate_hz"] == 15
    assert [tuple(d) for d in back["devices"]] == small_devices()
    np.testing.assert_array_equal(back["values"], values)


def test_invalid_frame_raises(tmp_path):
    values = np.zeros((10, 5), dtype=np.float32)
    values[:, 4] = 0.5  # permit must be 0 or 1
    with pytest.raises(ps.Error):
        ps.write_frame(tmp_path / "bad.fhf", values, small_devices())


def test_preprocess_matches_numpy():
    rng = np.random.default_rng(1)
    values = rng.normal(3.0, 2.0, size=(500, 5)).astype(np.float32)
    values[:, 3] = 2.0
    values[:, 4] = 1.0
    values[10:20, 1] = np.nan
    out = ps.preprocess(values, small_devices())
    filled = values[:, 1].copy()
    filled[10:20] = filled[9]
    expected = (filled - filled.astype(np.float64).mean()) / filled.astype(np.float64).std()
    np.testing.assert_allclose(out[:, 1], expected, atol=1e-5)
    np.testing.assert_array_equal(out[:, 3:], values[:, 3:])


def test_counts():
    assert ps.param_count("lstm", 1719) == 181_360
    assert ps.param_count("persistence", 40) == 0
    for lb, gap, lf, stride in [(30, 30, 60, 1), (45, 0, 60, 7)]:
        brute = len(range(0, 600 - (lb + gap + lf) + 1, stride))
        assert ps.window_count(600, lb, gap, lf, stride) == brute


def test_labels_and_gini():
    assert ps.canonicalize_label("KRF5 CS Fault") == "KRF5"
    assert ps.canonicalize_label("something unheard of") == "Other"
    assert math.isclose(ps.gini([5, 5]), 0.5)


def test_macro_f1_agrees_with_sklearn():
    metrics = pytest.importorskip("sklearn.metrics")
    rng = np.random.default_rng(2)
    names = ["KRF1", "KRF2", "KRF5", "LRF", "Other"]
    for _ in range(20):
        truth = list(rng.choice(names, size=40))
        pred = list(rng.choice(names, size=40))
        acc, f1 = ps.confusion_scores(truth, pred)
        assert math.isclose(acc, metrics.accuracy_score(truth, pred))
        assert math.isclose(f1, metrics.f1_score(truth, pred, average="macro", zero_division=0), rel_tol=1e-12)


def test_forest_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    x = [[c * 4.0 + rng.normal(), rng.normal()] for c in range(3) for _ in range(15)]
    y = [name for name in ["KRF1", "KRF2", "LRF"] for _ in range(15)]
    forest = ps.train_forest(x, y, n_estimators=20, seed=4)
    assert forest.classes == ["KRF1", "KRF2", "LRF"]
    label, confidence = forest.classify([8.0, 0.0])
    assert label == "LRF" and 0.5 < confidence <= 1.0
    forest.save(tmp_path / "f.psf")
    again = ps.Forest.load(tmp_path / "f.psf")
    assert all(again.classify(row) == forest.classify(row) for row in x)


def test_histogram():
    edges, counts = ps.outage_histogram([150, 15 * 61 * 60], ["KRF2", "KRF2"])
    assert len(edges) == 13 and math.isclose(edges[0], 10.0) and edges[-1] == 3600.0
    assert counts["KRF2"][0] == 1 and counts["KRF2"][-1] == 1


def test_cli(tmp_path):
    code, _, err = ps.run_cli(["synth", "--hours", "1", "--seed", "2", "--out", str(tmp_path / "data")])
    assert code == 0, err
    truth = json.loads((tmp_path / "data" / "truth.json").read_text())
    assert truth["version"] == 1
    code, _, err = ps.run_cli(["stats", "--events", str(tmp_path / "data" / "truth.json"), "--out", str(tmp_path / "s.json")])
    assert code == 0, err
    code, _, _ = ps.run_cli(["no-such-command"])
    assert code == 2
