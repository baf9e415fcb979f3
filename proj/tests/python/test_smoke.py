import json

import numpy as np
import pytest

import coseg


def test_matmul_matches_numpy():
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=(3, 4)), rng.normal(size=(4, 2))
    np.testing.assert_allclose(coseg.matmul(a, b), a @ b, atol=1e-12)


def test_shape_mismatch_raises():
    with pytest.raises(coseg.DimensionError):
        coseg.matmul(np.ones((2, 3)), np.ones((2, 3)))


def test_softmax_columns_sum_to_one():
    s = coseg.softmax_columns(np.random.default_rng(1).normal(size=(5, 7)) * 10)
    np.testing.assert_allclose(s.sum(axis=0), np.ones(7), atol=1e-12)
    assert coseg.sigmoid(np.array([[0.0]]))[0, 0] == 0.5


def test_coattention_invariants():
    rng = np.random.default_rng(2)
    support = rng.normal(size=(4, 3, 3))
    query = rng.normal(size=(4, 2, 2))
    z = rng.normal(size=5)
    out = coseg.coattention_block(support, query, z, seed=3)
    assert out["affinity"].shape == (9, 4)
    np.testing.assert_allclose(out["affinity_c"].sum(axis=0), np.ones(4), atol=1e-12)
    np.testing.assert_allclose(out["affinity_r"].sum(axis=0), np.ones(9), atol=1e-12)
    assert np.all((out["query_gate"] > 0) & (out["query_gate"] < 1))
    assert out["query"].shape == (4, 4)
    # the semantic rows of the query summary are the tiled embedding
    np.testing.assert_allclose(out["query_summary"][4:], np.tile(z[:, None], (1, 4)), atol=1e-12)


def test_iou_and_aggregates():
    a = np.zeros((4, 4), dtype=np.uint8)
    a[:2, :2] = 1
    b = np.zeros_like(a)
    b[2:, 2:] = 1
    assert coseg.iou(a, a) == 1.0
    assert coseg.iou(a, b) == 0.0
    assert coseg.iou(np.zeros_like(a), np.zeros_like(a)) is None
    episodes = [("x", a, a), ("y", a, b)]
    assert coseg.mean_iou(episodes, ["x", "y"]) == pytest.approx(0.5)
    assert coseg.per_class_iou(episodes, ["x", "y"]) == {"x": 1.0, "y": 0.0}
    assert 0.0 < coseg.binary_iou(episodes) < 1.0


def test_folds():
    classes = [f"c{i:02d}" for i in range(65)]
    folds = coseg.make_folds(classes, "vos")
    assert len(folds) == 5
    assert [len(f["test_classes"]) for f in folds] == [13] * 5
    assert sum((f["test_classes"] for f in folds), []) == classes
    with pytest.raises(coseg.ConfigError):
        coseg.make_folds(classes[:19], "pascal")


def test_gradcheck():
    r = coseg.gradcheck(0)
    assert r["passed"]
    assert r["max_relative_error"] <= 1e-4


def test_cli_round_trip(tmp_path):
    data = tmp_path / "data"
    classes = coseg.generate_synthetic(data, n_classes=8, items_per_class=4, seed=1)
    assert len(classes) == 8
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"iterations": 2, "embed_dim": 8}))
    code, _, err = coseg.run_cli(["train", "--data", str(data), "--fold", "0", "--config",
                                  str(cfg), "--out", str(tmp_path / "ckpt")])
    assert code == 0, err
    reports = []
    for name in ("a.json", "b.json"):
        code, _, err = coseg.run_cli(["eval", "--data", str(data), "--fold", "0", "--ckpt",
                                      str(tmp_path / "ckpt"), "--episodes", "5", "--seed", "7",
                                      "--report", str(tmp_path / name)])
        assert code == 0, err
        reports.append((tmp_path / name).read_bytes())
    assert reports[0] == reports[1]
    assert len(json.loads(reports[0])["runs"]) == 5
    assert coseg.run_cli(["eval", "--fold", "0"])[0] == 1
