import os
import subprocess

import numpy as np
import pytest

import leafwood as lw


@pytest.fixture(scope="module")
def small_tree():
    return lw.generate_tree(seed=3, pitch=0.045, branches=4, leaf_clusters=4, leaf_points=300)


def test_generate_tree_is_deterministic(small_tree):
    again = lw.generate_tree(seed=3, pitch=0.045, branches=4, leaf_clusters=4, leaf_points=300)
    assert np.array_equal(small_tree["points"], again["points"])
    assert np.array_equal(small_tree["labels"], again["labels"])
    assert set(np.unique(small_tree["labels"])) == {lw.LEAF, lw.WOOD}
    assert small_tree["linearity"] is None


def test_linearity_of_a_line_and_a_lone_point():
    line = np.column_stack([np.arange(50) * 0.01, np.zeros(50), np.zeros(50)])
    assert lw.linearity(line, 0.15).min() >= 0.999
    lone = np.vstack([line, [[10.0, 10.0, 10.0]]])
    assert lw.linearity(lone, 0.15)[-1] == 0.0


def test_radius_query_matches_brute_force():
    rng = np.random.default_rng(0)
    pts = rng.uniform(0, 1, size=(400, 3))
    got = lw.radius_query(pts, 7, 0.2)
    d2 = ((pts - pts[7]) ** 2).sum(axis=1)
    assert np.array_equal(got, np.flatnonzero(d2 <= 0.04))


def test_split_covers_every_point_once():
    rng = np.random.default_rng(1)
    pts = rng.normal(size=(1000, 3))
    assert lw.plan_split(1000, 300) == [250, 250, 250, 250]
    chunks = lw.split(pts, 300)
    assert len(chunks) == 4
    assert np.array_equal(np.sort(np.concatenate(chunks)), np.arange(1000))


def test_sampling():
    idx = lw.random_centroids(1000, 64, seed=5)
    assert len(set(idx.tolist())) == 64
    assert np.array_equal(idx, lw.random_centroids(1000, 64, seed=5))
    pts = np.array([[0.0, 0, 0], [1, 0, 0], [3, 0, 0], [10, 0, 0]])
    assert lw.farthest_point_sampling(pts, 3, 0).tolist() == [0, 3, 2]


def test_evaluate_and_tpmp():
    r = lw.evaluate(np.array([1, 1, 0, 0]), np.array([1, 0, 0, 1]))
    assert (r["tp"], r["fp"], r["tn"], r["fn"]) == (1, 1, 1, 1)
    assert r["oa"] == 0.5
    assert r["recall"] == r["sensitivity"]
    assert lw.tpmp(2_000_000, 60.0) == pytest.approx(30.0)
    with pytest.raises(ValueError):
        lw.evaluate(np.array([1, 0]), np.array([1]))


def test_xyz_round_trip(tmp_path, small_tree):
    pts = small_tree["points"]
    lin = lw.linearity(pts)
    path = tmp_path / "tree.xyz"
    lw.save_xyz(path, pts, small_tree["labels"], lin)
    back = lw.load_xyz(path)
    assert np.array_equal(back["points"], pts)
    assert np.array_equal(back["labels"], small_tree["labels"])
    assert np.array_equal(back["linearity"], lin)


@pytest.mark.parametrize("binary", [False, True])
def test_colored_ply_parses_with_plyfile(tmp_path, binary):
    plyfile = pytest.importorskip("plyfile")
    pts = np.array([[0.5, -1.25, 3.0], [1e-3, 2.0, -7.5], [4.0, 4.0, 4.0]])
    labels = np.array([1, 0, 1], dtype=np.uint8)
    path = tmp_path / "out.ply"
    lw.export_colored_ply(path, pts, labels, binary=binary)
    v = plyfile.PlyData.read(str(path))["vertex"]
    assert np.array_equal(np.column_stack([v["x"], v["y"], v["z"]]), pts)
    assert v["red"].tolist() == [139, 34, 139]
    assert v["green"].tolist() == [69, 139, 69]
    assert v["blue"].tolist() == [19, 34, 19]


def test_train_predict_checkpoint(tmp_path, small_tree):
    pts, labels = small_tree["points"], small_tree["labels"]
    lin = lw.linearity(pts)
    model = lw.Model.initial("toy", seed=2)
    assert model.parameter_count > 0
    losses = model.fit(pts, labels, lin, epochs=2, seed=2)
    assert len(losses) == 2 and all(np.isfinite(losses))
    pred = model.predict(pts, lin)
    assert pred.shape == labels.shape
    ckpt = tmp_path / "model.ckpt"
    model.save(ckpt)
    assert np.array_equal(lw.Model.load(ckpt).predict(pts, lin), pred)
    with pytest.raises(ValueError):
        lw.Model.initial("huge")


def test_errors_map_to_python_exceptions(tmp_path):
    with pytest.raises(OSError):
        lw.load_xyz(tmp_path / "missing.xyz")
    bad = tmp_path / "bad.xyz"
    bad.write_text("1 2 3\n1 2\n")
    with pytest.raises(ValueError, match="line 2"):
        lw.load_xyz(bad)
    with pytest.raises(ValueError):
        lw.linearity(np.zeros((4, 2)))


@pytest.mark.skipif(not os.environ.get("LEAFWOOD_CLI"), reason="command-line tool not built")
def test_cli_synth_and_featurize(tmp_path):
    cli = os.environ["LEAFWOOD_CLI"]
    tree = tmp_path / "tree.xyz"
    feat = tmp_path / "feat.xyz"
    subprocess.run([cli, "synth", "--out", str(tree), "--seed", "4", "--pitch", "0.045",
                    "--branches", "3", "--leaf-clusters", "3", "--leaf-points", "100"], check=True)
    subprocess.run([cli, "featurize", "--in", str(tree), "--out", str(feat)], check=True)
    cloud = lw.load_xyz(feat)
    assert np.allclose(cloud["linearity"], lw.linearity(cloud["points"]), atol=0, rtol=0)
