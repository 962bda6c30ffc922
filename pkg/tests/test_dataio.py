import json
import warnings

import numpy as np
import pytest

from netfair import dataio, nscm
from netfair.dataio import DataError, DataWarning, DatasetManifest, Standardizer, load_dataset


def write(tmp_path, nodes, edges="src,dst\n0,1\n", **manifest):
    (tmp_path / "nodes.csv").write_text(nodes)
    (tmp_path / "edges.csv").write_text(edges)
    fields = dict(name="toy", node_file="nodes.csv", edge_file="edges.csv", sensitive_column="sex",
                  label_column="label")
    fields.update(manifest)
    return DatasetManifest(**fields)


def test_three_row_toy(tmp_path):
    m = write(tmp_path, "sex,age,label,income\nmale,30,good,1.0\nfemale,40,bad,2.0\nmale,50,good,3.0\n",
              z_columns=("age",), positive_values={"sex": "female", "label": "good"}, standardize=False)
    g, t = load_dataset(m, root=tmp_path)
    assert g.num_edges == 1
    np.testing.assert_array_equal(t.s, [0, 1, 0])
    np.testing.assert_array_equal(t.y, [1, 0, 1])
    np.testing.assert_array_equal(t.z.ravel(), [30, 40, 50])
    np.testing.assert_array_equal(t.x.ravel(), [1, 2, 3])
    assert t.meta["mappings"]["sex"] == {"female": 1, "male": 0}


def test_standardised_columns(tmp_path):
    m = write(tmp_path, "sex,label,a,b\n0,0,1,5\n1,1,3,5\n1,0,5,5\n")
    with pytest.warns(DataWarning, match="'b' has zero variance"):
        _, t = load_dataset(m, root=tmp_path)
    np.testing.assert_allclose(t.x[:, 0].mean(), 0, atol=1e-12)
    np.testing.assert_allclose(t.x[:, 0].std(), 1)
    np.testing.assert_array_equal(t.x[:, 1], 0)
    assert t.meta["warnings"] == ["zero variance: b"]
    std = t.meta["x_standardizer"]
    np.testing.assert_allclose(std.inverse(t.x), [[1, 5], [3, 5], [5, 5]])


def test_categorical_one_hot(tmp_path):
    m = write(tmp_path, "sex,label,job,code\n0,1,clerk,2\n1,0,chef,1\n0,0,clerk,2\n",
              categorical_columns=("code",), standardize=False)
    _, t = load_dataset(m, root=tmp_path)
    assert t.meta["x_names"] == ("job=chef", "job=clerk", "code=1", "code=2")
    np.testing.assert_array_equal(t.x, [[0, 1, 0, 1], [1, 0, 1, 0], [0, 1, 0, 1]])


def test_reverse_edges_deduplicated(tmp_path):
    m = write(tmp_path, "sex,label,a\n0,0,1\n1,1,2\n0,1,3\n", edges="src,dst\n0,1\n1,0\n1,2\n")
    g, _ = load_dataset(m, root=tmp_path)
    assert g.num_edges == 2
    strict = write(tmp_path, "sex,label,a\n0,0,1\n1,1,2\n0,1,3\n", edges="src,dst\n0,1\n1,0\n", dedupe_edges=False)
    with pytest.raises(DataError, match="duplicate"):
        load_dataset(strict, root=tmp_path)


def test_dangling_edge_names_row(tmp_path):
    m = write(tmp_path, "sex,label,a\n0,0,1\n1,1,2\n", edges="src,dst\n0,1\n0,7\n")
    with pytest.raises(DataError, match=r"edges.csv:3: edge \(0, 7\)"):
        load_dataset(m, root=tmp_path)


@pytest.mark.parametrize("nodes, match", [
    ("sex,a\n0,1\n1,2\n", r"missing columns \['label'\]"),
    ("sex,label,a\n0,0,1\n2,1,2\n1,0,3\n", "'sex' must be binary, found 3"),
    ("sex,label,a\n0,0,1\n1,1,x2\n", r"nodes.csv:3: column 'a' has non-numeric value 'x2'"),
    ("sex,label,a\n0,0,1\n1,1\n", "nodes.csv:3: expected 3 fields, got 2"),
    ("sex,label,a\n", "no data rows"),
])
def test_node_file_errors(tmp_path, nodes, match):
    m = write(tmp_path, nodes)
    with pytest.raises(DataError, match=match):
        load_dataset(m, root=tmp_path)


def test_missing_file_and_positive_value(tmp_path):
    m = write(tmp_path, "sex,label,a\n0,0,1\n1,1,2\n", positive_values={"sex": "f"})
    with pytest.raises(DataError, match="positive value 'f'"):
        load_dataset(m, root=tmp_path)
    with pytest.raises(DataError, match="file not found"):
        load_dataset(DatasetManifest("x", "nope.csv", "edges.csv", "s", "y"), root=tmp_path)


def test_manifest_validation(tmp_path):
    with pytest.raises(DataError, match="more than one role"):
        DatasetManifest("x", "n", "e", "s", "y", z_columns=("s",))
    with pytest.raises(DataError, match="missing key 'label_column'; unknown key 'colour'"):
        DatasetManifest.from_mapping({"name": "x", "node_file": "n", "edge_file": "e",
                                      "sensitive_column": "s", "colour": 1})
    path = tmp_path / "m.json"
    path.write_text("not json")
    with pytest.raises(DataError, match="not a JSON"):
        dataio.read_manifest(path)
    m = DatasetManifest("x", "n", "e", "s", "y", z_columns=("a",), positive_values={"s": "1"})
    dataio.write_manifest(path, m)
    assert dataio.read_manifest(path) == m


def test_root_resolution(tmp_path, monkeypatch):
    monkeypatch.setenv(dataio.ROOT_ENV, str(tmp_path))
    assert dataio.resolve("a/b.csv") == tmp_path / "a" / "b.csv"
    assert dataio.resolve("/abs/x") == dataio.Path("/abs/x")


def test_written_dataset_round_trip(tmp_path):
    g, t, _ = nscm.generate_preset("d1", seed=2, n=150)
    dataio.write_dataset(tmp_path / "ds", g, t, provenance={"digest": t.meta["digest"], "seed": 2})
    g2, t2 = dataio.read_dataset(tmp_path / "ds")
    assert g2 == g
    for a, b in ((t.x, t2.x), (t.z, t2.z), (t.x_do[0], t2.x_do[0]), (t.x_do[1], t2.x_do[1])):
        np.testing.assert_array_equal(a, b)
    np.testing.assert_array_equal(t.s, t2.s)
    np.testing.assert_array_equal(t.y_do[1], t2.y_do[1])
    assert t2.meta["digest"] == t.meta["digest"] and t2.meta["seed"] == 2


def test_ground_truth_length_mismatch(tmp_path):
    g, t, _ = nscm.generate_preset("d1", seed=2, n=60)
    d = dataio.write_dataset(tmp_path / "ds", g, t)
    lines = (d / "interventional.csv").read_text().splitlines()
    (d / "interventional.csv").write_text("\n".join(lines[:-1]) + "\n")
    with pytest.raises(DataError, match="59 rows"):
        dataio.read_dataset(d)


def test_gen_config_formats():
    a = dataio.parse_gen_config("preset = d2  # dense\nseed = 3\n\nn = 500\n")
    b = dataio.parse_gen_config(json.dumps({"preset": "d2", "seed": 3, "n": 500}))
    assert a == b and a.n == 500
    with pytest.raises(DataError, match="line 1"):
        dataio.parse_gen_config("preset d2")
    with pytest.raises(DataError, match="invalid generator config"):
        dataio.parse_gen_config("n = 1")


def test_standardizer_is_invertible():
    data = np.random.default_rng(0).normal(3, 2, size=(50, 3))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        std, flat = Standardizer.fit(("a", "b", "c"), data)
    assert flat == []
    np.testing.assert_allclose(std.inverse(std.transform(data)), data)
