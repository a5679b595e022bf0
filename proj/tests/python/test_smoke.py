import math
import os
from pathlib import Path

import numpy as np
import pytest

import foldmap

FIXTURES = Path(os.environ.get("FOLDMAP_FIXTURES_DIR", Path(__file__).resolve().parents[1] / "fixtures"))


def test_load_and_distance_matrix_matches_numpy():
    s = foldmap.load_structure(FIXTURES / "structures" / "1abcA01.pqr")
    assert s.domain_id == "1abcA01"
    assert s.has_charges
    ca = s.select("CA")
    d = foldmap.distance_matrix(s, "CA")
    xyz = np.array([a.position for a in ca])
    ref = np.linalg.norm(xyz[:, None, :] - xyz[None, :, :], axis=-1)
    assert d.shape == (len(ca), len(ca))
    np.testing.assert_allclose(d, ref, atol=1e-12)


def test_anm_diagonal_and_symmetry():
    s = foldmap.load_structure(FIXTURES / "structures" / "1abcA01.pqr")
    c = foldmap.anm_cross_correlation(s, "CA")
    np.testing.assert_allclose(np.diag(c), 1.0, atol=1e-9)
    np.testing.assert_allclose(c, c.T, atol=1e-12)


def test_stack_round_trip(tmp_path):
    s = foldmap.load_structure(FIXTURES / "structures" / "1abcA01.pqr")
    stack = foldmap.build_map_stack(s, "BB")
    ch = stack.channels
    assert ch.shape == (3, 255, 255)
    assert ch[0].min() >= 0 and ch[0].max() <= 100
    assert stack.nb_valid and stack.selection == "BB"
    path = tmp_path / "s.fmap"
    foldmap.write_stack_file(stack, path)
    for back in (foldmap.MapStack.from_bytes(stack.to_bytes()), foldmap.read_stack_file(path)):
        assert back.domain_id == stack.domain_id
        assert back.nb_valid == stack.nb_valid and back.selection == stack.selection
        np.testing.assert_array_equal(back.channels, stack.channels)


def test_bicubic_preserves_constant():
    out = foldmap.bicubic_resize(np.full((5, 7), 3.25), 9, 4)
    np.testing.assert_allclose(out, 3.25, atol=1e-12)


def test_split_sizes():
    train, val, test = foldmap.split_sizes(28188)
    assert train + val + test == 28188
    assert test == math.ceil(0.1 * 28188)


def test_metrics():
    assert foldmap.accuracy([0, 1, 1, 2], [0, 1, 2, 2]) == 0.75
    assert foldmap.homogeneity([0, 0, 1, 1], [5, 5, 7, 7]) == pytest.approx(1.0)
    assert foldmap.weighted_f1([0, 1], [0, 1], 2) == pytest.approx(1.0)
    assign, centroids, inertia = foldmap.kmeans([[0.0], [0.1], [10.0], [10.1]], 2, seed=1)
    assert assign[0] == assign[1] != assign[2] == assign[3]
    assert inertia == pytest.approx(0.01)
    assert foldmap.combine_probabilities([[0.6, 0.4], [0.2, 0.8]], 0.5) == pytest.approx([0.4, 0.6])


def test_errors_carry_kind_and_exit_code(tmp_path):
    with pytest.raises(foldmap.FoldmapError) as info:
        foldmap.load_structure(tmp_path / "missing.pqr")
    assert info.value.exit_code == 2
    with pytest.raises(foldmap.FoldmapError) as info:
        foldmap.MapStack.from_bytes(b"NOTASTACK")
    assert info.value.exit_code == 3


def test_cli_preprocess(tmp_path):
    code, out, err = foldmap.run_cli([
        "preprocess",
        "--cath-list", str(FIXTURES / "cath-list.txt"),
        "--structures", str(FIXTURES / "structures"),
        "--out", str(tmp_path / "stacks"),
    ])
    assert code == 0, err
    assert out.startswith("preprocessed\t5")
    assert foldmap.run_cli(["--help"])[0] == 0
