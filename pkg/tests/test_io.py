import numpy as np
import pytest

from partmatch import synthetic as SY
from partmatch.io import (CorrespondenceFile, CorrespondenceFormatError, load_correspondences,
                          load_ground_truth, save_correspondences, save_ground_truth)
from partmatch.mesh import extend
from partmatch.product import build_product_space


def records():
    prod = build_product_space(extend(SY.tetrahedron()), extend(SY.single_triangle()))
    return [prod.column(j) for j in (0, 31, 99)]


def test_roundtrip(tmp_path):
    X, Y = SY.tetrahedron(), SY.single_triangle()
    cf = CorrespondenceFile(records(), X.checksum(), Y.checksum(), 2, "optimal", 1.25)
    save_correspondences(tmp_path / "a.corr", cf)
    back = load_correspondences(tmp_path / "a.corr")
    keys = ("x_id", "y_id", "x_tag", "y_tag", "pairing")
    assert [{k: r[k] for k in keys} for r in cf.records] == back.records
    assert (back.level, back.status, back.objective) == (2, "optimal", 1.25)
    back.check_meshes(X, Y)
    with pytest.raises(CorrespondenceFormatError):
        back.check_meshes(SY.octahedron(), Y)


def test_objective_exact(tmp_path):
    v = 0.1 + 0.2
    save_correspondences(tmp_path / "a.corr", CorrespondenceFile(records(), objective=v))
    assert load_correspondences(tmp_path / "a.corr").objective == v


@pytest.mark.parametrize("text", [
    "",
    "not a header\n",
    "# partmatch correspondences\nrecords 2\n0 1 triangle triangle 0\n",
    "# partmatch correspondences\nrecords 1\n0 1 blob triangle 0\n",
    "# partmatch correspondences\nrecords x\n",
    "# partmatch correspondences\nlevel 0\n",
])
def test_malformed(tmp_path, text):
    (tmp_path / "a.corr").write_text(text)
    with pytest.raises(CorrespondenceFormatError):
        load_correspondences(tmp_path / "a.corr")


def test_binary_rejected(tmp_path):
    (tmp_path / "a.corr").write_bytes(b"\xff\xfe\x00\x81")
    with pytest.raises(CorrespondenceFormatError):
        load_correspondences(tmp_path / "a.corr")


def test_ground_truth(tmp_path):
    gt = np.array([3, -1, 0, 7])
    save_ground_truth(tmp_path / "gt.txt", gt)
    np.testing.assert_array_equal(load_ground_truth(tmp_path / "gt.txt"), gt)
    (tmp_path / "bad.txt").write_text("1\nx\n")
    with pytest.raises(CorrespondenceFormatError):
        load_ground_truth(tmp_path / "bad.txt")
