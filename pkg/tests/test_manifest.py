import numpy as np
import pytest

from agedict.errors import DimensionError, FormatError, InputError
from agedict.manifest import load_batches, load_manifest
from agedict.ppm import ImageShape, save_image


def write_images(root, names, shape=ImageShape(2, 2, 1)):
    for i, name in enumerate(names):
        save_image(np.full(shape.size, (i + 1) / 10), shape, root / name)


def write_manifest(root, rows, header="person_id,group,path"):
    path = root / "manifest.csv"
    path.write_text(header + "\n" + "\n".join(rows) + "\n")
    return path


def test_pairs_neighbouring_groups(tmp_path):
    names = ["a1.pgm", "a2.pgm", "a3.pgm", "b1.pgm", "b3.pgm", "a2b.pgm"]
    write_images(tmp_path, names)
    path = write_manifest(tmp_path, [
        "alice,1,a1.pgm", "alice,2,a2.pgm", "alice,3,a3.pgm", "alice,2,a2b.pgm",
        "bob,1,b1.pgm", "bob,3,b3.pgm",
    ])
    man = load_manifest(path)
    assert man.G == 3
    pairs = man.pairs()
    assert [p[0] for p in pairs[1]] == ["alice"] and [p[0] for p in pairs[2]] == ["alice"]
    # smallest path wins when a person has two images in a group
    assert pairs[1][0][2].endswith("a2.pgm")
    batches, shape = load_batches(man, offset=0.5)
    assert shape == ImageShape(2, 2, 1)
    assert batches[0].younger.shape == (4, 1)
    np.testing.assert_allclose(batches[0].younger[:, 0], round(0.1 * 255) / 255 - 0.5)


def test_errors_carry_line_numbers(tmp_path):
    path = write_manifest(tmp_path, ["a,1,x.pgm", "a,two,y.pgm"])
    with pytest.raises(FormatError, match=":3:"):
        load_manifest(path)


@pytest.mark.parametrize("rows,header", [
    (["a,1,x.pgm"], "person,group,path"),
    (["a,1,x.pgm", "b,1,x.pgm"], "person_id,group,path"),
    (["a,0,x.pgm"], "person_id,group,path"),
    (["a,1"], "person_id,group,path"),
])
def test_format_errors(tmp_path, rows, header):
    with pytest.raises(FormatError):
        load_manifest(write_manifest(tmp_path, rows, header))


def test_group_bound(tmp_path):
    with pytest.raises(FormatError):
        load_manifest(write_manifest(tmp_path, ["a,4,x.pgm"]), G=3)


def test_empty_and_missing(tmp_path):
    with pytest.raises(InputError):
        load_manifest(write_manifest(tmp_path, []))
    with pytest.raises(FileNotFoundError):
        load_manifest(tmp_path / "nope.csv")


def test_batch_without_pairs(tmp_path):
    write_images(tmp_path, ["a1.pgm", "a2.pgm"])
    man = load_manifest(write_manifest(tmp_path, ["a,1,a1.pgm", "a,2,a2.pgm"]), G=3)
    with pytest.raises(InputError):
        load_batches(man)


def test_shape_mismatch(tmp_path):
    save_image(np.zeros(4), ImageShape(2, 2, 1), tmp_path / "a.pgm")
    save_image(np.zeros(6), ImageShape(3, 2, 1), tmp_path / "b.pgm")
    man = load_manifest(write_manifest(tmp_path, ["a,1,a.pgm", "a,2,b.pgm"]))
    with pytest.raises(DimensionError):
        load_batches(man)
