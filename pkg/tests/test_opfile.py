import numpy as np
import pytest
from conftest import GOLDEN

from fsbp import opfile
from fsbp.operators import map_to_block


@pytest.mark.parametrize("name", sorted(GOLDEN))
def test_round_trip_is_lossless(name, golden_ops, tmp_path):
    _, ops = golden_ops[name]
    path = tmp_path / f"{name}.txt"
    opfile.write(ops, path)
    back = opfile.read(path)
    for field in opfile.SECTIONS:
        np.testing.assert_array_equal(getattr(back, field), getattr(ops, field))
    assert back.tag == ops.tag
    assert back.element == ops.element


def test_round_trip_keeps_element(golden_ops):
    _, ops = golden_ops["exp"]
    mapped = map_to_block(ops, (0.125, 0.375))
    back = opfile.loads(opfile.dumps(mapped))
    assert back.element == (0.125, 0.375)


def test_header_format(golden_ops):
    _, ops = golden_ops["trig"]
    first = opfile.dumps(ops).splitlines()[0]
    assert first == "fsbp v1 N=4 space=trig:d=1 element=-1,1"


@pytest.fixture
def text(golden_ops):
    return opfile.dumps(golden_ops["poly"][1])


def test_bad_header(text):
    with pytest.raises(opfile.OperatorFileError, match="header"):
        opfile.loads(text.replace("fsbp v1", "fsbp v2"))


def test_empty():
    with pytest.raises(opfile.OperatorFileError):
        opfile.loads("\n\n")


def test_missing_section(text):
    with pytest.raises(opfile.OperatorFileError, match="D2"):
        opfile.loads(text.replace("\nD2\n", "\nDX\n"))


def test_wrong_shape(text):
    lines = text.splitlines()
    lines[lines.index("Q") + 1] += " 1.0"
    with pytest.raises(opfile.OperatorFileError, match="shape"):
        opfile.loads("\n".join(lines))


def test_truncated(text):
    with pytest.raises(opfile.OperatorFileError):
        opfile.loads("\n".join(text.splitlines()[:-1]))


def test_trailing_content(text):
    with pytest.raises(opfile.OperatorFileError, match="trailing"):
        opfile.loads(text + "extra\n")


def test_non_numeric(text):
    lines = text.splitlines()
    lines[lines.index("P") + 1] = "a b c"
    with pytest.raises(opfile.OperatorFileError):
        opfile.loads("\n".join(lines))
