import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from rl4rec.errors import ParseError, ValidationError
from rl4rec.serialize import read_matrices, write_matrices

finite = st.floats(allow_nan=False, allow_infinity=False, width=64)
arrays = hnp.arrays(np.float64, hnp.array_shapes(min_dims=2, max_dims=2, min_side=1, max_side=5),
                    elements=finite)
names = st.text("abcdefghij_.0123456789", min_size=1, max_size=8)


@given(st.dictionaries(names, arrays, max_size=4))
def test_roundtrip_is_bit_exact(tmp_path_factory, blocks):
    path = tmp_path_factory.mktemp("m") / "x.mat"
    write_matrices(path, blocks)
    back = read_matrices(path)
    assert list(back) == list(blocks)
    for k in blocks:
        assert back[k].shape == blocks[k].shape
        assert np.array_equal(back[k], blocks[k])
        assert np.array_equal(np.signbit(back[k]), np.signbit(blocks[k]))


def test_vectors_and_scalars_become_rows(tmp_path):
    write_matrices(tmp_path / "x", {"v": np.arange(3.0), "s": 2.5})
    back = read_matrices(tmp_path / "x")
    assert back["v"].shape == (1, 3) and back["s"].shape == (1, 1)


def test_bad_inputs(tmp_path):
    with pytest.raises(ValidationError):
        write_matrices(tmp_path / "x", {"a b": np.zeros(1)})
    (tmp_path / "y").write_text("something else\n")
    with pytest.raises(ParseError, match="not a"):
        read_matrices(tmp_path / "y")
    (tmp_path / "z").write_text("RL4REC-MATRIX 1\nw 2 2\n1 2\n")
    with pytest.raises(ParseError, match="truncated"):
        read_matrices(tmp_path / "z")
    (tmp_path / "h").write_text("RL4REC-MATRIX 1\nw two 2\n")
    with pytest.raises(ParseError, match="header"):
        read_matrices(tmp_path / "h")
