import numpy as np
import pytest

from lowrank.io import (
    MatrixFile,
    MatrixFormatError,
    encode_matrix,
    parse_complex,
    read_csv,
    read_matrix,
    read_pgm,
    write_csv,
    write_matrix,
    write_pgm,
)


@pytest.mark.parametrize(
    "cell, value",
    [("3", 3), ("-2.5e3", -2500), ("1+2i", 1 + 2j), ("1-2i", 1 - 2j), ("4i", 4j), (" 7 ", 7), ("0.5-1e-3j", 0.5 - 0.001j)],
)
def test_parse_complex(cell, value):
    assert parse_complex(cell) == value


@pytest.mark.parametrize("cell", ["", "abc", "1+2", "(1+2j)", "1i+2"])
def test_parse_complex_rejects(cell):
    with pytest.raises(ValueError):
        parse_complex(cell)


def test_csv_real_roundtrip(rng):
    a = rng.standard_normal((5, 4)) * 10.0 ** rng.integers(-20, 20, size=(5, 4))
    mf = read_csv(write_csv(a))
    assert mf.format == "csv-real"
    np.testing.assert_array_equal(mf.payload, a)


def test_csv_complex_roundtrip(rng):
    a = rng.standard_normal((3, 6)) + 1j * rng.standard_normal((3, 6))
    a[0, 0] = 2.0  # zero imaginary part still written as complex
    a[1, 1] = complex(1.0, -0.0)
    mf = read_csv(write_csv(a))
    assert mf.format == "csv-complex"
    np.testing.assert_array_equal(mf.payload, a)


def test_csv_mixed_cells():
    mf = read_csv("1,2i\n3-1i,4\n")
    np.testing.assert_array_equal(mf.payload, [[1, 2j], [3 - 1j, 4]])


def test_csv_errors_name_line():
    with pytest.raises(MatrixFormatError, match="line 2"):
        read_csv("1,2\n3\n")
    with pytest.raises(MatrixFormatError, match="line 3, column 2"):
        read_csv("1,2\n3,4\n5,x\n")
    with pytest.raises(MatrixFormatError):
        read_csv("\n\n")


@pytest.mark.parametrize("binary", [True, False])
@pytest.mark.parametrize("maxval", [255, 1023, 65535])
def test_pgm_roundtrip(rng, binary, maxval):
    pix = rng.integers(0, maxval + 1, size=(7, 11)).astype(float)
    data = write_pgm(pix, maxval, binary)
    mf = read_pgm(data)
    assert (mf.maxval, mf.binary) == (maxval, binary)
    np.testing.assert_array_equal(mf.payload, pix)
    assert encode_matrix(mf) == data


def test_pgm_quantizes_only_at_write():
    a = np.array([[-3.2, 0.4], [254.6, 300.0]])
    mf = read_pgm(write_pgm(a, 255))
    np.testing.assert_array_equal(mf.payload, [[0, 0], [255, 255]])


def test_pgm_header_comments():
    data = b"P2\n# a comment\n3 1 # trailing\n9\n1 2 9\n"
    np.testing.assert_array_equal(read_pgm(data).payload, [[1, 2, 9]])


@pytest.mark.parametrize(
    "data, where",
    [
        (b"P6\n1 1\n255\n\x00", "byte 0"),
        (b"P5\n2 2\n255\n\x00\x00", "byte 13"),
        (b"P5\n2 2\n70000\n", "maxval"),
        (b"P2\n2 1\n9\n1 10\n", "exceeds"),
        (b"P2\nx 1\n9\n", "byte 3"),
    ],
)
def test_pgm_errors(data, where):
    with pytest.raises(MatrixFormatError, match=where):
        read_pgm(data)


def test_read_write_matrix_files(tmp_path, rng):
    a = rng.standard_normal((3, 3))
    write_matrix(tmp_path / "a.csv", MatrixFile("csv-real", a))
    np.testing.assert_array_equal(read_matrix(tmp_path / "a.csv").payload, a)
    pix = rng.integers(0, 256, size=(4, 5)).astype(float)
    write_matrix(tmp_path / "a.pgm", MatrixFile("pgm", pix, maxval=255))
    np.testing.assert_array_equal(read_matrix(tmp_path / "a.pgm").payload, pix)


def test_like_promotes_complex():
    mf = MatrixFile("csv-real", np.zeros((1, 1)))
    assert mf.like(np.zeros((1, 1), dtype=complex)).format == "csv-complex"
