"""Read and write matrices as CSV (real or complex cells) and PGM images."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

FORMATS = ("csv-real", "csv-complex", "pgm")


class MatrixFormatError(ValueError):
    """Malformed matrix file; the message names the line or byte offset."""


@dataclass(frozen=True)
class MatrixFile:
    format: str
    payload: np.ndarray
    maxval: int | None = None
    binary: bool = True

    def like(self, payload: np.ndarray) -> "MatrixFile":
        """Same format and image parameters, different payload."""
        fmt = self.format
        if fmt == "csv-real" and np.iscomplexobj(payload):
            fmt = "csv-complex"
        return MatrixFile(fmt, payload, self.maxval, self.binary)


def parse_complex(cell: str) -> complex:
    """Parse ``a``, ``a+bi``, ``a-bi`` or ``bi``; ``j`` is accepted for ``i``."""
    text = cell.strip()
    if text.endswith("i"):
        text = text[:-1] + "j"
    if not text or "(" in text or "j" in text[:-1] or " " in text:
        raise ValueError(f"not a number: {cell!r}")
    return complex(text)


def format_real(x: float) -> str:
    return f"{x:.17g}"


def format_complex(z: complex) -> str:
    re_part, im_part = format_real(z.real), format_real(abs(z.imag))
    sign = "-" if np.signbit(z.imag) else "+"
    return f"{re_part}{sign}{im_part}i"


def read_csv(text: str) -> MatrixFile:
    rows = []
    is_complex = False
    for lineno, row in enumerate(csv.reader(io.StringIO(text)), start=1):
        if not row or all(not cell.strip() for cell in row):
            continue
        vals = []
        for col, cell in enumerate(row, start=1):
            try:
                v = parse_complex(cell)
            except ValueError:
                raise MatrixFormatError(f"line {lineno}, column {col}: cannot parse {cell!r}") from None
            if v.imag != 0 or cell.strip()[-1:] in "ij":
                is_complex = True
            vals.append(v)
        if rows and len(vals) != len(rows[0]):
            raise MatrixFormatError(
                f"line {lineno}: expected {len(rows[0])} columns, found {len(vals)}"
            )
        rows.append(vals)
    if not rows:
        raise MatrixFormatError("line 1: no data")
    arr = np.array(rows, dtype=np.complex128)
    if not np.all(np.isfinite(arr)):
        raise MatrixFormatError("matrix contains non-finite values")
    if is_complex:
        return MatrixFile("csv-complex", arr)
    return MatrixFile("csv-real", arr.real.copy())


def write_csv(a: np.ndarray) -> str:
    fmt = format_complex if np.iscomplexobj(a) else format_real
    return "".join(",".join(fmt(x) for x in row) + "\n" for row in a)


def _pgm_tokens(data: bytes, count: int):
    # Header tokens as (token, offset), skipping whitespace and comments.
    pos = 0
    out = []
    while len(out) < count:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos >= len(data):
            raise MatrixFormatError(f"byte {pos}: truncated PGM header")
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace() and data[pos : pos + 1] != b"#":
            pos += 1
        out.append((data[start:pos], start))
    return out, pos


def read_pgm(data: bytes) -> MatrixFile:
    if data[:2] not in (b"P2", b"P5"):
        raise MatrixFormatError("byte 0: expected PGM magic 'P2' or 'P5'")
    binary = data[:2] == b"P5"
    tokens, pos = _pgm_tokens(data[2:], 3)
    header = []
    for tok, off in tokens:
        try:
            header.append(int(tok))
        except ValueError:
            raise MatrixFormatError(f"byte {off + 2}: bad header field {tok!r}") from None
    width, height, maxval = header
    if width < 1 or height < 1:
        raise MatrixFormatError("byte 2: image dimensions must be positive")
    if not 0 < maxval <= 65535:
        raise MatrixFormatError(f"byte 2: maxval {maxval} outside 1..65535")
    pos += 2
    n = width * height
    if binary:
        pos += 1  # single whitespace after maxval
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        need = n * dtype.itemsize
        body = data[pos : pos + need]
        if len(body) < need:
            raise MatrixFormatError(f"byte {pos + len(body)}: expected {need} bytes of pixel data")
        pix = np.frombuffer(body, dtype=dtype).astype(np.float64)
    else:
        fields = data[pos:].split()
        if len(fields) < n:
            raise MatrixFormatError(f"byte {len(data)}: expected {n} samples, found {len(fields)}")
        try:
            pix = np.array([int(f) for f in fields[:n]], dtype=np.float64)
        except ValueError as exc:
            raise MatrixFormatError(f"byte {pos}: bad ASCII sample ({exc})") from None
    if np.any(pix > maxval):
        raise MatrixFormatError(f"byte {pos}: sample exceeds maxval {maxval}")
    return MatrixFile("pgm", pix.reshape(height, width), maxval=maxval, binary=binary)


def quantize(a: np.ndarray, maxval: int) -> np.ndarray:
    """Clamp to ``[0, maxval]`` and round half to even."""
    return np.clip(np.rint(np.real(a)), 0, maxval).astype(np.int64)


def write_pgm(a: np.ndarray, maxval: int, binary: bool = True) -> bytes:
    pix = quantize(a, maxval)
    height, width = pix.shape
    if binary:
        dtype = ">u2" if maxval > 255 else "u1"
        return f"P5\n{width} {height}\n{maxval}\n".encode() + pix.astype(dtype).tobytes()
    lines = [" ".join(str(v) for v in row) for row in pix]
    return (f"P2\n{width} {height}\n{maxval}\n" + "\n".join(lines) + "\n").encode()


def detect_format(path: Path) -> str:
    return "pgm" if path.suffix.lower() == ".pgm" else "csv"


def read_matrix(path) -> MatrixFile:
    path = Path(path)
    data = path.read_bytes()
    if detect_format(path) == "pgm" or data[:2] in (b"P2", b"P5"):
        return read_pgm(data)
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise MatrixFormatError(f"byte {exc.start}: not valid UTF-8 text") from None
    return read_csv(text)


def encode_matrix(mf: MatrixFile) -> bytes:
    if mf.format == "pgm":
        return write_pgm(mf.payload, mf.maxval or 255, mf.binary)
    if mf.format == "csv-real":
        return write_csv(np.real(mf.payload)).encode()
    return write_csv(np.asarray(mf.payload, dtype=np.complex128)).encode()


def write_matrix(path, mf: MatrixFile) -> None:
    Path(path).write_bytes(encode_matrix(mf))


def extension(mf: MatrixFile) -> str:
    return ".pgm" if mf.format == "pgm" else ".csv"
