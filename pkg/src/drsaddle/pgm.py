"""Reading and writing grayscale PGM images (P2 and P5)."""

import numpy as np

__all__ = ["PGMError", "read_pgm", "write_pgm", "parse_pgm", "encode_pgm"]


class PGMError(ValueError):
    """Malformed PGM data; `offset` is the byte position of the problem."""

    def __init__(self, message, offset):
        self.offset = offset
        super().__init__(f"{message} (byte offset {offset})")


_WS = b" \t\r\n\v\f"
_HASH = ord("#")


def _tokens(data, pos, count):
    """Read `count` whitespace separated header tokens, skipping comments."""
    out = []
    n = len(data)
    while len(out) < count:
        while pos < n and (data[pos] in _WS or data[pos] == _HASH):
            if data[pos] == _HASH:
                while pos < n and data[pos] not in b"\r\n":
                    pos += 1
            else:
                pos += 1
        if pos >= n:
            raise PGMError("truncated data", pos)
        start = pos
        while pos < n and data[pos] not in _WS and data[pos] != _HASH:
            pos += 1
        tok = data[start:pos]
        if not tok.isdigit():
            raise PGMError(f"expected a nonnegative integer, got {tok!r}", start)
        out.append((int(tok), start))
    return out, pos


def parse_pgm(data):
    """Decode PGM bytes to a float image in [0, 1]."""
    data = bytes(data)
    magic = data[:2]
    if magic not in (b"P2", b"P5"):
        raise PGMError(f"bad magic number {magic!r}", 0)
    header, pos = _tokens(data, 2, 3)
    (w, _), (h, _), (maxval, mpos) = header
    if w < 1 or h < 1:
        raise PGMError("width and height must be positive", 2)
    if not 1 <= maxval <= 65535:
        raise PGMError(f"maxval {maxval} outside [1, 65535]", mpos)
    n = w * h
    if magic == b"P5":
        if pos >= len(data) or data[pos] not in _WS:
            raise PGMError("missing whitespace after header", pos)
        pos += 1
        width = 1 if maxval < 256 else 2
        need = n * width
        if len(data) - pos < need:
            raise PGMError(f"truncated payload: need {need} bytes, have "
                           f"{len(data) - pos}", len(data))
        dtype = np.uint8 if width == 1 else np.dtype(">u2")
        vals = np.frombuffer(data, dtype=dtype, count=n, offset=pos)
    else:
        toks, _ = _tokens(data, pos, n) if n else ([], pos)
        for v, off in toks:
            if v > maxval:
                raise PGMError(f"sample {v} exceeds maxval {maxval}", off)
        vals = np.array([v for v, _ in toks])
    if np.any(vals > maxval):
        raise PGMError(f"sample exceeds maxval {maxval}", pos)
    return vals.reshape(h, w).astype(float) / maxval


def read_pgm(path):
    """Read a PGM file into a float array of shape (height, width)."""
    with open(path, "rb") as fh:
        return parse_pgm(fh.read())


def encode_pgm(img, maxval=255):
    """Binary PGM bytes; values are clamped to [0, 1] and rounded half up."""
    img = np.asarray(img, dtype=float)
    if img.ndim != 2:
        raise ValueError("image must be 2-D")
    if not 1 <= maxval <= 65535:
        raise ValueError("maxval must lie in [1, 65535]")
    if not np.all(np.isfinite(img)):
        raise ValueError("image contains nonfinite values")
    q = np.floor(np.clip(img, 0.0, 1.0) * maxval + 0.5)
    h, w = img.shape
    header = f"P5\n{w} {h}\n{maxval}\n".encode("ascii")
    dtype = np.uint8 if maxval < 256 else np.dtype(">u2")
    return header + q.astype(dtype).tobytes()


def write_pgm(img, path, maxval=255):
    """Write `img` as binary PGM."""
    data = encode_pgm(img, maxval)
    with open(path, "wb") as fh:
        fh.write(data)
