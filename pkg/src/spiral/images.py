"""Plain PGM (P2/P5) and CSV image I/O.

Float images are written as max-scaled integer PGMs; the multiplier that maps
stored integers back to original units is recorded in a sidecar text file
next to the image (``<name>.scale.txt``).  CSV files hold exact row-major
float values and round-trip losslessly.
"""

from __future__ import annotations

import os

import numpy as np

__all__ = ["write_pgm", "read_pgm", "write_csv_image", "read_csv_image"]


def _sidecar_path(path) -> str:
    return str(path) + ".scale.txt"


def write_pgm(path, image: np.ndarray, maxval: int = 65535, fmt: str = "P5") -> float:
    """Write a nonnegative float image as a max-scaled PGM.

    Returns the scale factor s such that ``stored_integer / s`` recovers the
    original value; s is also written to ``<path>.scale.txt``.
    """
    image = np.asarray(image, dtype=float)
    if image.ndim != 2:
        raise ValueError("PGM output needs a 2-D image")
    if np.any(image < 0) or not np.all(np.isfinite(image)):
        raise ValueError("PGM output needs finite nonnegative values")
    if not 1 <= maxval <= 65535:
        raise ValueError("maxval must lie in [1, 65535]")
    if fmt not in ("P2", "P5"):
        raise ValueError("fmt must be 'P2' or 'P5'")
    peak = float(image.max())
    scale = maxval / peak if peak > 0 else 1.0
    data = np.clip(np.rint(image * scale), 0, maxval).astype(np.uint16)
    header = f"{fmt}\n{image.shape[1]} {image.shape[0]}\n{maxval}\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        if fmt == "P2":
            body = "\n".join(" ".join(str(v) for v in row) for row in data)
            fh.write(body.encode("ascii") + b"\n")
        elif maxval > 255:
            fh.write(data.astype(">u2").tobytes())
        else:
            fh.write(data.astype(np.uint8).tobytes())
    with open(_sidecar_path(path), "w") as fh:
        fh.write(f"{scale!r}\n")
    return scale


def _read_tokens(raw: bytes, count: int, start: int):
    """Read ``count`` whitespace-separated ASCII integers from ``raw``."""
    vals = raw[start:].split()
    if len(vals) < count:
        raise ValueError("PGM file truncated")
    return np.array([int(v) for v in vals[:count]], dtype=np.uint16)


def read_pgm(path, apply_sidecar: bool = True) -> np.ndarray:
    """Read a P2 or P5 PGM as a float image.

    When ``apply_sidecar`` is true and ``<path>.scale.txt`` exists, stored
    integers are divided by the recorded scale to recover original units.
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    # header: magic, width, height, maxval with comment lines allowed
    tokens = []
    pos = 0
    while len(tokens) < 4:
        nl = raw.find(b"\n", pos)
        line = raw[pos : nl if nl >= 0 else len(raw)]
        pos = (nl + 1) if nl >= 0 else len(raw)
        stripped = line.split(b"#", 1)[0].split()
        tokens.extend(stripped)
        if pos >= len(raw) and len(tokens) < 4:
            raise ValueError("PGM header truncated")
    magic = tokens[0].decode("ascii")
    width, height, maxval = (int(t) for t in tokens[1:4])
    if magic not in ("P2", "P5"):
        raise ValueError(f"unsupported PGM magic {magic!r}")
    # binary data begins right after the newline that completed the header
    if magic == "P5":
        if maxval > 255:
            data = np.frombuffer(raw, dtype=">u2", count=width * height, offset=pos)
        else:
            data = np.frombuffer(raw, dtype=np.uint8, count=width * height, offset=pos)
        image = data.reshape(height, width).astype(float)
    else:
        image = _read_tokens(raw, width * height, pos).reshape(height, width).astype(float)
    if apply_sidecar and os.path.exists(_sidecar_path(path)):
        with open(_sidecar_path(path)) as fh:
            scale = float(fh.read().strip())
        if scale > 0:
            image = image / scale
    return image


def write_csv_image(path, image: np.ndarray) -> None:
    """Write a 2-D float array as row-major CSV with full precision."""
    image = np.asarray(image, dtype=float)
    if image.ndim != 2:
        raise ValueError("CSV image output needs a 2-D array")
    np.savetxt(path, image, fmt="%.17g", delimiter=",")


def read_csv_image(path) -> np.ndarray:
    arr = np.loadtxt(path, delimiter=",", dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    return arr
