"""Binary PGM (P5) reading and writing for masks and depth maps.

8-bit images store one byte per pixel; 16-bit images (maxval 65535) store
big-endian pairs, most significant byte first.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np


def write_pgm(path: str | Path, image: np.ndarray, maxval: int = 255) -> None:
    """Write a 2-D array of integers in [0, maxval] as binary PGM."""
    if image.ndim != 2:
        raise ValueError("PGM images must be 2-D")
    if maxval not in (255, 65535):
        raise ValueError("maxval must be 255 or 65535")
    h, w = image.shape
    dtype = ">u2" if maxval == 65535 else np.uint8
    data = np.ascontiguousarray(image.astype(dtype))
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n{maxval}\n".encode("ascii"))
        f.write(data.tobytes())


def read_pgm(path: str | Path) -> tuple[np.ndarray, int]:
    """Read a binary PGM, returning (array, maxval)."""
    with open(path, "rb") as f:
        raw = f.read()
    fields: list[bytes] = []
    pos = 0
    # Header is 4 whitespace-separated fields; '#' starts a comment line.
    while len(fields) < 4:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if raw[pos : pos + 1] == b"#":
            while pos < len(raw) and raw[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        fields.append(raw[start:pos])
    pos += 1  # single whitespace byte after maxval
    if fields[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM (magic {fields[0]!r})")
    w, h, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    dtype = ">u2" if maxval > 255 else np.uint8
    image = np.frombuffer(raw, dtype=dtype, count=h * w, offset=pos).reshape(h, w)
    return image.astype(np.uint16 if maxval > 255 else np.uint8), maxval
