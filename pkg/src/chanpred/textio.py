"""Plain-text serialization of named float arrays.

Used for predictor checkpoints and calibration files.  Layout:

    key1=val1 key2=val2 ...
    name shape v v v ...

one header line of key=value metadata, then one line per array holding
its name, comma-joined shape, and the row-major values.  Values are
written with repr so a write/read round trip is exact.
"""

from __future__ import annotations

import numpy as np


def write_arrays(path, header: dict, arrays: dict) -> None:
    for key, val in header.items():
        if any(ch.isspace() or ch == "=" for ch in str(key)) or any(
            ch.isspace() for ch in str(val)
        ):
            raise ValueError(f"header entry {key!r}={val!r} cannot contain whitespace")
    with open(path, "w") as fh:
        fh.write(" ".join(f"{k}={v}" for k, v in header.items()) + "\n")
        for name, arr in arrays.items():
            arr = np.asarray(arr, dtype=np.float64)
            if " " in name:
                raise ValueError(f"array name {name!r} cannot contain spaces")
            shape = ",".join(str(d) for d in arr.shape) or "0"
            values = " ".join(repr(float(v)) for v in arr.ravel())
            fh.write(f"{name} {shape} {values}".rstrip() + "\n")


def read_arrays(path):
    """Read a file written by write_arrays(); returns (header, arrays)."""
    with open(path) as fh:
        header = {}
        first = fh.readline().strip()
        if first:
            for token in first.split():
                if "=" not in token:
                    raise ValueError(f"malformed header token {token!r}")
                key, val = token.split("=", 1)
                header[key] = val
        arrays = {}
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) < 2:
                raise ValueError(f"line {lineno}: expected 'name shape values...'")
            name, shape_spec = parts[0], parts[1]
            if name in arrays:
                raise ValueError(f"line {lineno}: duplicate array {name!r}")
            try:
                shape = tuple(int(d) for d in shape_spec.split(","))
            except ValueError as exc:
                raise ValueError(f"line {lineno}: bad shape {shape_spec!r}") from exc
            values = np.array([float(v) for v in parts[2:]], dtype=np.float64)
            expected = int(np.prod(shape)) if shape != (0,) else 0
            if values.size != expected:
                raise ValueError(
                    f"line {lineno}: {name!r} expects {expected} values, got {values.size}"
                )
            arrays[name] = values.reshape(shape) if shape != (0,) else values
    return header, arrays
