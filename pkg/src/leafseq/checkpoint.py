"""Binary checkpoint files: named float64 tensors plus text metadata.

Layout: magic "LNATSCKPT1", a length-prefixed UTF-8 block of key=value
lines, then one record per tensor — name (length-prefixed UTF-8), rank,
dims, and the float64 payload. All integers are unsigned 64-bit
little-endian. Files are written to a temp path and renamed into place,
so readers never observe a partial checkpoint.
"""

import os
import struct
import tempfile

import numpy as np

from .tensor import ContractError

MAGIC = b"LNATSCKPT1"


def _write_u64(fh, value):
    fh.write(struct.pack("<Q", value))


def _write_bytes(fh, payload):
    _write_u64(fh, len(payload))
    fh.write(payload)


def _encode_metadata(metadata):
    lines = []
    for key, value in sorted(metadata.items()):
        key, value = str(key), str(value)
        if "=" in key or "\n" in key or "\n" in value:
            raise ContractError(f"metadata key/value not encodable: {key!r}")
        lines.append(f"{key}={value}\n")
    return "".join(lines).encode("utf-8")


def save(path, tensors, metadata=None):
    """Atomically write named arrays; names are sorted for reproducible bytes."""
    path = os.fspath(path)
    arrays = {}
    for name, tensor in tensors.items():
        array = np.asarray(getattr(tensor, "data", tensor), dtype=np.float64)
        arrays[str(name)] = array
    directory = os.path.dirname(path) or "."
    os.makedirs(directory, exist_ok=True)
    fd, tmp_path = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(MAGIC)
            _write_bytes(fh, _encode_metadata(metadata or {}))
            for name in sorted(arrays):
                array = arrays[name]
                _write_bytes(fh, name.encode("utf-8"))
                _write_u64(fh, array.ndim)
                for dim in array.shape:
                    _write_u64(fh, dim)
                fh.write(array.astype("<f8", copy=False).tobytes())
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.remove(tmp_path)
        raise


class _Reader:
    def __init__(self, fh, path):
        self.fh = fh
        self.path = path

    def exact(self, n):
        chunk = self.fh.read(n)
        if len(chunk) != n:
            raise ContractError(f"checkpoint {self.path} is truncated")
        return chunk

    def u64(self):
        return struct.unpack("<Q", self.exact(8))[0]

    def block(self):
        return self.exact(self.u64())


def load(path):
    """Read a checkpoint; returns (tensors: name -> float64 array, metadata)."""
    path = os.fspath(path)
    with open(path, "rb") as fh:
        reader = _Reader(fh, path)
        if fh.read(len(MAGIC)) != MAGIC:
            raise ContractError(f"{path} is not a checkpoint file (bad magic)")
        metadata = {}
        for line in reader.block().decode("utf-8").splitlines():
            if line:
                key, _, value = line.partition("=")
                metadata[key] = value
        tensors = {}
        while True:
            header = fh.read(8)
            if not header:
                break
            if len(header) != 8:
                raise ContractError(f"checkpoint {path} is truncated")
            name = reader.exact(struct.unpack("<Q", header)[0]).decode("utf-8")
            rank = reader.u64()
            shape = tuple(reader.u64() for _ in range(rank))
            count = int(np.prod(shape, dtype=np.int64)) if shape else 1
            payload = reader.exact(count * 8)
            tensors[name] = np.frombuffer(payload, dtype="<f8").reshape(shape).copy()
    return tensors, metadata
