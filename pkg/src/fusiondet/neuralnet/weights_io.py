"""Binary weights files.

Layout: magic b"IFODW1", then one record per tensor:
    u32 LE  name length
    utf-8   name
    u32 LE  rank
    u32 LE  dims[rank]
    f32 LE  row-major payload
Records run until EOF.  Loading parses the whole file before touching the
network, so a truncated or corrupt file never leaves it half-updated.
"""

import logging
import struct

import numpy as np

from ..errors import FormatError

log = logging.getLogger(__name__)

MAGIC = b"IFODW1"


def write_tensors(path, tensors):
    """tensors: ordered mapping name -> ndarray (stored as f32)."""
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        for name, arr in tensors.items():
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def read_tensors(path):
    """Parse a weights file into an ordered dict name -> f32 ndarray."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[: len(MAGIC)] != MAGIC:
        raise FormatError(f"{path}: bad magic, not a weights file")
    pos = len(MAGIC)
    tensors = {}

    def take(nbytes, what):
        nonlocal pos
        if pos + nbytes > len(blob):
            raise FormatError(f"{path}: truncated while reading {what}")
        chunk = blob[pos : pos + nbytes]
        pos += nbytes
        return chunk

    while pos < len(blob):
        (name_len,) = struct.unpack("<I", take(4, "name length"))
        name = take(name_len, "name").decode("utf-8")
        (rank,) = struct.unpack("<I", take(4, "rank"))
        dims = struct.unpack(f"<{rank}I", take(4 * rank, "dims"))
        count = int(np.prod(dims)) if rank else 1
        payload = take(4 * count, f"payload of {name}")
        tensors[name] = np.frombuffer(payload, dtype="<f4").reshape(dims).copy()
    return tensors


def save_weights(network, path):
    write_tensors(path, network.state_dict())


def load_weights(network, path, strict=True):
    """Copy file tensors into matching network tensors.

    strict=True demands that every file tensor match a network tensor's
    shape; strict=False loads the matching subset and logs what was skipped
    (which is how a backbone-only file leaves the heads at their init).
    Returns the list of loaded tensor names.
    """
    tensors = read_tensors(path)
    state = network.state_dict()
    params = network.named_parameters()
    loadable = {}
    for name, arr in tensors.items():
        target = state.get(name)
        if target is None:
            if strict:
                raise FormatError(f"{path}: file tensor {name!r} not in network")
            log.warning("skipping %s: not in network", name)
            continue
        if tuple(target.shape) != tuple(arr.shape):
            if strict:
                raise FormatError(
                    f"{path}: shape mismatch for {name!r}: "
                    f"file {tuple(arr.shape)} vs network {tuple(target.shape)}"
                )
            log.warning("skipping %s: shape %s != %s", name, arr.shape, target.shape)
            continue
        loadable[name] = arr
    for name, arr in loadable.items():
        if name == "bbox_norm.mean":
            network.delta_mean = arr.astype(network.dtype)
        elif name == "bbox_norm.std":
            network.delta_std = arr.astype(network.dtype)
        else:
            params[name].data[...] = arr.astype(network.dtype)
    return sorted(loadable)
