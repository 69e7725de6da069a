"""Single-file model checkpoints.

Layout: 8 magic bytes, a little-endian uint64 header length, a UTF-8 JSON
header (sorted keys) and the parameters as one little-endian float64 blob in
header order. Equal inputs give byte-identical files.
"""
import json
import struct

import numpy as np

MAGIC = b"SQAGCKP1"


class CheckpointError(ValueError):
    pass


def save(path, kind, config, params, registry_digest=None, extra=None):
    entries, blobs, offset = [], [], 0
    for name in sorted(params):
        a = np.ascontiguousarray(params[name], dtype="<f8")
        entries.append({"name": name, "shape": list(a.shape), "offset": offset})
        blobs.append(a.tobytes())
        offset += a.size
    header = {"kind": kind, "config": config, "registry_digest": registry_digest,
              "params": entries, "extra": extra or {}}
    hb = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC + struct.pack("<Q", len(hb)) + hb)
        for b in blobs:
            fh.write(b)


def load(path, kind=None):
    """Returns ``(header, params)``; raises :class:`CheckpointError` on bad files."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:8] != MAGIC or len(raw) < 16:
        raise CheckpointError(f"{path}: not a checkpoint")
    (hlen,) = struct.unpack("<Q", raw[8:16])
    try:
        header = json.loads(raw[16:16 + hlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt header") from exc
    if kind is not None and header.get("kind") != kind:
        raise CheckpointError(f"{path}: expected a {kind} checkpoint, found {header.get('kind')}")
    blob = np.frombuffer(raw[16 + hlen:], dtype="<f8")
    params = {}
    for e in header["params"]:
        n = int(np.prod(e["shape"], dtype=np.int64))
        if e["offset"] + n > blob.size:
            raise CheckpointError(f"{path}: truncated parameter blob")
        params[e["name"]] = blob[e["offset"]: e["offset"] + n].reshape(e["shape"]).astype(np.float64)
    return header, params
