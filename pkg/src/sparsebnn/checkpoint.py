"""Versioned binary checkpoint for a trained variational state.

Byte layout (all integers and floats little-endian):

    bytes 0..7    magic  b"SSBNNCK1"
    bytes 8..11   uint32  header length H
    bytes 12..12+H  UTF-8 JSON header with keys:
                    format_version  (int, currently 1)
                    canonical_order (string id of the flat-vector layout)
                    layer_sizes, hidden_activation, output_head
                    prior {pi, tau1, tau0}
                    n_params        (int, M)
                    has_mask        (bool)
    then three float64 arrays of length M in canonical order: m, rho, p;
    then, if has_mask, one uint8 array of length M (1 = active).

Floats are stored as raw IEEE-754 doubles, so save -> load round-trips
bit-exactly.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .network import CANONICAL_ORDER, NetworkTopology
from .svi import SpikeSlabPrior, VariationalParams

MAGIC = b"SSBNNCK1"
FORMAT_VERSION = 1


def save_checkpoint(path, topology: NetworkTopology, prior: SpikeSlabPrior,
                    vp: VariationalParams) -> None:
    if len(vp) != topology.n_params:
        raise ValueError(
            f"variational state has {len(vp)} entries but the topology "
            f"expects {topology.n_params}"
        )
    header = {
        "format_version": FORMAT_VERSION,
        "canonical_order": CANONICAL_ORDER,
        "layer_sizes": list(topology.layer_sizes),
        "hidden_activation": topology.hidden_activation,
        "output_head": topology.output_head,
        "prior": {"pi": prior.pi, "tau1": prior.tau1, "tau0": prior.tau0},
        "n_params": topology.n_params,
        "has_mask": vp.active is not None,
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(np.ascontiguousarray(vp.m, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(vp.rho, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(vp.p, dtype="<f8").tobytes())
        if vp.active is not None:
            fh.write(np.ascontiguousarray(vp.active, dtype=np.uint8).tobytes())


def load_checkpoint(path):
    """Returns (topology, prior, params) from a checkpoint file."""
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise ValueError(f"{path}: not a checkpoint file (bad magic)")
    (hlen,) = struct.unpack("<I", raw[8:12])
    header = json.loads(raw[12:12 + hlen].decode("utf-8"))
    if header["format_version"] != FORMAT_VERSION:
        raise ValueError(
            f"{path}: unsupported format version {header['format_version']}"
        )
    if header["canonical_order"] != CANONICAL_ORDER:
        raise ValueError(
            f"{path}: parameter order {header['canonical_order']!r} does not "
            f"match this library's {CANONICAL_ORDER!r}"
        )
    topology = NetworkTopology(
        tuple(header["layer_sizes"]),
        hidden_activation=header["hidden_activation"],
        output_head=header["output_head"],
    )
    prior = SpikeSlabPrior(**header["prior"])
    M = int(header["n_params"])
    if M != topology.n_params:
        raise ValueError(f"{path}: header n_params {M} inconsistent with sizes")
    off = 12 + hlen
    arrays = []
    for _ in range(3):
        arrays.append(np.frombuffer(raw, dtype="<f8", count=M, offset=off).copy())
        off += 8 * M
    active = None
    if header["has_mask"]:
        active = np.frombuffer(raw, dtype=np.uint8, count=M, offset=off).astype(bool)
    vp = VariationalParams(*arrays, active=active)
    return topology, prior, vp
