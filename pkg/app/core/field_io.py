"""
GridField storage: a flat little-endian float64 binary (components first,
row-major) next to a JSON header with extent, nodes, rank and origin.

    field.bin   raw samples
    field.json  {"extent": [...], "nodes": [...], "rank": "vector", "origin": [...],
                 "dtype": "<f8", "order": "C", "data": "field.bin"}
"""
import json
import logging
import os
from typing import Tuple

import numpy as np

from core.exceptions import DataError
from models import GridField, Rank

logger = logging.getLogger(__name__)

DTYPE = "<f8"


def _paths(path: str) -> Tuple[str, str]:
    stem, ext = os.path.splitext(path)
    if ext in (".json", ".bin"):
        return stem + ".json", stem + ".bin"
    return path + ".json", path + ".bin"


def write_field(field: GridField, path: str) -> str:
    """Writes header and samples; returns the header path."""
    header_path, data_path = _paths(path)
    os.makedirs(os.path.dirname(header_path) or ".", exist_ok=True)
    np.ascontiguousarray(field.values, dtype=DTYPE).tofile(data_path)
    header = {
        "extent": list(field.extent),
        "nodes": list(field.nodes),
        "rank": field.rank.value,
        "origin": list(field.origin) if field.origin is not None else None,
        "dtype": DTYPE,
        "order": "C",
        "data": os.path.basename(data_path),
    }
    with open(header_path, "w") as f:
        json.dump(header, f, indent=2, sort_keys=True)
    logger.debug(f"Wrote {field.rank.value} field {tuple(field.nodes)} to {data_path}")
    return header_path


def read_field(path: str) -> GridField:
    header_path, default_data = _paths(path)
    try:
        with open(header_path, "r") as f:
            header = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise DataError(f"cannot read field header {header_path}: {e}") from e

    if header.get("dtype", DTYPE) != DTYPE or header.get("order", "C") != "C":
        raise DataError(f"{header_path}: only little-endian float64 in C order is supported")
    data_path = os.path.join(os.path.dirname(header_path), header.get("data", os.path.basename(default_data)))
    raw = np.fromfile(data_path, dtype=DTYPE)

    nodes = tuple(int(n) for n in header["nodes"])
    rank = Rank(header.get("rank", "scalar"))
    d = len(nodes)
    components = {Rank.SCALAR: (), Rank.VECTOR: (d,), Rank.TENSOR: (d, d)}[rank]
    shape = components + nodes
    if raw.size != int(np.prod(shape)):
        raise DataError(f"{data_path} holds {raw.size} samples, header expects {int(np.prod(shape))}")
    if not np.all(np.isfinite(raw)):
        raise DataError(f"{data_path} contains non-finite samples")
    origin = header.get("origin")
    return GridField(
        extent=tuple(float(e) for e in header["extent"]),
        nodes=nodes,
        rank=rank,
        values=raw.reshape(shape),
        origin=tuple(origin) if origin is not None else None,
    )
