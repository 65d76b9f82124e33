"""Deterministic binary checkpoints.

Layout: a magic line, one JSON header line, then the raw parameter blocks as
little-endian float64 in the order params.items() yields them.  The header
carries the variant tag, the shape table, the feature configuration and
standardization statistics, and a CRC-32 of the blob.  Writing the same
model twice produces byte-identical files (json.dumps of round-trippable
floats is stable, and there are no timestamps anywhere).
"""

from __future__ import annotations

import json
import zlib

import numpy as np

from .autodiff import Matrix
from .features import FeatureConfig, Standardization
from .models import VARIANTS, ModelParams, params_from_items

__all__ = ["CheckpointError", "VariantMismatchError", "save_checkpoint", "load_checkpoint"]

MAGIC = b"MOTORTEMP-CKPT 1\n"


class CheckpointError(RuntimeError):
    """The file is not a readable checkpoint."""


class VariantMismatchError(CheckpointError):
    """The checkpoint holds a different architecture than requested."""


def save_checkpoint(params: ModelParams, stats: Standardization | None,
                    path, feature_config: FeatureConfig | None = None) -> None:
    items = params.items()
    blob = b"".join(
        np.ascontiguousarray(m.values, dtype="<f8").tobytes() for _, m in items
    )
    header = {
        "variant": params.variant,
        "input_dim": params.input_dim,
        "hidden": params.hidden,
        "output_dim": params.output_dim,
        "shapes": [[name, m.rows, m.cols] for name, m in items],
        "n_values": sum(m.rows * m.cols for _, m in items),
        "stats": stats.to_dict() if stats is not None else None,
        "feature_config": feature_config.to_dict() if feature_config else None,
        "crc32": zlib.crc32(blob),
    }
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(json.dumps(header, sort_keys=True).encode("ascii"))
        fh.write(b"\n")
        fh.write(blob)


def load_checkpoint(path, expect_variant: str | None = None):
    """Read a checkpoint back.

    Returns (params, stats, feature_config); the latter two are None when
    the file was saved without them.  Raises CheckpointError for anything
    that is not a well-formed checkpoint and VariantMismatchError when
    ``expect_variant`` disagrees with the stored tag.
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    if not raw.startswith(MAGIC):
        raise CheckpointError(f"{path}: not a model checkpoint")
    rest = raw[len(MAGIC):]
    nl = rest.find(b"\n")
    if nl < 0:
        raise CheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(rest[:nl])
    except (ValueError, UnicodeDecodeError):
        raise CheckpointError(f"{path}: corrupt header")
    blob = rest[nl + 1:]

    try:
        variant = header["variant"]
        shapes = header["shapes"]
        n_values = int(header["n_values"])
        crc = int(header["crc32"])
    except (KeyError, TypeError, ValueError):
        raise CheckpointError(f"{path}: header is missing required fields")
    if variant not in VARIANTS:
        raise CheckpointError(f"{path}: unknown variant {variant!r}")
    if expect_variant is not None and variant != expect_variant:
        raise VariantMismatchError(
            f"{path}: checkpoint holds {variant!r}, expected {expect_variant!r}"
        )
    if len(blob) != n_values * 8:
        raise CheckpointError(
            f"{path}: parameter blob is {len(blob)} bytes, expected {n_values * 8}"
        )
    if zlib.crc32(blob) != crc:
        raise CheckpointError(f"{path}: checksum mismatch")

    mapping = {}
    offset = 0
    for name, rows, cols in shapes:
        count = int(rows) * int(cols)
        arr = np.frombuffer(
            blob, dtype="<f8", count=count, offset=offset * 8
        ).astype(np.float64).reshape(int(rows), int(cols))
        mapping[name] = Matrix._wrap(np.ascontiguousarray(arr))
        offset += count
    if offset != n_values:
        raise CheckpointError(f"{path}: shape table disagrees with blob size")
    try:
        params = params_from_items(variant, mapping)
    except ValueError as exc:
        raise CheckpointError(f"{path}: {exc}")

    stats = (
        Standardization.from_dict(header["stats"])
        if header.get("stats") else None
    )
    feature_config = (
        FeatureConfig.from_dict(header["feature_config"])
        if header.get("feature_config") else None
    )
    return params, stats, feature_config
