"""Control plane: filesystem key-value store of object metadata.

A metadata file named after the percent-encoded object name holds one
"OBJM" record.  Commit is temp-write + fsync + rename + directory fsync;
the rename is the visibility event.  Readers never lock; under racing
commits the last rename wins and a reader always sees a complete record.
"""

from __future__ import annotations

import os
import uuid

from .errors import CorruptMetadata, ObjectNotFound, StoreError
from .object_model import (
    ObjectMeta,
    meta_decode,
    meta_encode,
    sanitize_name,
    unsanitize_name,
)
from .osd_backend import StoreRoot, publish_file


def commit_meta(store: StoreRoot, meta: ObjectMeta) -> None:
    """Atomically publish a metadata record under its object name."""
    final = store.meta_dir / sanitize_name(meta.name)
    tmp = store.meta_dir / f".tmp-{uuid.uuid4().hex}"
    publish_file(final, tmp, (meta_encode(meta),))


def lookup_meta(store: StoreRoot, name: str) -> ObjectMeta:
    path = store.meta_dir / sanitize_name(name)
    try:
        raw = path.read_bytes()
    except FileNotFoundError:
        raise ObjectNotFound(f"object not found: {name}") from None
    try:
        return meta_decode(raw, name=name)
    except StoreError as e:
        raise CorruptMetadata(f"{path}: {e}") from e


def list_names(store: StoreRoot) -> list[str]:
    """Names of all committed objects; in-flight temp files excluded."""
    names = []
    for entry in os.listdir(store.meta_dir):
        if entry.startswith("."):
            continue
        names.append(unsanitize_name(entry))
    return sorted(names)
