"""Filesystem-backed object store emulator with a locked shared-file
baseline and a weak-scaling I/O benchmark harness."""

from .client_api import ObjectStore, PutSession, PutToken
from .errors import StoreError
from .object_model import (
    ChunkGrid,
    DType,
    ObjectId,
    ObjectMeta,
    Shape,
    validate_chunking,
)

__all__ = [
    "ChunkGrid",
    "DType",
    "ObjectId",
    "ObjectMeta",
    "ObjectStore",
    "PutSession",
    "PutToken",
    "Shape",
    "StoreError",
    "validate_chunking",
]

__version__ = "0.1.0"
