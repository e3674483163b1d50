"""Exception hierarchy for the object store emulator."""


class StoreError(Exception):
    """Base class for all emulator errors."""


# object_model
class RankMismatch(StoreError):
    """Chunk dims and object dims have different ranks."""


class NonDivisibleChunk(StoreError):
    """Chunk dims do not evenly divide the object dims."""


class BadMagic(StoreError):
    """Record does not start with the expected magic bytes."""


class UnsupportedVersion(StoreError):
    """Record format version is not understood."""


class TruncatedRecord(StoreError):
    """Record is shorter than its declared layout."""


class InvariantViolation(StoreError):
    """Decoded record violates a type invariant (e.g. zero dim)."""


# osd_backend
class AlreadyInitialized(StoreError):
    """Store root exists with a conflicting configuration."""


class ChunkExists(StoreError):
    """Attempt to overwrite an immutable chunk."""


class ChunkNotFound(StoreError):
    """No chunk file at the placed location."""


class CorruptChunk(StoreError):
    """Chunk file header/payload fails validation."""


# metadata_store
class ObjectNotFound(StoreError):
    """No committed metadata under the requested name."""


class CorruptMetadata(StoreError):
    """Metadata file fails to decode."""


# client_api
class PartOutOfRange(StoreError):
    """Part number outside [0, chunk_count)."""


class ShapeMismatch(StoreError):
    """Supplied data does not match the declared chunk shape/dtype."""


class AlreadyCommitted(StoreError):
    """A put session may commit at most once."""


class MissingChunks(StoreError):
    """Commit-time verification found absent chunks."""


# bench_harness
class ConfigInvalid(StoreError):
    """Benchmark configuration violates an invariant."""


class WorkerFailure(StoreError):
    """A benchmark worker process exited abnormally."""


class IncompletePhase(StoreError):
    """Op records do not cover complete phases."""
