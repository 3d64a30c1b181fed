"""Exception types shared across the pipeline."""


class SegnnError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(SegnnError):
    """Operands have incompatible shapes; message carries both shapes."""

    def __init__(self, op: str, *shapes):
        self.op = op
        self.shapes = shapes
        super().__init__(f"{op}: incompatible shapes {' vs '.join(map(str, shapes))}")


class DumpParseError(SegnnError):
    """Fatal XML parse failure; carries the byte offset of the error."""

    def __init__(self, message: str, byte_offset: int, line: int, column: int):
        self.byte_offset = byte_offset
        self.line = line
        self.column = column
        super().__init__(
            f"{message} (byte {byte_offset}, line {line}, column {column})"
        )


class GraphFormatError(SegnnError):
    """Serialized graph record is not in the expected format."""


class GraphTruncationError(GraphFormatError):
    """Record header claims more bytes than the stream holds."""


class GraphChecksumError(GraphFormatError):
    """Record payload does not match its CRC32."""


class GraphVersionError(GraphFormatError):
    """Record was written by an unsupported format version."""


class EmbeddingFormatError(SegnnError):
    """Embedding file violates the SEEMB1 layout."""


class MissingEmbeddingError(SegnnError):
    """A node key was not found in a precomputed embedding file."""

    def __init__(self, key: str):
        self.key = key
        super().__init__(f"no precomputed embedding for node key {key!r}")


class SingleClassError(SegnnError):
    """Training data contains only one class."""


class FewShotConfigError(SegnnError):
    """Shot count too small or a class has fewer samples than requested."""


class CheckpointError(SegnnError):
    """Checkpoint file is malformed or does not match the architecture."""


class StageArtifactError(SegnnError):
    """A pipeline command is missing its input artifact."""

    def __init__(self, missing: str, produced_by: str):
        self.missing = missing
        self.produced_by = produced_by
        super().__init__(
            f"missing {missing}; run `segnn {produced_by}` first to produce it"
        )
