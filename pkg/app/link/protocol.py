"""
Timestamp frame codec.

Wire layout (little-endian, 8 bytes)::

    offset  size  field
    0       2     session_id       u16
    2       1     transducer_id    u8   (1..4)
    3       1     flags            u8   (bit0 capture overflow, bits 1-7 zero)
    4       4     timestamp_ticks  u32

A binary stream is frames back to back. A frame log file prefixes that
stream with the header line ``UBVM-FRAMES/1``. The text debug stream holds
one frame per line: ``session transducer flags ticks`` in decimal.
"""

import logging
import struct
from typing import Annotated, BinaryIO, Iterable, Iterator, List, TextIO

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from app.core.exceptions import FramingError, ProtocolError


logger = logging.getLogger(__name__)

FRAME = struct.Struct("<HBBI")
FRAME_SIZE = FRAME.size
FLAG_OVERFLOW = 0x01
RESERVED_FLAGS = 0xFE
LOG_HEADER = b"UBVM-FRAMES/1\n"


class TimestampFrame(BaseModel):
    """One captured edge, tagged with its session and transducer."""
    model_config = ConfigDict(frozen=True)

    session_id: Annotated[int, Field(ge=0, le=0xFFFF)]
    transducer_id: Annotated[int, Field(ge=1, le=4)]
    flags: Annotated[int, Field(ge=0, le=FLAG_OVERFLOW)] = 0
    timestamp_ticks: Annotated[int, Field(ge=0, le=0xFFFFFFFF)]

    @property
    def overflow(self) -> bool:
        return bool(self.flags & FLAG_OVERFLOW)


def encode_frame(frame: TimestampFrame) -> bytes:
    """Pack a frame into its 8-byte wire form."""
    return FRAME.pack(frame.session_id, frame.transducer_id, frame.flags, frame.timestamp_ticks)


def decode_frame(data: bytes) -> TimestampFrame:
    """
    Unpack an 8-byte wire frame.

    Raises:
        FramingError: If ``data`` is not exactly 8 bytes
        ProtocolError: If the transducer id or reserved flag bits are invalid
    """
    if len(data) != FRAME_SIZE:
        raise FramingError(f"frame must be {FRAME_SIZE} bytes, got {len(data)}")
    session_id, transducer_id, flags, ticks = FRAME.unpack(data)
    if not 1 <= transducer_id <= 4:
        raise ProtocolError(f"transducer id {transducer_id} outside 1..4")
    if flags & RESERVED_FLAGS:
        raise ProtocolError(f"reserved flag bits set: 0x{flags:02x}")
    return TimestampFrame(
        session_id=session_id, transducer_id=transducer_id, flags=flags, timestamp_ticks=ticks
    )


def encode_stream(frames: Iterable[TimestampFrame]) -> bytes:
    return b"".join(encode_frame(f) for f in frames)


def iter_frames(data: bytes, strict: bool = True) -> Iterator[TimestampFrame]:
    """
    Decode concatenated frames.

    Args:
        data: Raw stream bytes
        strict: Raise on a trailing partial frame instead of dropping it

    Raises:
        FramingError: On a trailing partial frame in strict mode
    """
    whole = len(data) - len(data) % FRAME_SIZE
    for offset in range(0, whole, FRAME_SIZE):
        yield decode_frame(data[offset:offset + FRAME_SIZE])
    if whole != len(data):
        if strict:
            raise FramingError(f"{len(data) - whole} trailing bytes after last frame")
        logger.warning("dropping %d trailing bytes of a truncated frame", len(data) - whole)


def write_frame_log(frames: Iterable[TimestampFrame], stream: BinaryIO) -> int:
    """Write the versioned header and the frames; returns the frame count."""
    stream.write(LOG_HEADER)
    count = 0
    for frame in frames:
        stream.write(encode_frame(frame))
        count += 1
    return count


def split_frame_log(blob: bytes) -> bytes:
    """
    Strip and check the header line of a frame log.

    Raises:
        FramingError: If the header is missing or has another version
    """
    if not blob.startswith(LOG_HEADER):
        head = blob.split(b"\n", 1)[0][:32]
        raise FramingError(f"not a UBVM-FRAMES/1 log (header {head!r})")
    return blob[len(LOG_HEADER):]


def format_frame_text(frame: TimestampFrame) -> str:
    return f"{frame.session_id} {frame.transducer_id} {frame.flags} {frame.timestamp_ticks}"


def parse_frame_text(line: str) -> TimestampFrame:
    """
    Parse one debug-stream line.

    Raises:
        FramingError: Wrong number of fields or non-integer fields
        ProtocolError: Field values outside the protocol ranges
    """
    parts = line.split()
    if len(parts) != 4:
        raise FramingError(f"expected 4 fields, got {len(parts)}: {line!r}")
    try:
        session_id, transducer_id, flags, ticks = (int(p) for p in parts)
    except ValueError as exc:
        raise FramingError(f"non-integer field in {line!r}") from exc
    try:
        return TimestampFrame(
            session_id=session_id, transducer_id=transducer_id, flags=flags, timestamp_ticks=ticks
        )
    except ValidationError as exc:
        raise ProtocolError(str(exc)) from exc


def write_frame_text(frames: Iterable[TimestampFrame], stream: TextIO) -> None:
    for frame in frames:
        stream.write(format_frame_text(frame) + "\n")


def read_frame_text(stream: TextIO) -> List[TimestampFrame]:
    return [parse_frame_text(line) for line in stream if line.strip()]
