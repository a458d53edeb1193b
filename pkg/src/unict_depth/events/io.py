"""Text and binary event file formats.

Text: one ``t x y p`` line per event (seconds, pixel column, pixel row,
polarity).  Binary: a 16-byte header (``b"UNICTEVT"``, u16 width, u16 height,
u32 reserved) followed by packed 13-byte records ``(f64 t, u16 x, u16 y,
i8 p)``, all little-endian.
"""

import struct

import numpy as np

from .stream import EVENT_DTYPE, EventRecord

BINARY_MAGIC = b"UNICTEVT"
HEADER = struct.Struct("<8sHHI")


class EventFormatError(ValueError):
    pass


def _polarity(raw, where):
    if raw in (1, "1", "+1"):
        return 1
    if raw in (0, -1, "0", "-1"):
        return -1
    raise EventFormatError(f"{where}: polarity {raw!r} not in {{-1, +1, 0, 1}}")


def _detect_format(path):
    with open(path, "rb") as fh:
        head = fh.read(len(BINARY_MAGIC))
    return "binary" if head == BINARY_MAGIC else "text"


def parse_events(path, format="auto", chunk=65536):
    """Lazily yield :class:`EventRecord` in file order."""
    if format == "auto":
        format = _detect_format(path)
    if format == "text":
        yield from _parse_text(path)
    elif format == "binary":
        _, _, offset = read_binary_header(path)
        with open(path, "rb") as fh:
            fh.seek(offset)
            index = 0
            while True:
                buf = fh.read(chunk * EVENT_DTYPE.itemsize)
                if not buf:
                    break
                whole = len(buf) // EVENT_DTYPE.itemsize
                if len(buf) % EVENT_DTYPE.itemsize:
                    raise EventFormatError(f"{path}: truncated record {index + whole}")
                recs = np.frombuffer(buf, dtype=EVENT_DTYPE)
                bad = ~np.isin(recs["p"], (-1, 1))
                if bad.any():
                    i = index + int(np.argmax(bad))
                    raise EventFormatError(f"{path}: record {i} has polarity {recs['p'][bad][0]}")
                for r in recs.tolist():
                    yield EventRecord(*r)
                index += len(recs)
    else:
        raise ValueError(f"unknown event format {format!r}")


def _parse_text(path):
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            where = f"{path}:{lineno}"
            if len(parts) != 4:
                raise EventFormatError(f"{where}: expected 't x y p', got {line!r}")
            try:
                t = float(parts[0])
                x = int(parts[1])
                y = int(parts[2])
            except ValueError as exc:
                raise EventFormatError(f"{where}: {exc}") from None
            if x < 0 or y < 0 or x > 0xFFFF or y > 0xFFFF:
                raise EventFormatError(f"{where}: coordinates out of range")
            yield EventRecord(t, x, y, _polarity(parts[3], where))


def read_events(path, format="auto"):
    """Load a whole file into a structured array (fast path for binary)."""
    if format == "auto":
        format = _detect_format(path)
    if format == "binary":
        _, _, offset = read_binary_header(path)
        with open(path, "rb") as fh:
            fh.seek(offset)
            buf = fh.read()
        if len(buf) % EVENT_DTYPE.itemsize:
            raise EventFormatError(f"{path}: truncated record at end of file")
        arr = np.frombuffer(buf, dtype=EVENT_DTYPE).copy()
        bad = ~np.isin(arr["p"], (-1, 1))
        if bad.any():
            raise EventFormatError(f"{path}: record {int(np.argmax(bad))} has polarity {arr['p'][bad][0]}")
        return arr
    return np.array(list(parse_events(path, "text")), dtype=EVENT_DTYPE)


def read_binary_header(path):
    with open(path, "rb") as fh:
        head = fh.read(HEADER.size)
    if len(head) < HEADER.size:
        raise EventFormatError(f"{path}: file shorter than header")
    magic, width, height, _ = HEADER.unpack(head)
    if magic != BINARY_MAGIC:
        raise EventFormatError(f"{path}: bad magic {magic!r}")
    return width, height, HEADER.size


def write_binary(path, events, width, height):
    events = np.asarray(events, dtype=EVENT_DTYPE)
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(BINARY_MAGIC, width, height, 0))
        fh.write(events.tobytes())


def write_text(path, events):
    events = np.asarray(events, dtype=EVENT_DTYPE)
    with open(path, "w", encoding="ascii") as fh:
        for t, x, y, p in events.tolist():
            fh.write(f"{t!r} {x} {y} {p}\n")
