"""Event stream parsing, time windowing, and voxel-grid construction."""

from .io import EventFormatError, parse_events, read_binary_header, read_events, write_binary, write_text
from .stream import (
    DEFAULT_BINS,
    EVENT_DTYPE,
    EventRecord,
    EventSlice,
    VoxelGrid,
    events_array,
    scale_timestamp,
    voxelize,
    window_events,
)

__all__ = [
    "DEFAULT_BINS",
    "EVENT_DTYPE",
    "EventFormatError",
    "EventRecord",
    "EventSlice",
    "VoxelGrid",
    "events_array",
    "parse_events",
    "read_binary_header",
    "read_events",
    "scale_timestamp",
    "voxelize",
    "window_events",
    "write_binary",
    "write_text",
]
