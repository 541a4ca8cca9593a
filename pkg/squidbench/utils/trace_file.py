import logging
from pathlib import Path
import struct
from typing import (
    Tuple,
    Union,
)

import numpy as np

from squidbench.device import (
    ChannelPair,
    SampleClock,
)
from squidbench.utils.errors import TraceFormatError

MAGIC = b"SQBT"
VERSION = 1
# magic, version, dt_ns, t0_s, length, gain
HEADER = struct.Struct("<4sHddQd")
SAMPLE_DTYPE = np.dtype("<f4")


def write_trace(path: Union[str, Path], channels: ChannelPair, gain: float) -> None:
    current = np.ascontiguousarray(channels.current_trace, dtype=SAMPLE_DTYPE)
    voltage = np.ascontiguousarray(channels.voltage_trace, dtype=SAMPLE_DTYPE)

    with open(path, "wb") as file:
        file.write(HEADER.pack(MAGIC, VERSION, channels.clock.dt_ns, channels.clock.t0_s, len(current), gain))
        file.write(current.tobytes())
        file.write(voltage.tobytes())

    logging.debug(f"Wrote {len(current)} samples per channel to {path}")


def read_trace(path: Union[str, Path]) -> Tuple[ChannelPair, float]:
    with open(path, "rb") as file:
        header = file.read(HEADER.size)
        if len(header) != HEADER.size:
            raise TraceFormatError(f"{path}: truncated header")

        magic, version, dt_ns, t0_s, length, gain = HEADER.unpack(header)
        if magic != MAGIC:
            raise TraceFormatError(f"{path}: bad magic {magic!r}")
        if version != VERSION:
            raise TraceFormatError(f"{path}: unsupported version {version}")

        payload = file.read()

    expected = 2 * length * SAMPLE_DTYPE.itemsize
    if len(payload) != expected:
        raise TraceFormatError(f"{path}: expected {expected} payload bytes, found {len(payload)}")

    samples = np.frombuffer(payload, dtype=SAMPLE_DTYPE)
    channels = ChannelPair(
        clock=SampleClock(dt_ns=dt_ns, t0_s=t0_s),
        current_trace=samples[:length].astype(np.float32),
        voltage_trace=samples[length:].astype(np.float32),
    )
    return channels, gain
