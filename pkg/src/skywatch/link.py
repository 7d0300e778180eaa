"""Command wire codec and the seeded impaired channel.

The 14-byte frame layout is a normative external interface; everything is
little-endian and guarded by CRC-16/CCITT-FALSE over bytes 0 through 11.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

MAGIC = b"\xa5\x5a"
VERSION = 0x01
FRAME_LEN = 14
FLAG_ESTOP = 0x01


class FieldOutOfRange(ValueError):
    pass


class ShortBuffer(ValueError):
    pass


class BadMagic(ValueError):
    pass


class BadVersion(ValueError):
    pass


class BadCrc(ValueError):
    pass


def _build_crc_table() -> tuple[int, ...]:
    table = []
    for byte in range(256):
        crc = byte << 8
        for _ in range(8):
            crc = ((crc << 1) ^ 0x1021) if crc & 0x8000 else (crc << 1)
        table.append(crc & 0xFFFF)
    return tuple(table)


_CRC_TABLE = _build_crc_table()


def crc16(data: bytes) -> int:
    """CRC-16/CCITT-FALSE: poly 0x1021, init 0xFFFF, no reflection or xorout."""
    crc = 0xFFFF
    for b in data:
        crc = ((crc << 8) & 0xFFFF) ^ _CRC_TABLE[(crc >> 8) ^ b]
    return crc


@dataclass(frozen=True)
class CommandFrame:
    robot_id: int
    seq: int
    v_mm_s: int
    omega_mrad_s: int
    flags: int = 0

    def __post_init__(self):
        if not 0 <= self.robot_id <= 31:
            raise FieldOutOfRange(f"robot_id {self.robot_id} outside 0..31")
        if not 0 <= self.seq <= 0xFFFF:
            raise FieldOutOfRange(f"seq {self.seq} outside u16")
        for name, value in (("v_mm_s", self.v_mm_s), ("omega_mrad_s", self.omega_mrad_s)):
            if not -32768 <= value <= 32767:
                raise FieldOutOfRange(f"{name} {value} outside i16")
        if self.flags & ~FLAG_ESTOP:
            raise FieldOutOfRange(f"flags {self.flags:#04x} sets reserved bits")


def encode_command(f: CommandFrame) -> bytes:
    body = MAGIC + struct.pack(
        "<BBHhhBB", VERSION, f.robot_id, f.seq, f.v_mm_s, f.omega_mrad_s, f.flags, 0
    )
    return body + struct.pack("<H", crc16(body))


def decode_command(data: bytes) -> CommandFrame:
    if len(data) < FRAME_LEN:
        raise ShortBuffer(f"need {FRAME_LEN} bytes, got {len(data)}")
    frame = bytes(data[:FRAME_LEN])
    if frame[:2] != MAGIC:
        raise BadMagic(f"bad magic {frame[:2].hex()}")
    if frame[2] != VERSION:
        raise BadVersion(f"unsupported version {frame[2]:#04x}")
    (crc_stored,) = struct.unpack("<H", frame[12:14])
    if crc16(frame[:12]) != crc_stored:
        raise BadCrc("checksum mismatch")
    version, robot_id, seq, v, omega, flags, _ = struct.unpack("<BBHhhBB", frame[2:12])
    return CommandFrame(robot_id, seq, v, omega, flags)


class Channel:
    """One impaired point-to-point link with its own seeded RNG.

    Single-owner mutable state: send and poll must come from one thread.
    Drop is drawn first; jitter is drawn only for messages that survive.
    Delivery times are clamped non-decreasing so the link stays FIFO.
    """

    def __init__(self, base_latency_s: float, jitter_s: float, drop_prob: float, seed: int):
        if not 0.0 <= drop_prob <= 1.0:
            raise ValueError(f"drop_prob {drop_prob} outside [0, 1]")
        if base_latency_s < 0 or jitter_s < 0:
            raise ValueError("latency and jitter must be non-negative")
        self.base_latency_s = base_latency_s
        self.jitter_s = jitter_s
        self.drop_prob = drop_prob
        self.rng = np.random.default_rng(seed)
        self.queue: list[tuple[float, int, bytes]] = []
        self.last_scheduled = -float("inf")
        self.sent_count = 0
        self.dropped_count = 0

    def send(self, payload: bytes, t_now: float) -> None:
        self.sent_count += 1
        if float(self.rng.random()) < self.drop_prob:
            self.dropped_count += 1
            return
        jitter = float(self.rng.uniform(0.0, self.jitter_s)) if self.jitter_s > 0 else 0.0
        deliver_at = max(t_now + self.base_latency_s + jitter, self.last_scheduled)
        self.last_scheduled = deliver_at
        self.queue.append((deliver_at, self.sent_count, payload))

    def poll(self, t_now: float) -> list[tuple[float, bytes]]:
        """Due (deliver_at, payload) pairs, removed from the queue, in order."""
        due = [entry for entry in self.queue if entry[0] <= t_now]
        if not due:
            return []
        self.queue = [entry for entry in self.queue if entry[0] > t_now]
        due.sort(key=lambda entry: (entry[0], entry[1]))
        return [(deliver_at, payload) for deliver_at, _, payload in due]


def channel_send(ch: Channel, payload: bytes, t_now: float) -> Channel:
    ch.send(payload, t_now)
    return ch


def channel_poll(ch: Channel, t_now: float) -> list[bytes]:
    return [payload for _, payload in ch.poll(t_now)]
