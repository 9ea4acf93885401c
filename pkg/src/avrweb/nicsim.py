"""Simulated stand-alone 10Base-T Ethernet controller on an SPI bus.

The controller owns bounded RX/TX frame rings, a MAC filter, an
interrupt flag that mirrors "RX ring nonempty", and link/activity
indicators. The host side talks to it exclusively through framed SPI
transactions; the virtual medium delivers frames through
:func:`wire_deliver` and collects them with :func:`tx_drain`.

Timing is logical, not electrical: the real part's 20 MHz SPI ceiling
is recorded as a constant for documentation only, and the activity LED
is a pulse counter rather than a timed blink so tests can assert on it.
"""

from __future__ import annotations

import struct
from collections import deque
from dataclasses import dataclass
from enum import IntEnum

from .wire import BROADCAST_MAC, MacAddress

RX_RING_CAPACITY = 4096  # bytes; each stored frame costs len + 2-byte length prefix
TX_RING_CAPACITY = 4096
FRAME_PREFIX_LEN = 2
SPI_MAX_CLOCK_HZ = 20_000_000  # documentation only; no clock is modeled

_TXN_HEADER = struct.Struct("!BH")


class SpiOpcode(IntEnum):
    READ_STATUS = 0x01
    READ_FRAME = 0x02
    WRITE_FRAME = 0x03
    SET_MAC = 0x04
    SET_PROMISCUOUS = 0x05
    RESET = 0x06


class NicError(Exception):
    """Base class for SPI transaction failures."""


class RxEmpty(NicError):
    """READ_FRAME issued with nothing in the RX ring."""


class TxOverflow(NicError):
    """The TX ring cannot hold the frame."""


class BadOpcode(NicError):
    """Unknown opcode byte or malformed transaction framing."""


@dataclass(frozen=True)
class SpiTransaction:
    """One command on the SPI bus, framed as [opcode:1][length:2][payload]."""

    opcode: SpiOpcode
    payload: bytes = b""

    def encode(self) -> bytes:
        return _TXN_HEADER.pack(int(self.opcode), len(self.payload)) + self.payload

    @classmethod
    def decode(cls, raw: bytes) -> "SpiTransaction":
        if len(raw) < _TXN_HEADER.size:
            raise BadOpcode(f"transaction is {len(raw)} bytes, need at least {_TXN_HEADER.size}")
        opcode, length = _TXN_HEADER.unpack_from(raw)
        if opcode not in SpiOpcode._value2member_map_:
            raise BadOpcode(f"unknown opcode 0x{opcode:02x}")
        if len(raw) != _TXN_HEADER.size + length:
            raise BadOpcode(f"length field {length} does not match payload")
        return cls(SpiOpcode(opcode), raw[_TXN_HEADER.size:])


class NicState:
    """Controller registers and buffers, mutated only via spi_execute/wire_deliver."""

    def __init__(self, mac: MacAddress, *, link_up: bool = True, trace=None):
        self.mac = mac
        self.link_up = link_up
        self.promiscuous = False
        self.int_pending = False
        self.led_link = link_up
        self.led_activity = 0  # pulse count, one per transmitted frame
        self.rx_ring: deque[bytes] = deque()
        self.tx_ring: deque[bytes] = deque()
        self.rx_bytes = 0
        self.tx_bytes = 0
        self.frames_delivered = 0  # passed the MAC filter (accepted or dropped)
        self.frames_read = 0
        self.frames_dropped = 0  # RX ring overflow, drop-newest
        self.frames_filtered = 0
        self.link_down_discards = 0
        self._trace = trace

    def set_link(self, up: bool) -> None:
        self.link_up = up
        self.led_link = up


def _ring_free(occupied: int, capacity: int) -> int:
    return capacity - occupied


def spi_execute(nic: NicState, txn: SpiTransaction) -> bytes:
    """Apply one SPI transaction and return the response bytes."""
    op = txn.opcode
    if op == SpiOpcode.READ_STATUS:
        response = bytes([int(nic.link_up), min(len(nic.rx_ring), 255), int(nic.int_pending)])
    elif op == SpiOpcode.READ_FRAME:
        if not nic.rx_ring:
            raise RxEmpty("RX ring is empty")
        frame = nic.rx_ring.popleft()
        nic.rx_bytes -= len(frame) + FRAME_PREFIX_LEN
        nic.frames_read += 1
        nic.int_pending = bool(nic.rx_ring)
        response = frame
    elif op == SpiOpcode.WRITE_FRAME:
        cost = len(txn.payload) + FRAME_PREFIX_LEN
        if cost > _ring_free(nic.tx_bytes, TX_RING_CAPACITY):
            raise TxOverflow(f"frame needs {cost} bytes, {_ring_free(nic.tx_bytes, TX_RING_CAPACITY)} free")
        nic.tx_ring.append(txn.payload)
        nic.tx_bytes += cost
        nic.led_activity += 1
        response = b""
    elif op == SpiOpcode.SET_MAC:
        if len(txn.payload) != 6:
            raise BadOpcode("SET_MAC payload must be 6 bytes")
        nic.mac = MacAddress(txn.payload)
        response = b""
    elif op == SpiOpcode.SET_PROMISCUOUS:
        if len(txn.payload) != 1:
            raise BadOpcode("SET_PROMISCUOUS payload must be 1 byte")
        nic.promiscuous = bool(txn.payload[0])
        response = b""
    elif op == SpiOpcode.RESET:
        nic.rx_ring.clear()
        nic.tx_ring.clear()
        nic.rx_bytes = nic.tx_bytes = 0
        nic.int_pending = False
        nic.promiscuous = False
        nic.led_activity = 0
        nic.frames_delivered = nic.frames_read = nic.frames_dropped = 0
        nic.frames_filtered = nic.link_down_discards = 0
        response = b""
    else:  # pragma: no cover - decode rejects unknown opcodes first
        raise BadOpcode(f"unknown opcode {op}")
    if nic._trace is not None:
        nic._trace(f"spi {op.name.lower()} len={len(txn.payload)} -> {len(response)}B")
    return response


def wire_deliver(nic: NicState, frame: bytes) -> None:
    """Deliver one frame from the medium into the RX ring.

    Frames are accepted when addressed to the controller's MAC, to the
    broadcast address, or when promiscuous mode is on; everything else
    is silently filtered. An accepted frame that does not fit is
    dropped (drop-newest) and counted.
    """
    if not nic.link_up:
        nic.link_down_discards += 1
        return
    dst = frame[:6]
    if not (nic.promiscuous or dst == nic.mac.octets or dst == BROADCAST_MAC.octets):
        nic.frames_filtered += 1
        return
    nic.frames_delivered += 1
    cost = len(frame) + FRAME_PREFIX_LEN
    if cost > _ring_free(nic.rx_bytes, RX_RING_CAPACITY):
        nic.frames_dropped += 1
        return
    nic.rx_ring.append(frame)
    nic.rx_bytes += cost
    nic.int_pending = True
    if nic._trace is not None:
        nic._trace(f"rx frame len={len(frame)}")


def tx_drain(nic: NicState) -> list[bytes]:
    """Take every queued TX frame for the medium; empty while the link is down."""
    if not nic.link_up:
        return []
    frames = list(nic.tx_ring)
    nic.tx_ring.clear()
    nic.tx_bytes = 0
    return frames
