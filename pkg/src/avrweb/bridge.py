"""SPI <-> UDP bridging between a serial peripheral and a network host.

Two tasks, mirroring each other. Bytes arriving from the SPI peripheral
are staged in a send buffer and, on flush (explicit or buffer-full),
leave as the payload of a single UDP datagram to the configured peer.
Datagrams arriving on the local UDP port are staged in a receive buffer
and drained to the SPI peripheral. The payload is carried as-is, with
no extra framing, so a round trip reproduces the bytes exactly and in
order.

There is no acknowledgment layer on top of UDP; on a lossy wire, lost
datagrams are simply lost (the harness can inject that).
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .wire import Ipv4Address, UdpDatagram

# one flush must fit a single datagram: MTU 1500 - 20 (IP) - 8 (UDP)
SPI_BUFFER_CAPACITY = 1472

DEFAULT_LOCAL_PORT = 5050
DEFAULT_PEER_PORT = 5051


class BridgeError(Exception):
    """Base class for bridge failures."""


class BufferOverflow(BridgeError):
    """A single SPI ingress does not fit the free buffer space."""


class WrongPort(BridgeError):
    """Datagram addressed to a port this bridge does not own."""


class SpiDisabled(BridgeError):
    """The SPI peripheral is not in enabled slave mode."""


@dataclass
class BridgeConfig:
    peer_ip: Ipv4Address
    local_udp_port: int = DEFAULT_LOCAL_PORT
    peer_udp_port: int = DEFAULT_PEER_PORT
    tx_capacity: int = SPI_BUFFER_CAPACITY
    rx_capacity: int = SPI_BUFFER_CAPACITY

    def __post_init__(self) -> None:
        if not (0 < self.local_udp_port < 65536 and 0 < self.peer_udp_port < 65536):
            raise ValueError("bridge ports must be nonzero 16-bit values")


@dataclass
class BridgeStats:
    spi_bytes_in: int = 0
    spi_bytes_rejected: int = 0
    udp_payload_bytes_out: int = 0
    udp_bytes_in: int = 0
    udp_bytes_dropped: int = 0
    datagrams_dropped: int = 0
    spi_bytes_out: int = 0


@dataclass
class Bridge:
    """Bridging state; driven from the stack poll loop and the SPI stub."""

    config: BridgeConfig
    spi_sink: object | None = None  # gets .receive(bytes) when the RX buffer drains
    spi_enabled: bool = True  # peripheral is in slave mode and enabled
    spi_tx_buffer: bytearray = field(default_factory=bytearray)
    spi_rx_buffer: bytearray = field(default_factory=bytearray)
    stats: BridgeStats = field(default_factory=BridgeStats)
    _egress: list[bytes] = field(default_factory=list)

    def spi_ingress(self, data: bytes) -> None:
        """Stage bytes from the SPI peripheral; auto-flush when full.

        An ingress that exceeds the free buffer space is rejected whole.
        """
        if not self.spi_enabled:
            raise SpiDisabled("SPI peripheral is disabled")
        self.stats.spi_bytes_in += len(data)
        if len(data) > self.config.tx_capacity - len(self.spi_tx_buffer):
            self.stats.spi_bytes_rejected += len(data)
            raise BufferOverflow(
                f"{len(data)} bytes do not fit ({self.config.tx_capacity - len(self.spi_tx_buffer)} free)"
            )
        self.spi_tx_buffer += data
        if len(self.spi_tx_buffer) == self.config.tx_capacity:
            self.flush()

    def flush(self) -> None:
        """Package the staged bytes as one outbound datagram payload."""
        if self.spi_tx_buffer:
            payload = bytes(self.spi_tx_buffer)
            self.spi_tx_buffer.clear()
            self._egress.append(payload)
            self.stats.udp_payload_bytes_out += len(payload)

    def take_egress(self) -> list[bytes]:
        """Hand flushed payloads to the stack for UDP transmission."""
        payloads = self._egress
        self._egress = []
        return payloads

    def udp_ingress(self, dgram: UdpDatagram) -> None:
        """Accept a datagram for the SPI peripheral; overflow drops it whole."""
        if dgram.dst_port != self.config.local_udp_port:
            raise WrongPort(f"datagram for port {dgram.dst_port}, bridge owns {self.config.local_udp_port}")
        self.stats.udp_bytes_in += len(dgram.payload)
        if len(dgram.payload) > self.config.rx_capacity - len(self.spi_rx_buffer):
            self.stats.udp_bytes_dropped += len(dgram.payload)
            self.stats.datagrams_dropped += 1
            return
        self.spi_rx_buffer += dgram.payload

    def drain_to_device(self) -> bytes:
        """Move the staged receive bytes out to the SPI peripheral."""
        if not self.spi_rx_buffer:
            return b""
        chunk = bytes(self.spi_rx_buffer)
        self.spi_rx_buffer.clear()
        self.stats.spi_bytes_out += len(chunk)
        if self.spi_sink is not None:
            self.spi_sink.receive(chunk)
        return chunk


class SpiDeviceStub:
    """Stand-in for the serial peripheral behind the bridge."""

    def __init__(self):
        self.chunks: list[bytes] = []

    def receive(self, data: bytes) -> None:
        self.chunks.append(data)

    @property
    def all_bytes(self) -> bytes:
        return b"".join(self.chunks)
