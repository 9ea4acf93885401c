"""Wire formats shared by the device stack and the test harness.

Parsers and serializers for Ethernet II, ARP, IPv4, ICMP echo, UDP and
TCP, plus the 16-bit one's-complement checksum those protocols share.
All multi-byte fields are big-endian. Serializers recompute checksums;
parsers verify them and raise on mismatch. For every record type,
``parse_*(serialize_*(x)) == x``.

Headers are fixed-size: IPv4 is always emitted with IHL=5 and TCP with
data offset 5 (no options, not even MSS), which keeps the formats
byte-predictable. Fragmented IPv4 and option-bearing headers are
rejected on receive.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import IntEnum, IntFlag

MTU = 1500  # largest Ethernet payload we emit; oversize is an error, never a fragment

ETH_HEADER_LEN = 14
ETHERTYPE_IPV4 = 0x0800
ETHERTYPE_ARP = 0x0806

PROTO_ICMP = 1
PROTO_TCP = 6
PROTO_UDP = 17

IPV4_HEADER_LEN = 20
UDP_HEADER_LEN = 8
TCP_HEADER_LEN = 20
ICMP_HEADER_LEN = 8

IPV4_MAX_PAYLOAD = MTU - IPV4_HEADER_LEN
UDP_MAX_PAYLOAD = IPV4_MAX_PAYLOAD - UDP_HEADER_LEN
TCP_MAX_PAYLOAD = IPV4_MAX_PAYLOAD - TCP_HEADER_LEN


class WireError(ValueError):
    """Base class for malformed or unsupported wire data."""


class TooShort(WireError):
    """Input ends before the fixed header does."""


class PayloadTooLarge(WireError):
    """Serializing would exceed the 1500-byte Ethernet payload limit."""


class BadChecksum(WireError):
    """A checksum field does not verify."""


class Unsupported(WireError):
    """Well-formed but outside the lean feature set (options, fragments, ...)."""


def internet_checksum(data: bytes) -> int:
    """One's-complement 16-bit checksum over ``data``.

    Odd-length input is padded with a single zero byte for summation.
    Returns the complement of the folded sum; an empty input yields
    0xFFFF.
    """
    if len(data) % 2:
        data = data + b"\x00"
    total = 0
    for i in range(0, len(data), 2):
        total += (data[i] << 8) | data[i + 1]
    while total >> 16:
        total = (total & 0xFFFF) + (total >> 16)
    return ~total & 0xFFFF


def _insert_checksum(header: bytearray, offset: int, value: int) -> None:
    struct.pack_into("!H", header, offset, value)


@dataclass(frozen=True)
class MacAddress:
    """48-bit IEEE 802 address, rendered as lowercase colon-separated hex."""

    octets: bytes

    def __post_init__(self) -> None:
        if len(self.octets) != 6:
            raise ValueError("MAC address needs exactly 6 octets")

    @classmethod
    def parse(cls, text: str) -> "MacAddress":
        parts = text.split(":")
        if len(parts) != 6:
            raise ValueError(f"bad MAC address {text!r}")
        try:
            octets = bytes(int(p, 16) for p in parts)
        except ValueError:
            raise ValueError(f"bad MAC address {text!r}") from None
        return cls(octets)

    @property
    def is_broadcast(self) -> bool:
        return self.octets == b"\xff" * 6

    @property
    def is_locally_administered(self) -> bool:
        return bool(self.octets[0] & 0x02)

    def __str__(self) -> str:
        return ":".join(f"{b:02x}" for b in self.octets)


BROADCAST_MAC = MacAddress(b"\xff" * 6)


@dataclass(frozen=True)
class Ipv4Address:
    """IPv4 address; the dotted-quad text form round-trips exactly."""

    octets: bytes

    def __post_init__(self) -> None:
        if len(self.octets) != 4:
            raise ValueError("IPv4 address needs exactly 4 octets")

    @classmethod
    def parse(cls, text: str) -> "Ipv4Address":
        parts = text.split(".")
        if len(parts) != 4:
            raise ValueError(f"bad IPv4 address {text!r}")
        octets = bytearray()
        for p in parts:
            if not p.isdigit() or (len(p) > 1 and p[0] == "0") or int(p) > 255:
                raise ValueError(f"bad IPv4 address {text!r}")
            octets.append(int(p))
        return cls(bytes(octets))

    def __int__(self) -> int:
        return int.from_bytes(self.octets, "big")

    def __str__(self) -> str:
        return ".".join(str(b) for b in self.octets)


@dataclass(frozen=True)
class EthernetFrame:
    dst: MacAddress
    src: MacAddress
    ethertype: int
    payload: bytes


class ArpOp(IntEnum):
    REQUEST = 1
    REPLY = 2


@dataclass(frozen=True)
class ArpPacket:
    op: ArpOp
    sender_mac: MacAddress
    sender_ip: Ipv4Address
    target_mac: MacAddress
    target_ip: Ipv4Address


@dataclass(frozen=True)
class Ipv4Packet:
    src: Ipv4Address
    dst: Ipv4Address
    ttl: int
    protocol: int
    identification: int
    payload: bytes


class EchoKind(IntEnum):
    # values are the ICMP type byte
    REPLY = 0
    REQUEST = 8


@dataclass(frozen=True)
class IcmpEcho:
    kind: EchoKind
    identifier: int
    sequence: int
    payload: bytes


@dataclass(frozen=True)
class UdpDatagram:
    src_port: int
    dst_port: int
    payload: bytes


class TcpFlags(IntFlag):
    FIN = 0x01
    SYN = 0x02
    RST = 0x04
    PSH = 0x08
    ACK = 0x10

    def __str__(self) -> str:
        names = [f.name for f in (TcpFlags.SYN, TcpFlags.ACK, TcpFlags.PSH, TcpFlags.FIN, TcpFlags.RST) if self & f]
        return "|".join(names) if names else "NONE"


@dataclass(frozen=True)
class TcpSegment:
    src_port: int
    dst_port: int
    seq: int
    ack: int
    flags: TcpFlags
    window: int
    payload: bytes


# --- Ethernet ---------------------------------------------------------------

def parse_frame(raw: bytes) -> EthernetFrame:
    if len(raw) < ETH_HEADER_LEN:
        raise TooShort(f"Ethernet frame is {len(raw)} bytes, need at least {ETH_HEADER_LEN}")
    dst = MacAddress(raw[0:6])
    src = MacAddress(raw[6:12])
    (ethertype,) = struct.unpack_from("!H", raw, 12)
    return EthernetFrame(dst, src, ethertype, raw[ETH_HEADER_LEN:])


def serialize_frame(frame: EthernetFrame) -> bytes:
    if len(frame.payload) > MTU:
        raise PayloadTooLarge(f"frame payload {len(frame.payload)} exceeds MTU {MTU}")
    return frame.dst.octets + frame.src.octets + struct.pack("!H", frame.ethertype) + frame.payload


# --- ARP --------------------------------------------------------------------

_ARP_FMT = "!HHBBH6s4s6s4s"
_ARP_LEN = struct.calcsize(_ARP_FMT)


def parse_arp(raw: bytes) -> ArpPacket:
    if len(raw) < _ARP_LEN:
        raise TooShort(f"ARP packet is {len(raw)} bytes, need {_ARP_LEN}")
    htype, ptype, hlen, plen, op, sha, spa, tha, tpa = struct.unpack_from(_ARP_FMT, raw)
    if htype != 1 or ptype != ETHERTYPE_IPV4 or hlen != 6 or plen != 4:
        raise Unsupported("ARP is only handled for Ethernet/IPv4 with 6/4 address sizes")
    if op not in (ArpOp.REQUEST, ArpOp.REPLY):
        raise Unsupported(f"ARP opcode {op} is neither request nor reply")
    return ArpPacket(ArpOp(op), MacAddress(sha), Ipv4Address(spa), MacAddress(tha), Ipv4Address(tpa))


def serialize_arp(pkt: ArpPacket) -> bytes:
    return struct.pack(
        _ARP_FMT,
        1,
        ETHERTYPE_IPV4,
        6,
        4,
        int(pkt.op),
        pkt.sender_mac.octets,
        pkt.sender_ip.octets,
        pkt.target_mac.octets,
        pkt.target_ip.octets,
    )


# --- IPv4 -------------------------------------------------------------------

def parse_ipv4(raw: bytes) -> Ipv4Packet:
    if len(raw) < IPV4_HEADER_LEN:
        raise TooShort(f"IPv4 packet is {len(raw)} bytes, need at least {IPV4_HEADER_LEN}")
    version_ihl = raw[0]
    if version_ihl >> 4 != 4:
        raise Unsupported(f"IP version {version_ihl >> 4}")
    if version_ihl & 0x0F != 5:
        raise Unsupported("IPv4 options are not handled")
    total_length, identification, flags_frag = struct.unpack_from("!HHH", raw, 2)
    if flags_frag & 0x3FFF:  # more-fragments bit or nonzero offset
        raise Unsupported("IPv4 fragments are not handled")
    if total_length != len(raw):
        raise Unsupported(f"total length field {total_length} != packet length {len(raw)}")
    if internet_checksum(raw[:IPV4_HEADER_LEN]) != 0:
        raise BadChecksum("IPv4 header checksum does not verify")
    ttl = raw[8]
    protocol = raw[9]
    src = Ipv4Address(raw[12:16])
    dst = Ipv4Address(raw[16:20])
    return Ipv4Packet(src, dst, ttl, protocol, identification, raw[IPV4_HEADER_LEN:])


def serialize_ipv4(pkt: Ipv4Packet) -> bytes:
    if len(pkt.payload) > IPV4_MAX_PAYLOAD:
        raise PayloadTooLarge(f"IPv4 payload {len(pkt.payload)} exceeds {IPV4_MAX_PAYLOAD}")
    header = bytearray(
        struct.pack(
            "!BBHHHBBH4s4s",
            0x45,
            0,
            IPV4_HEADER_LEN + len(pkt.payload),
            pkt.identification & 0xFFFF,
            0,
            pkt.ttl & 0xFF,
            pkt.protocol & 0xFF,
            0,
            pkt.src.octets,
            pkt.dst.octets,
        )
    )
    _insert_checksum(header, 10, internet_checksum(bytes(header)))
    return bytes(header) + pkt.payload


# --- ICMP echo --------------------------------------------------------------

def parse_icmp_echo(raw: bytes) -> IcmpEcho:
    if len(raw) < ICMP_HEADER_LEN:
        raise TooShort(f"ICMP message is {len(raw)} bytes, need at least {ICMP_HEADER_LEN}")
    icmp_type, code, _checksum, identifier, sequence = struct.unpack_from("!BBHHH", raw)
    if icmp_type not in (EchoKind.REQUEST, EchoKind.REPLY) or code != 0:
        raise Unsupported(f"ICMP type {icmp_type} code {code} is not an echo")
    if internet_checksum(raw) != 0:
        raise BadChecksum("ICMP checksum does not verify")
    return IcmpEcho(EchoKind(icmp_type), identifier, sequence, raw[ICMP_HEADER_LEN:])


def serialize_icmp_echo(echo: IcmpEcho) -> bytes:
    if ICMP_HEADER_LEN + len(echo.payload) > IPV4_MAX_PAYLOAD:
        raise PayloadTooLarge("ICMP payload too large for one IPv4 packet")
    header = bytearray(struct.pack("!BBHHH", int(echo.kind), 0, 0, echo.identifier & 0xFFFF, echo.sequence & 0xFFFF))
    _insert_checksum(header, 2, internet_checksum(bytes(header) + echo.payload))
    return bytes(header) + echo.payload


# --- UDP --------------------------------------------------------------------

def _pseudo_header(src: Ipv4Address, dst: Ipv4Address, protocol: int, length: int) -> bytes:
    return struct.pack("!4s4sBBH", src.octets, dst.octets, 0, protocol, length)


def parse_udp(raw: bytes, src: Ipv4Address, dst: Ipv4Address) -> UdpDatagram:
    if len(raw) < UDP_HEADER_LEN:
        raise TooShort(f"UDP datagram is {len(raw)} bytes, need at least {UDP_HEADER_LEN}")
    src_port, dst_port, length, checksum = struct.unpack_from("!HHHH", raw)
    if length != len(raw):
        raise Unsupported(f"UDP length field {length} != datagram length {len(raw)}")
    if checksum != 0:  # zero means "not computed" and is accepted as-is
        if internet_checksum(_pseudo_header(src, dst, PROTO_UDP, length) + raw) != 0:
            raise BadChecksum("UDP checksum does not verify")
    return UdpDatagram(src_port, dst_port, raw[UDP_HEADER_LEN:])


def serialize_udp(dgram: UdpDatagram, src: Ipv4Address, dst: Ipv4Address) -> bytes:
    if len(dgram.payload) > UDP_MAX_PAYLOAD:
        raise PayloadTooLarge(f"UDP payload {len(dgram.payload)} exceeds {UDP_MAX_PAYLOAD}")
    length = UDP_HEADER_LEN + len(dgram.payload)
    header = bytearray(struct.pack("!HHHH", dgram.src_port, dgram.dst_port, length, 0))
    checksum = internet_checksum(_pseudo_header(src, dst, PROTO_UDP, length) + bytes(header) + dgram.payload)
    # the checksum is always computed on transmit; 0x0000 is transmitted as 0xFFFF
    _insert_checksum(header, 6, checksum if checksum != 0 else 0xFFFF)
    return bytes(header) + dgram.payload


# --- TCP --------------------------------------------------------------------

def parse_tcp(raw: bytes, src: Ipv4Address, dst: Ipv4Address) -> TcpSegment:
    if len(raw) < TCP_HEADER_LEN:
        raise TooShort(f"TCP segment is {len(raw)} bytes, need at least {TCP_HEADER_LEN}")
    src_port, dst_port, seq, ack = struct.unpack_from("!HHII", raw)
    offset_flags, window = struct.unpack_from("!HH", raw, 12)
    if offset_flags >> 12 != 5:
        raise Unsupported("TCP options are not handled")
    if internet_checksum(_pseudo_header(src, dst, PROTO_TCP, len(raw)) + raw) != 0:
        raise BadChecksum("TCP checksum does not verify")
    return TcpSegment(src_port, dst_port, seq, ack, TcpFlags(offset_flags & 0x3F), window, raw[TCP_HEADER_LEN:])


def serialize_tcp(seg: TcpSegment, src: Ipv4Address, dst: Ipv4Address) -> bytes:
    if len(seg.payload) > TCP_MAX_PAYLOAD:
        raise PayloadTooLarge(f"TCP payload {len(seg.payload)} exceeds {TCP_MAX_PAYLOAD}")
    header = bytearray(
        struct.pack(
            "!HHIIHHHH",
            seg.src_port,
            seg.dst_port,
            seg.seq & 0xFFFFFFFF,
            seg.ack & 0xFFFFFFFF,
            (5 << 12) | (int(seg.flags) & 0x3F),
            seg.window & 0xFFFF,
            0,
            0,
        )
    )
    length = TCP_HEADER_LEN + len(seg.payload)
    _insert_checksum(header, 16, internet_checksum(_pseudo_header(src, dst, PROTO_TCP, length) + bytes(header) + seg.payload))
    return bytes(header) + seg.payload
