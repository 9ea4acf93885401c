"""Device-side network brain.

One poll consumes every frame waiting in the NIC (through its SPI
command interface, like the real firmware would), answers ARP requests
for the device address, validates and demultiplexes IPv4, answers ICMP
echo, hands UDP to the bridge and TCP port 80 to the connection
machine, and finally runs the HTTP layer over whatever request bytes
have assembled. Everything not recognized is dropped and counted, so
``frames_in == dispatched + dropped`` holds after every poll.

The stack only ever emits frames with its own source MAC and IP (ARP
fields follow the protocol instead). Outbound packets to peers whose
MAC is unknown wait in a small pending queue behind an ARP request.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from typing import TYPE_CHECKING

from . import nicsim, tcplite, wire
from .devmodel import DeviceState
from .nicsim import NicState, SpiOpcode, SpiTransaction, spi_execute
from .wire import (
    BROADCAST_MAC,
    ArpOp,
    ArpPacket,
    EchoKind,
    EthernetFrame,
    IcmpEcho,
    Ipv4Address,
    Ipv4Packet,
    MacAddress,
)

if TYPE_CHECKING:  # pragma: no cover
    from .bridge import Bridge
    from .httpd import HttpServer
    from .tcplite import TcpConn

DEFAULT_TTL = 128
ARP_CACHE_CAPACITY = 8
ARP_PENDING_LIMIT = 8  # packets parked while their next hop resolves


class NoGateway(Exception):
    """Off-subnet destination with no gateway configured."""


def _mask_is_prefix(mask: Ipv4Address) -> bool:
    inverted = ~int(mask) & 0xFFFFFFFF
    return inverted & (inverted + 1) == 0


@dataclass
class NetConfig:
    """The device's network identity, set once at boot (or via the control page)."""

    ip: Ipv4Address
    mac: MacAddress
    subnet_mask: Ipv4Address = Ipv4Address.parse("255.255.255.0")
    gateway: Ipv4Address | None = None
    dns: Ipv4Address | None = None  # stored configuration; the stack never queries it
    server_ip: Ipv4Address = Ipv4Address.parse("192.168.1.11")  # stored by the page's form, unused
    ttl_default: int = DEFAULT_TTL

    def __post_init__(self) -> None:
        if not _mask_is_prefix(self.subnet_mask):
            raise ValueError(f"subnet mask {self.subnet_mask} is not a prefix mask")


def default_config() -> NetConfig:
    return NetConfig(
        ip=Ipv4Address.parse("192.168.1.10"),
        mac=MacAddress.parse("02:00:00:00:00:10"),
        gateway=Ipv4Address.parse("192.168.1.1"),
        dns=Ipv4Address.parse("192.168.1.1"),
    )


def resolve_next_hop(dst: Ipv4Address, config: NetConfig) -> Ipv4Address:
    """The address to ARP for: the destination itself on-subnet, else the gateway."""
    mask = int(config.subnet_mask)
    if int(dst) & mask == int(config.ip) & mask:
        return dst
    if config.gateway is None:
        raise NoGateway(f"{dst} is off-subnet and no gateway is set")
    return config.gateway


def icmp_echo_reply(request: IcmpEcho, requester: Ipv4Address, config: NetConfig, identification: int) -> Ipv4Packet:
    """Build the echo reply packet: identifier, sequence and payload copied."""
    reply = IcmpEcho(EchoKind.REPLY, request.identifier, request.sequence, request.payload)
    return Ipv4Packet(
        src=config.ip,
        dst=requester,
        ttl=config.ttl_default,
        protocol=wire.PROTO_ICMP,
        identification=identification,
        payload=wire.serialize_icmp_echo(reply),
    )


class ArpCache:
    """Fixed-size IP-to-MAC map, evicting the oldest insertion."""

    def __init__(self, capacity: int = ARP_CACHE_CAPACITY):
        self.capacity = capacity
        self._entries: dict[Ipv4Address, MacAddress] = {}

    def insert(self, ip: Ipv4Address, mac: MacAddress) -> None:
        if ip in self._entries:
            del self._entries[ip]  # refresh recency
        elif len(self._entries) >= self.capacity:
            del self._entries[next(iter(self._entries))]
        self._entries[ip] = mac

    def lookup(self, ip: Ipv4Address) -> MacAddress | None:
        return self._entries.get(ip)

    def __len__(self) -> int:
        return len(self._entries)


@dataclass
class StackStats:
    """Per-category frame accounting, snapshot-able for tests."""

    frames_in: int = 0
    # dispatched
    arp_replies_sent: int = 0
    arp_replies_received: int = 0
    echo_replies_sent: int = 0
    udp_delivered: int = 0
    tcp_delivered: int = 0
    # dropped
    bad_frame_drops: int = 0
    other_ethertype_drops: int = 0
    arp_ignored_drops: int = 0
    ip_checksum_drops: int = 0
    ip_malformed_drops: int = 0
    not_ours_drops: int = 0
    icmp_ignored_drops: int = 0
    udp_checksum_drops: int = 0
    udp_malformed_drops: int = 0
    udp_port_drops: int = 0
    tcp_checksum_drops: int = 0
    tcp_malformed_drops: int = 0
    protocol_drops: int = 0
    # not part of inbound frame accounting
    arp_requests_sent: int = 0
    egress_drops: int = 0

    _DISPATCHED = ("arp_replies_sent", "arp_replies_received", "echo_replies_sent", "udp_delivered", "tcp_delivered")
    _NON_FRAME = ("frames_in", "arp_requests_sent", "egress_drops")

    def dispatched(self) -> int:
        return sum(getattr(self, name) for name in self._DISPATCHED)

    def dropped(self) -> int:
        return sum(
            getattr(self, f.name)
            for f in fields(self)
            if f.name not in self._DISPATCHED and f.name not in self._NON_FRAME
        )

    def snapshot(self) -> "StackStats":
        return replace(self)


@dataclass
class PollResult:
    device: DeviceState
    ip_change: Ipv4Address | None = None


class NetStack:
    """Poll-driven dispatcher bound to one NIC, one connection slot, one config."""

    def __init__(self, config: NetConfig):
        self.config = config
        self.arp = ArpCache()
        self.stats = StackStats()
        self._next_ident = 1
        self._arp_outstanding: set[Ipv4Address] = set()
        self._pending_egress: list[tuple[Ipv4Address, Ipv4Packet]] = []

    def next_ident(self) -> int:
        value = self._next_ident
        self._next_ident = value % 0xFFFF + 1  # monotone from 1, wraps past 65535
        return value

    # -- transmit helpers ---------------------------------------------------

    def _tx(self, nic: NicState, dst_mac: MacAddress, ethertype: int, payload: bytes) -> None:
        raw = wire.serialize_frame(EthernetFrame(dst_mac, self.config.mac, ethertype, payload))
        spi_execute(nic, SpiTransaction(SpiOpcode.WRITE_FRAME, raw))

    def _tx_segment(self, nic: NicState, seg: wire.TcpSegment, dst_ip: Ipv4Address, dst_mac: MacAddress) -> None:
        pkt = Ipv4Packet(
            src=self.config.ip,
            dst=dst_ip,
            ttl=self.config.ttl_default,
            protocol=wire.PROTO_TCP,
            identification=self.next_ident(),
            payload=wire.serialize_tcp(seg, self.config.ip, dst_ip),
        )
        self._tx(nic, dst_mac, wire.ETHERTYPE_IPV4, wire.serialize_ipv4(pkt))

    def send_ipv4(self, nic: NicState, pkt: Ipv4Packet) -> None:
        """Transmit a packet, parking it behind an ARP request if need be."""
        next_hop = resolve_next_hop(pkt.dst, self.config)
        mac = self.arp.lookup(next_hop)
        if mac is not None:
            self._tx(nic, mac, wire.ETHERTYPE_IPV4, wire.serialize_ipv4(pkt))
            return
        if len(self._pending_egress) >= ARP_PENDING_LIMIT:
            self.stats.egress_drops += 1
            return
        self._pending_egress.append((next_hop, pkt))
        if next_hop not in self._arp_outstanding:
            self._arp_outstanding.add(next_hop)
            request = ArpPacket(ArpOp.REQUEST, self.config.mac, self.config.ip, MacAddress(b"\x00" * 6), next_hop)
            self._tx(nic, BROADCAST_MAC, wire.ETHERTYPE_ARP, wire.serialize_arp(request))
            self.stats.arp_requests_sent += 1

    def _flush_pending(self, nic: NicState, next_hop: Ipv4Address, mac: MacAddress) -> None:
        ready = [pkt for hop, pkt in self._pending_egress if hop == next_hop]
        self._pending_egress = [(hop, pkt) for hop, pkt in self._pending_egress if hop != next_hop]
        for pkt in ready:
            self._tx(nic, mac, wire.ETHERTYPE_IPV4, wire.serialize_ipv4(pkt))

    # -- receive handling ---------------------------------------------------

    def _handle_arp(self, nic: NicState, frame: EthernetFrame) -> None:
        try:
            arp = wire.parse_arp(frame.payload)
        except wire.WireError:
            self.stats.bad_frame_drops += 1
            return
        if arp.op is ArpOp.REQUEST and arp.target_ip == self.config.ip:
            self.arp.insert(arp.sender_ip, arp.sender_mac)  # a peer that asked for us
            reply = ArpPacket(ArpOp.REPLY, self.config.mac, self.config.ip, arp.sender_mac, arp.sender_ip)
            self._tx(nic, arp.sender_mac, wire.ETHERTYPE_ARP, wire.serialize_arp(reply))
            self.stats.arp_replies_sent += 1
        elif arp.op is ArpOp.REPLY and arp.target_ip == self.config.ip and arp.sender_ip in self._arp_outstanding:
            self._arp_outstanding.discard(arp.sender_ip)
            self.arp.insert(arp.sender_ip, arp.sender_mac)
            self.stats.arp_replies_received += 1
            self._flush_pending(nic, arp.sender_ip, arp.sender_mac)
        else:
            self.stats.arp_ignored_drops += 1  # unsolicited replies and other hosts' traffic

    def _handle_ipv4(self, nic: NicState, frame: EthernetFrame, conn: "TcpConn", bridge: "Bridge | None") -> None:
        try:
            pkt = wire.parse_ipv4(frame.payload)
        except wire.BadChecksum:
            self.stats.ip_checksum_drops += 1
            return
        except wire.WireError:
            self.stats.ip_malformed_drops += 1
            return
        if pkt.dst != self.config.ip:
            self.stats.not_ours_drops += 1
            return

        if pkt.protocol == wire.PROTO_ICMP:
            try:
                echo = wire.parse_icmp_echo(pkt.payload)
            except wire.WireError:
                self.stats.icmp_ignored_drops += 1
                return
            if echo.kind is EchoKind.REQUEST:
                reply = icmp_echo_reply(echo, pkt.src, self.config, self.next_ident())
                self._tx(nic, frame.src, wire.ETHERTYPE_IPV4, wire.serialize_ipv4(reply))
                self.stats.echo_replies_sent += 1
            else:
                self.stats.icmp_ignored_drops += 1
        elif pkt.protocol == wire.PROTO_UDP:
            try:
                dgram = wire.parse_udp(pkt.payload, pkt.src, pkt.dst)
            except wire.BadChecksum:
                self.stats.udp_checksum_drops += 1
                return
            except wire.WireError:
                self.stats.udp_malformed_drops += 1
                return
            if bridge is not None and dgram.dst_port == bridge.config.local_udp_port:
                bridge.udp_ingress(dgram)  # overflow is the bridge's own drop counter
                self.stats.udp_delivered += 1
            else:
                self.stats.udp_port_drops += 1
        elif pkt.protocol == wire.PROTO_TCP:
            try:
                seg = wire.parse_tcp(pkt.payload, pkt.src, pkt.dst)
            except wire.BadChecksum:
                self.stats.tcp_checksum_drops += 1
                return
            except wire.WireError:
                self.stats.tcp_malformed_drops += 1
                return
            outs, _delivered = tcplite.on_segment(conn, seg, pkt.src, frame.src)
            for out in outs:
                self._tx_segment(nic, out, pkt.src, frame.src)
            self.stats.tcp_delivered += 1
        else:
            self.stats.protocol_drops += 1

    # -- the poll loop ------------------------------------------------------

    def poll(
        self,
        nic: NicState,
        conn: "TcpConn",
        device: DeviceState,
        *,
        bridge: "Bridge | None" = None,
        http: "HttpServer | None" = None,
    ) -> PollResult:
        """Consume pending RX frames, dispatch, and serve any completed request.

        Returns the evolved device state and a device-IP change the
        caller must apply once the in-flight response has been
        delivered (the connection slot is back to LISTEN).
        """
        status = spi_execute(nic, SpiTransaction(SpiOpcode.READ_STATUS))
        for _ in range(status[1]):
            raw = spi_execute(nic, SpiTransaction(SpiOpcode.READ_FRAME))
            self.stats.frames_in += 1
            try:
                frame = wire.parse_frame(raw)
            except wire.WireError:
                self.stats.bad_frame_drops += 1
                continue
            if frame.ethertype == wire.ETHERTYPE_ARP:
                self._handle_arp(nic, frame)
            elif frame.ethertype == wire.ETHERTYPE_IPV4:
                self._handle_ipv4(nic, frame, conn, bridge)
            else:
                self.stats.other_ethertype_drops += 1

        if bridge is not None:
            for payload in bridge.take_egress():
                dgram = wire.UdpDatagram(bridge.config.local_udp_port, bridge.config.peer_udp_port, payload)
                pkt = Ipv4Packet(
                    src=self.config.ip,
                    dst=bridge.config.peer_ip,
                    ttl=self.config.ttl_default,
                    protocol=wire.PROTO_UDP,
                    identification=self.next_ident(),
                    payload=wire.serialize_udp(dgram, self.config.ip, bridge.config.peer_ip),
                )
                try:
                    self.send_ipv4(nic, pkt)
                except NoGateway:
                    self.stats.egress_drops += 1

        ip_change = None
        if http is not None and conn.rx_assembled:
            result = http.handle(bytes(conn.rx_assembled), device, self.config)
            if result is not None:
                conn.rx_assembled.clear()
                device = result.device
                ip_change = result.device_ip_change
                if conn.state is tcplite.TcpState.ESTABLISHED and conn.remote is not None:
                    for seg in tcplite.app_send(conn, result.response, then_close=True):
                        self._tx_segment(nic, seg, conn.remote[0], conn.remote_mac)

        if bridge is not None:
            bridge.drain_to_device()

        return PollResult(device, ip_change)
