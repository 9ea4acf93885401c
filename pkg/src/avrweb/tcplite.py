"""Minimal single-connection TCP server machine for port 80.

Enough TCP for one HTTP request/response cycle at a time: passive open,
in-order data delivery, and a server-initiated close once the response
is out. The wire underneath is lossless and ordered, so there are no
retransmissions and no timers; out-of-order segments are discarded and
re-ACKed at the expected sequence number. One connection slot exists,
and a SYN from a second peer while it is busy is answered with RST.

State walk for the normal exchange:

    LISTEN --SYN--> SYN_RCVD --ACK--> ESTABLISHED
    ESTABLISHED --app_send(close)--> FIN_WAIT_1   (data, then FIN, sent together)
    FIN_WAIT_1 --ACK of FIN--> FIN_WAIT_2 --peer FIN--> back to LISTEN

A peer that closes first instead drives ESTABLISHED -> LAST_ACK (our
ACK and FIN go out back to back) -> LISTEN. The initial send sequence
number comes from a seeded generator, so identical seeds give identical
traces.
"""

from __future__ import annotations

import random
from enum import Enum

from .wire import Ipv4Address, MacAddress, TcpFlags, TcpSegment

MSS = 1460  # payload cap per segment; headers are fixed-size 20+20
WINDOW = 2048  # advertised receive window, constant

_MASK = 0xFFFFFFFF


class TcpState(Enum):
    LISTEN = "listen"
    SYN_RCVD = "syn-rcvd"
    ESTABLISHED = "established"
    FIN_WAIT_1 = "fin-wait-1"
    FIN_WAIT_2 = "fin-wait-2"
    LAST_ACK = "last-ack"
    CLOSED = "closed"


class NotEstablished(Exception):
    """app_send/app_close called outside the ESTABLISHED state."""


class TcpConn:
    """The one connection slot: state, sequence numbers, pending data."""

    def __init__(self, local_port: int = 80, iss_seed: int = 0):
        self.local_port = local_port
        self.state = TcpState.LISTEN
        self.remote: tuple[Ipv4Address, int] | None = None
        self.remote_mac: MacAddress | None = None  # link-layer return address, captured at SYN
        self.iss = 0
        self.snd_nxt = 0
        self.snd_una = 0
        self.rcv_nxt = 0
        self.rx_assembled = bytearray()
        self.tx_pending = bytearray()  # sent but not yet acknowledged
        self.close_after_send = False
        self.busy_rst_count = 0
        self._peer_fin = False
        self._rng = random.Random(iss_seed)

    def _segment(self, flags: TcpFlags, payload: bytes = b"") -> TcpSegment:
        assert self.remote is not None
        return TcpSegment(self.local_port, self.remote[1], self.snd_nxt, self.rcv_nxt, flags, WINDOW, payload)

    def _ack(self) -> TcpSegment:
        return self._segment(TcpFlags.ACK)


def _rearm(conn: TcpConn) -> None:
    """Return the slot to LISTEN for the next client."""
    conn.state = TcpState.LISTEN
    conn.remote = None
    conn.remote_mac = None
    conn.snd_nxt = conn.snd_una = conn.rcv_nxt = 0
    conn.rx_assembled.clear()
    conn.tx_pending.clear()
    conn.close_after_send = False
    conn._peer_fin = False


def _rst_for(seg: TcpSegment) -> TcpSegment:
    """Reset for a segment we will not serve, with believable sequence fields."""
    if seg.flags & TcpFlags.ACK:
        return TcpSegment(seg.dst_port, seg.src_port, seg.ack, 0, TcpFlags.RST, 0, b"")
    ack = (seg.seq + len(seg.payload) + bool(seg.flags & TcpFlags.SYN) + bool(seg.flags & TcpFlags.FIN)) & _MASK
    return TcpSegment(seg.dst_port, seg.src_port, 0, ack, TcpFlags.RST | TcpFlags.ACK, 0, b"")


def _process_ack(conn: TcpConn, ack: int) -> None:
    in_flight = (conn.snd_nxt - conn.snd_una) & _MASK
    advance = (ack - conn.snd_una) & _MASK
    if advance > in_flight:
        return  # acknowledges bytes we never sent; ignore
    conn.snd_una = ack
    del conn.tx_pending[: min(advance, len(conn.tx_pending))]


def on_segment(conn: TcpConn, seg: TcpSegment, src_ip: Ipv4Address, src_mac: MacAddress | None = None):
    """Advance the machine by one received segment.

    Returns ``(outbound_segments, delivered_bytes)``. Delivered bytes
    are also appended to ``conn.rx_assembled`` for the layer above.
    """
    if seg.dst_port != conn.local_port:
        return [_rst_for(seg)], b""

    peer = (src_ip, seg.src_port)
    outs: list[TcpSegment] = []
    delivered = b""

    if conn.state is TcpState.LISTEN:
        if seg.flags & TcpFlags.RST:
            return [], b""
        if seg.flags & TcpFlags.SYN and not seg.flags & TcpFlags.ACK:
            conn.remote = peer
            conn.remote_mac = src_mac
            conn.rcv_nxt = (seg.seq + 1) & _MASK
            conn.iss = conn._rng.getrandbits(32)
            conn.snd_una = conn.iss
            conn.snd_nxt = (conn.iss + 1) & _MASK  # the SYN occupies one sequence number
            conn.state = TcpState.SYN_RCVD
            return [TcpSegment(conn.local_port, peer[1], conn.iss, conn.rcv_nxt, TcpFlags.SYN | TcpFlags.ACK, WINDOW, b"")], b""
        return [_rst_for(seg)], b""

    if conn.state is TcpState.CLOSED:
        return [_rst_for(seg)], b""

    if peer != conn.remote:
        if seg.flags & TcpFlags.SYN:
            conn.busy_rst_count += 1  # the slot is taken; the interloper gets a reset
        return [_rst_for(seg)], b""

    if seg.flags & TcpFlags.RST:
        _rearm(conn)
        return [], b""

    if conn.state is TcpState.SYN_RCVD:
        if seg.flags & TcpFlags.SYN:
            # retransmitted SYN: offer the same SYN|ACK again
            return [TcpSegment(conn.local_port, peer[1], conn.iss, conn.rcv_nxt, TcpFlags.SYN | TcpFlags.ACK, WINDOW, b"")], b""
        if seg.flags & TcpFlags.ACK and seg.ack == conn.snd_nxt:
            conn.state = TcpState.ESTABLISHED
            conn.snd_una = seg.ack
            # fall through: the establishing ACK may carry data
        else:
            return [], b""

    if seg.flags & TcpFlags.ACK:
        _process_ack(conn, seg.ack)

    seq_ok = seg.seq == conn.rcv_nxt
    need_ack = False

    if seg.payload:
        if seq_ok and conn.state in (TcpState.ESTABLISHED, TcpState.FIN_WAIT_1, TcpState.FIN_WAIT_2):
            conn.rx_assembled += seg.payload
            conn.rcv_nxt = (conn.rcv_nxt + len(seg.payload)) & _MASK
            delivered = seg.payload
        need_ack = True  # out-of-order data is discarded but still re-ACKed at rcv_nxt

    if seg.flags & TcpFlags.FIN:
        if seq_ok and not conn._peer_fin:
            conn.rcv_nxt = (conn.rcv_nxt + 1) & _MASK
            conn._peer_fin = True
        need_ack = True

    if need_ack:
        outs.append(conn._ack())

    if conn._peer_fin and conn.state is TcpState.ESTABLISHED:
        # peer closed first; no half-open reads, so our FIN follows immediately
        outs.append(conn._segment(TcpFlags.FIN | TcpFlags.ACK))
        conn.snd_nxt = (conn.snd_nxt + 1) & _MASK
        conn.state = TcpState.LAST_ACK

    if conn.state is TcpState.FIN_WAIT_1 and conn.snd_una == conn.snd_nxt:
        conn.state = TcpState.FIN_WAIT_2
    if conn.state is TcpState.FIN_WAIT_2 and conn._peer_fin:
        _rearm(conn)
    elif conn.state is TcpState.LAST_ACK and conn.snd_una == conn.snd_nxt:
        _rearm(conn)

    return outs, delivered


def app_send(conn: TcpConn, data: bytes, then_close: bool = False) -> list[TcpSegment]:
    """Queue application data for the peer, segmented at the MSS.

    Every data segment carries ACK, the last also PSH. With
    ``then_close`` a FIN goes out right behind the final data segment
    and the machine enters FIN_WAIT_1.
    """
    if conn.state is not TcpState.ESTABLISHED:
        raise NotEstablished(f"cannot send in state {conn.state.value}")
    outs: list[TcpSegment] = []
    data = bytes(data)
    for start in range(0, len(data), MSS):
        chunk = data[start : start + MSS]
        flags = TcpFlags.ACK | (TcpFlags.PSH if start + MSS >= len(data) else TcpFlags(0))
        outs.append(conn._segment(flags, chunk))
        conn.snd_nxt = (conn.snd_nxt + len(chunk)) & _MASK
        conn.tx_pending += chunk
    if then_close:
        conn.close_after_send = True
        outs.append(conn._segment(TcpFlags.FIN | TcpFlags.ACK))
        conn.snd_nxt = (conn.snd_nxt + 1) & _MASK
        conn.state = TcpState.FIN_WAIT_1
    return outs


def app_close(conn: TcpConn) -> list[TcpSegment]:
    """Close without sending more data."""
    if conn.state is not TcpState.ESTABLISHED:
        raise NotEstablished(f"cannot close in state {conn.state.value}")
    out = conn._segment(TcpFlags.FIN | TcpFlags.ACK)
    conn.snd_nxt = (conn.snd_nxt + 1) & _MASK
    conn.state = TcpState.FIN_WAIT_1
    return [out]
