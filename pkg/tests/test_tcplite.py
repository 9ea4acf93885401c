"""TCP machine tests: handshake, data flow, close choreography, resets."""

import random

import pytest

from avrweb import tcplite
from avrweb.tcplite import MSS, WINDOW, TcpConn, TcpState, app_close, app_send, on_segment
from avrweb.wire import Ipv4Address, MacAddress, TcpFlags, TcpSegment

CLIENT_IP = Ipv4Address.parse("192.168.1.11")
OTHER_IP = Ipv4Address.parse("192.168.1.99")
CLIENT_MAC = MacAddress.parse("02:00:00:00:00:11")
CLIENT_PORT = 49152


def seg(seq, ack, flags, payload=b"", src_port=CLIENT_PORT, dst_port=80):
    return TcpSegment(src_port, dst_port, seq, ack, flags, 65535, payload)


def handshake(conn: TcpConn, client_seq: int = 1000):
    outs, _ = on_segment(conn, seg(client_seq, 0, TcpFlags.SYN), CLIENT_IP, CLIENT_MAC)
    syn_ack = outs[0]
    on_segment(conn, seg(client_seq + 1, (syn_ack.seq + 1) & 0xFFFFFFFF, TcpFlags.ACK), CLIENT_IP)
    return syn_ack


def test_listen_syn_produces_syn_ack():
    conn = TcpConn(iss_seed=7)
    outs, delivered = on_segment(conn, seg(1000, 0, TcpFlags.SYN), CLIENT_IP, CLIENT_MAC)
    assert delivered == b""
    assert conn.state is TcpState.SYN_RCVD
    assert conn.remote == (CLIENT_IP, CLIENT_PORT)
    assert conn.remote_mac == CLIENT_MAC
    (syn_ack,) = outs
    assert syn_ack.flags == TcpFlags.SYN | TcpFlags.ACK
    assert syn_ack.ack == 1001
    assert syn_ack.seq == conn.iss
    assert syn_ack.window == WINDOW


def test_iss_comes_from_seeded_generator():
    a, b = TcpConn(iss_seed=7), TcpConn(iss_seed=7)
    handshake(a)
    handshake(b)
    assert a.iss == b.iss == random.Random(7).getrandbits(32)
    assert TcpConn(iss_seed=8) and handshake(TcpConn(iss_seed=8)).seq != a.iss


def test_established_data_is_delivered_and_acked():
    conn = TcpConn(iss_seed=1)
    handshake(conn)
    request = b"GET / HTTP/1.1\r\n\r\n"
    outs, delivered = on_segment(conn, seg(1001, conn.snd_nxt, TcpFlags.PSH | TcpFlags.ACK, request), CLIENT_IP)
    assert delivered == request
    assert bytes(conn.rx_assembled) == request
    (ack,) = outs
    assert ack.flags == TcpFlags.ACK
    assert ack.ack == 1001 + len(request)
    assert conn.rcv_nxt == 1001 + len(request)


def test_out_of_order_data_discarded_and_reacked():
    conn = TcpConn(iss_seed=1)
    handshake(conn)
    outs, delivered = on_segment(conn, seg(5000, conn.snd_nxt, TcpFlags.ACK, b"future"), CLIENT_IP)
    assert delivered == b""
    assert bytes(conn.rx_assembled) == b""
    assert outs[0].flags == TcpFlags.ACK and outs[0].ack == 1001


def test_app_send_single_segment_then_fin():
    conn = TcpConn(iss_seed=1)
    handshake(conn)
    outs = app_send(conn, b"x" * 100, then_close=True)
    assert [o.flags for o in outs] == [TcpFlags.PSH | TcpFlags.ACK, TcpFlags.FIN | TcpFlags.ACK]
    assert len(outs[0].payload) == 100
    assert outs[1].seq == (outs[0].seq + 100) & 0xFFFFFFFF
    assert conn.state is TcpState.FIN_WAIT_1
    assert conn.close_after_send


def test_app_send_segments_at_mss():
    conn = TcpConn(iss_seed=1)
    handshake(conn)
    outs = app_send(conn, b"y" * 3000)
    assert [len(o.payload) for o in outs] == [1460, 1460, 80]
    assert [o.seq for o in outs] == [conn.iss + 1, conn.iss + 1 + 1460, conn.iss + 1 + 2920]
    assert outs[-1].flags & TcpFlags.PSH
    assert not outs[0].flags & TcpFlags.PSH
    assert conn.state is TcpState.ESTABLISHED


def test_app_send_empty_with_close_is_immediate_fin():
    conn = TcpConn(iss_seed=1)
    handshake(conn)
    outs = app_send(conn, b"", then_close=True)
    assert [o.flags for o in outs] == [TcpFlags.FIN | TcpFlags.ACK]
    assert conn.state is TcpState.FIN_WAIT_1


def test_app_send_requires_established():
    conn = TcpConn()
    with pytest.raises(tcplite.NotEstablished):
        app_send(conn, b"data")


def test_server_close_walk_back_to_listen():
    conn = TcpConn(iss_seed=1)
    handshake(conn)
    outs = app_send(conn, b"hello", then_close=True)
    fin_seq_end = (outs[-1].seq + 1) & 0xFFFFFFFF
    # client acks data and FIN cumulatively
    outs, _ = on_segment(conn, seg(1001, fin_seq_end, TcpFlags.ACK), CLIENT_IP)
    assert conn.state is TcpState.FIN_WAIT_2
    assert outs == []
    assert len(conn.tx_pending) == 0
    # then the client's own FIN
    outs, _ = on_segment(conn, seg(1001, fin_seq_end, TcpFlags.FIN | TcpFlags.ACK), CLIENT_IP)
    assert conn.state is TcpState.LISTEN  # slot rearmed for the next client
    assert outs[0].flags == TcpFlags.ACK
    assert outs[0].ack == 1002


def test_client_closes_first_path():
    conn = TcpConn(iss_seed=1)
    handshake(conn)
    outs, _ = on_segment(conn, seg(1001, conn.snd_nxt, TcpFlags.FIN | TcpFlags.ACK), CLIENT_IP)
    assert [o.flags for o in outs] == [TcpFlags.ACK, TcpFlags.FIN | TcpFlags.ACK]
    assert conn.state is TcpState.LAST_ACK
    outs, _ = on_segment(conn, seg(1002, conn.snd_nxt, TcpFlags.ACK), CLIENT_IP)
    assert conn.state is TcpState.LISTEN
    assert outs == []


def test_rcv_nxt_accounting_invariant():
    conn = TcpConn(iss_seed=3)
    handshake(conn, client_seq=5000)
    total = 0
    rng = random.Random(5)
    for _ in range(10):
        chunk = rng.randbytes(rng.randrange(1, 400))
        on_segment(conn, seg(5001 + total, conn.snd_nxt, TcpFlags.ACK, chunk), CLIENT_IP)
        total += len(chunk)
        assert conn.rcv_nxt == 5001 + total
    on_segment(conn, seg(5001 + total, conn.snd_nxt, TcpFlags.FIN | TcpFlags.ACK), CLIENT_IP)
    assert conn.rcv_nxt == 5001 + total + 1


def test_segment_to_wrong_port_gets_rst():
    conn = TcpConn()
    outs, _ = on_segment(conn, seg(1, 0, TcpFlags.SYN, dst_port=8080), CLIENT_IP)
    assert outs[0].flags & TcpFlags.RST
    assert outs[0].src_port == 8080 and outs[0].dst_port == CLIENT_PORT
    assert conn.state is TcpState.LISTEN


def test_closed_state_gets_rst():
    conn = TcpConn()
    conn.state = TcpState.CLOSED
    outs, _ = on_segment(conn, seg(1, 2, TcpFlags.ACK), CLIENT_IP)
    assert outs[0].flags & TcpFlags.RST
    assert outs[0].seq == 2  # seeded from the offending segment's ack field


def test_second_peer_syn_while_busy_gets_rst():
    conn = TcpConn(iss_seed=1)
    handshake(conn)
    outs, _ = on_segment(conn, seg(1, 0, TcpFlags.SYN, src_port=55555), OTHER_IP)
    assert outs[0].flags & TcpFlags.RST
    assert conn.busy_rst_count == 1
    assert conn.state is TcpState.ESTABLISHED  # the real client is unaffected


def test_syn_retransmit_repeats_same_syn_ack():
    conn = TcpConn(iss_seed=9)
    outs1, _ = on_segment(conn, seg(1000, 0, TcpFlags.SYN), CLIENT_IP, CLIENT_MAC)
    outs2, _ = on_segment(conn, seg(1000, 0, TcpFlags.SYN), CLIENT_IP, CLIENT_MAC)
    assert outs1 == outs2


def test_peer_rst_rearms_listen():
    conn = TcpConn(iss_seed=1)
    handshake(conn)
    outs, _ = on_segment(conn, seg(1001, conn.snd_nxt, TcpFlags.RST), CLIENT_IP)
    assert outs == []
    assert conn.state is TcpState.LISTEN


def test_app_close_without_data():
    conn = TcpConn(iss_seed=1)
    handshake(conn)
    outs = app_close(conn)
    assert outs[0].flags == TcpFlags.FIN | TcpFlags.ACK
    assert conn.state is TcpState.FIN_WAIT_1


def test_identical_seeds_identical_traces():
    def run(seed):
        conn = TcpConn(iss_seed=seed)
        trace = []
        outs, _ = on_segment(conn, seg(42, 0, TcpFlags.SYN), CLIENT_IP, CLIENT_MAC)
        trace += outs
        outs, _ = on_segment(conn, seg(43, (outs[0].seq + 1) & 0xFFFFFFFF, TcpFlags.ACK), CLIENT_IP)
        trace += outs
        trace += app_send(conn, b"page", then_close=True)
        return trace

    assert run(123) == run(123)
    assert run(123) != run(124)
