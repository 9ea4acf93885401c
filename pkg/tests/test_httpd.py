"""HTTP layer tests: parsing, command extraction, page rendering, responses."""

from dataclasses import replace

import pytest

from avrweb import httpd
from avrweb.devmodel import (
    DeviceState,
    LedMode,
    SetDeviceIp,
    SetLed,
    SetLedMode,
    SetServerIp,
    WriteLcd,
)
from avrweb.httpd import (
    HttpServer,
    build_response,
    extract_commands,
    parse_request,
    render_homepage,
    render_postform,
)
from avrweb.netstack import default_config
from avrweb.wire import Ipv4Address

# the kind of request a desktop browser sends, as captured from a real client
BROWSER_REQUEST = (
    b"GET / HTTP/1.1\r\n"
    b"Host: 192.168.2.101\r\n"
    b"User-Agent: Mozilla/5.0 (Windows; U; Windows NT 5.1; en-US; rv:1.9.2.3) Gecko/20100401 Firefox/3.6.3\r\n"
    b"Accept: text/html,application/xhtml+xml,application/xml;q=0.9,*/*;q=0.8\r\n"
    b"Accept-Language: en-us,en;q=0.5\r\n"
    b"Accept-Encoding: gzip,deflate\r\n"
    b"Accept-Charset: ISO-8859-1,utf-8;q=0.7,*;q=0.7\r\n"
    b"Keep-Alive: 115\r\n"
    b"Connection: keep-alive\r\n"
    b"\r\n"
)


# --- parse_request ------------------------------------------------------------

def test_parse_full_browser_request():
    req = parse_request(BROWSER_REQUEST)
    assert req.method == "GET"
    assert req.path == "/"
    assert req.header("Host") == "192.168.2.101"
    assert req.header("connection") == "keep-alive"  # case-insensitive lookup
    assert req.query_pairs == ()


def test_parse_query_string():
    req = parse_request(b"GET /?l1=1 HTTP/1.0\r\n\r\n")
    assert req.query == {"l1": "1"}


def test_parse_percent_decoding_and_plus():
    req = parse_request(b"GET /?lcd1=HELLO%20WORLD&lcd2=A+B%26C HTTP/1.0\r\n\r\n")
    assert req.query == {"lcd1": "HELLO WORLD", "lcd2": "A B&C"}


def test_parse_post_body_form():
    raw = b"POST / HTTP/1.1\r\nContent-Length: 7\r\n\r\nradio=1"
    req = parse_request(raw)
    assert req.method == "POST"
    assert req.form_pairs == (("radio", "1"),)


def test_parse_incomplete_header_and_body():
    with pytest.raises(httpd.IncompleteRequest):
        parse_request(b"GET / HTTP/1.0\r\nHost: x\r\n")
    with pytest.raises(httpd.IncompleteRequest):
        parse_request(b"POST / HTTP/1.0\r\nContent-Length: 10\r\n\r\nradio")


@pytest.mark.parametrize(
    "raw",
    [
        b"NONSENSE\r\n\r\n",
        b"HEAD / HTTP/1.0\r\n\r\n",
        b"GET /\r\n\r\n",
        b"GET / JUNK/1.0\r\n\r\n",
    ],
)
def test_parse_malformed_request_lines(raw):
    with pytest.raises(httpd.MalformedRequest):
        parse_request(raw)


# --- extract_commands ------------------------------------------------------------

def req_for(query: str, body: bytes = b"", method: str = "GET") -> httpd.HttpRequest:
    if method == "POST":
        raw = f"POST /?{query} HTTP/1.0\r\nContent-Length: {len(body)}\r\n\r\n".encode() + body
    else:
        raw = f"GET /?{query} HTTP/1.0\r\n\r\n".encode()
    return parse_request(raw)


def test_led_on_command():
    commands, notes = extract_commands(req_for("l1=1"))
    assert commands == [SetLed(1, True)] and notes == []


def test_lcd_command_direct_mapping():
    commands, _ = extract_commands(req_for("lcd1=HELLO"))
    assert commands == [WriteLcd(1, "HELLO")]


def test_device_ip_command():
    commands, _ = extract_commands(req_for("aip=192.168.1.10"))
    assert commands == [SetDeviceIp(Ipv4Address.parse("192.168.1.10"))]


def test_radio_command_from_post_body():
    commands, _ = extract_commands(req_for("", b"radio=0", method="POST"))
    assert commands == [SetLedMode(LedMode.BLINKING)]
    commands, _ = extract_commands(req_for("", b"radio=1", method="POST"))
    assert commands == [SetLedMode(LedMode.SCANNING)]


def test_commands_in_request_order():
    commands, _ = extract_commands(req_for("l2=1&lcd1=hi&sip=10.0.0.2"))
    assert commands == [SetLed(2, True), WriteLcd(1, "hi"), SetServerIp(Ipv4Address.parse("10.0.0.2"))]


def test_bad_values_skipped_with_note():
    commands, notes = extract_commands(req_for("l1=9&aip=999.9.9.9&l2=0"))
    assert commands == [SetLed(2, False)]
    assert len(notes) == 2 and 'l1="9"' in notes[0]


def test_unknown_keys_ignored():
    commands, notes = extract_commands(req_for("foo=bar&l1=1"))
    assert commands == [SetLed(1, True)] and notes == []


def test_lcd_value_truncated_at_16():
    commands, _ = extract_commands(req_for("lcd2=0123456789ABCDEFGH"))
    assert commands == [WriteLcd(2, "0123456789ABCDEF")]


# --- rendering ----------------------------------------------------------------------

def test_homepage_fixed_substrings():
    state = replace(DeviceState(), adc_preset=482, temperature_c=27, request_count=3)
    page = render_homepage(state, default_config())
    assert "ADC0(Preset) = 0482" in page
    assert "Temperature = 27&deg;C" in page
    assert "Request# 003" in page
    assert 'href="/?l1=1"' in page
    assert 'href="/?l2=1"' in page
    assert "AVR Webservice" in page


def test_homepage_led_on_renders_off_link():
    page = render_homepage(replace(DeviceState(), led1=True), default_config())
    assert 'LED 1 : <font color=green>ON</font> [ <a href="/?l1=0">OFF</a> ]' in page
    assert 'LED 2 : <font color=red>OFF</font> [ <a href="/?l2=1">ON</a> ]' in page


def test_homepage_prefills_ip_forms():
    page = render_homepage(DeviceState(), default_config())
    assert 'name="aip" type="text" size="15" maxlength="15" value="192.168.1.10"' in page
    assert 'name="sip" type="text" size="15" maxlength="15" value="192.168.1.11"' in page


def test_homepage_notes_are_escaped():
    page = render_homepage(DeviceState(), default_config(), notes=['ignored aip="<x>&"'])
    assert "&lt;x&gt;&amp;" in page
    assert "<x>" not in page


def test_postform_page_elements():
    page = render_postform(DeviceState(), default_config())
    assert "<h1>Embedded Web Server</h1>" in page
    assert "<h3>ATMEGA32 and ENC28J60</h3>" in page
    assert 'value="1" checked>Scanning LED' in page  # default mode is scanning
    assert 'value="0" >Blinking LED' in page
    page = render_postform(replace(DeviceState(), led_mode=LedMode.BLINKING, temperature_c=26), default_config())
    assert 'value="0" checked>Blinking LED' in page
    assert 'value="26"' in page


# --- build_response ---------------------------------------------------------------------

def test_response_header_block_exact_bytes():
    raw = build_response("<html></html>")
    assert raw.startswith(b"HTTP/1.0 200 OK\r\nContent-Type: text/html\r\n\r\n")
    assert raw.endswith(b"<html></html>")


def test_response_empty_page_is_headers_only():
    assert build_response("") == b"HTTP/1.0 200 OK\r\nContent-Type: text/html\r\n\r\n"


def test_response_400_status_line():
    raw = build_response(httpd.BAD_REQUEST_PAGE, 400)
    assert raw.startswith(b"HTTP/1.0 400 Bad Request\r\nContent-Type: text/html\r\n\r\n")


# --- HttpServer.handle ---------------------------------------------------------------------

def test_handle_incomplete_returns_none():
    server = HttpServer()
    assert server.handle(b"GET / HT", DeviceState(), default_config()) is None


def test_handle_applies_commands_then_renders():
    server = HttpServer()
    result = server.handle(b"GET /?l1=1 HTTP/1.0\r\n\r\n", DeviceState(), default_config())
    assert result.status == 200
    assert result.device.led1
    assert result.device.request_count == 1
    body = result.response.decode()
    assert 'LED 1 : <font color=green>ON</font> [ <a href="/?l1=0">OFF</a> ]' in body


def test_handle_counts_every_page():
    server = HttpServer()
    net = default_config()
    state = DeviceState()
    for expected in (1, 2, 3):
        result = server.handle(b"GET / HTTP/1.0\r\n\r\n", state, net)
        state = result.device
        assert state.request_count == expected
    assert f"Request# 00{expected}" in result.response.decode()


def test_handle_idempotent_commands():
    server = HttpServer()
    net = default_config()
    first = server.handle(b"GET /?l1=1 HTTP/1.0\r\n\r\n", DeviceState(), net)
    second = server.handle(b"GET /?l1=1 HTTP/1.0\r\n\r\n", first.device, net)
    assert replace(first.device, request_count=0) == replace(second.device, request_count=0)
    assert second.device.request_count == first.device.request_count + 1


def test_handle_device_ip_deferred_with_note():
    server = HttpServer()
    net = default_config()
    result = server.handle(b"GET /?aip=192.168.1.77 HTTP/1.0\r\n\r\n", DeviceState(), net)
    assert result.device_ip_change == Ipv4Address.parse("192.168.1.77")
    assert net.ip == Ipv4Address.parse("192.168.1.10")  # not applied yet
    body = result.response.decode()
    assert "takes effect after this response" in body
    assert 'value="192.168.1.77"' in body  # the form shows what was just set


def test_handle_server_ip_stored_immediately():
    server = HttpServer()
    net = default_config()
    server.handle(b"GET /?sip=192.168.1.50 HTTP/1.0\r\n\r\n", DeviceState(), net)
    assert net.server_ip == Ipv4Address.parse("192.168.1.50")


def test_handle_malformed_gets_400():
    server = HttpServer()
    result = server.handle(b"BOGUS\r\n\r\n", DeviceState(), default_config())
    assert result.status == 400
    assert result.response.startswith(b"HTTP/1.0 400 Bad Request\r\n")
    assert result.device.request_count == 0  # only served pages count


def test_handle_any_path_serves_homepage():
    server = HttpServer()
    result = server.handle(b"GET /nonexistent/page HTTP/1.0\r\n\r\n", DeviceState(), default_config())
    assert result.status == 200
    assert b"AVR Webservice" in result.response


def test_handle_postform_template():
    server = HttpServer(template="postform")
    result = server.handle(
        b"POST / HTTP/1.0\r\nContent-Length: 7\r\n\r\nradio=0",
        DeviceState(),
        default_config(),
    )
    assert result.device.led_mode is LedMode.BLINKING
    assert b"<h1>Embedded Web Server</h1>" in result.response
    assert b'value="0" checked>Blinking LED' in result.response
