"""HTTP/1.0 request parsing, control commands, and page rendering.

The device serves one page. Any well-formed GET or POST is answered
with the homepage after applying the control commands carried in its
query string (and, for POST, its form body); a bad request line gets a
minimal 400 page. Responses always carry the fixed HTTP/1.0 header
block and the transport closes the connection once the page is sent.

Two page templates ship: the classic status homepage (default) and the
POST-form variant with the LED-mode radio buttons. Both live as text
resources under ``templates/`` with ``{name}`` substitution markers.
"""

from __future__ import annotations

import html
from dataclasses import dataclass
from importlib import resources
from typing import TYPE_CHECKING
from urllib.parse import parse_qsl

from . import devmodel
from .devmodel import (
    ControlCommand,
    DeviceState,
    LedMode,
    SetDeviceIp,
    SetLed,
    SetLedMode,
    SetServerIp,
    WriteLcd,
)
from .wire import Ipv4Address

if TYPE_CHECKING:  # pragma: no cover
    from .netstack import NetConfig

TEMPLATE_NAMES = ("appendix", "postform")

_STATUS_LINES = {200: "200 OK", 400: "400 Bad Request", 404: "404 Not Found"}

BAD_REQUEST_PAGE = "<html><body><h1>400 Bad Request</h1></body></html>\n"


class IncompleteRequest(Exception):
    """More bytes are needed before the request can be parsed."""


class MalformedRequest(ValueError):
    """The request line is not something the device can serve."""


@dataclass(frozen=True)
class HttpRequest:
    method: str
    path: str
    query_pairs: tuple[tuple[str, str], ...]
    headers: dict[str, str]
    body: bytes
    form_pairs: tuple[tuple[str, str], ...]

    @property
    def query(self) -> dict[str, str]:
        return dict(self.query_pairs)

    def header(self, name: str) -> str | None:
        for key, value in self.headers.items():
            if key.lower() == name.lower():
                return value
        return None


def parse_request(raw: bytes) -> HttpRequest:
    """Parse a request from assembled stream bytes.

    Raises :class:`IncompleteRequest` while the header block (or a POST
    body announced by Content-Length) has not fully arrived, and
    :class:`MalformedRequest` for an unusable request line. Query and
    form values are percent-decoded, with '+' decoding to space.
    """
    head, sep, rest = raw.partition(b"\r\n\r\n")
    if not sep:
        raise IncompleteRequest("header block not terminated yet")
    lines = head.split(b"\r\n")
    try:
        request_line = lines[0].decode("ascii")
    except UnicodeDecodeError:
        raise MalformedRequest("request line is not ASCII") from None
    parts = request_line.split(" ")
    if len(parts) != 3 or not parts[2].startswith("HTTP/"):
        raise MalformedRequest(f"bad request line {request_line!r}")
    method, target, _version = parts
    if method not in ("GET", "POST"):
        raise MalformedRequest(f"method {method!r} not supported")

    headers: dict[str, str] = {}
    for line in lines[1:]:
        name, colon, value = line.partition(b":")
        if not colon:
            continue  # tolerate junk header lines, the request line is what matters
        headers[name.decode("latin-1").strip()] = value.decode("latin-1").strip()

    path, _, querystring = target.partition("?")
    query_pairs = tuple(parse_qsl(querystring, keep_blank_values=True))

    body = b""
    form_pairs: tuple[tuple[str, str], ...] = ()
    if method == "POST":
        length_text = None
        for key, value in headers.items():
            if key.lower() == "content-length":
                length_text = value
        if length_text is not None:
            try:
                length = int(length_text)
            except ValueError:
                raise MalformedRequest(f"bad Content-Length {length_text!r}") from None
            if len(rest) < length:
                raise IncompleteRequest(f"body has {len(rest)} of {length} bytes")
            body = rest[:length]
        else:
            body = rest
        form_pairs = tuple(parse_qsl(body.decode("latin-1"), keep_blank_values=True))

    return HttpRequest(method, path, query_pairs, headers, body, form_pairs)


def extract_commands(req: HttpRequest) -> tuple[list[ControlCommand], list[str]]:
    """Map recognized form keys to commands, in request order.

    Unrecognized keys are ignored. A bad value (LED setting other than
    0/1, unparseable IP) skips that command and yields a note for the
    response page footer.
    """
    commands: list[ControlCommand] = []
    notes: list[str] = []

    def bad(key: str, value: str) -> None:
        notes.append(f'ignored {key}="{value}"')

    for key, value in req.query_pairs:
        if key in ("l1", "l2"):
            if value in ("0", "1"):
                commands.append(SetLed(int(key[1]), value == "1"))
            else:
                bad(key, value)
        elif key in ("aip", "sip"):
            try:
                ip = Ipv4Address.parse(value)
            except ValueError:
                bad(key, value)
                continue
            commands.append(SetDeviceIp(ip) if key == "aip" else SetServerIp(ip))
        elif key in ("lcd1", "lcd2"):
            commands.append(WriteLcd(int(key[3]), value[:devmodel.LCD_COLS]))
    for key, value in req.form_pairs:
        if key == "radio":
            if value == "0":
                commands.append(SetLedMode(LedMode.BLINKING))
            elif value == "1":
                commands.append(SetLedMode(LedMode.SCANNING))
            else:
                bad(key, value)
    return commands, notes


def _load_template(name: str) -> str:
    return resources.files(__package__).joinpath(f"templates/{name}.html").read_text()


_TEMPLATE_CACHE: dict[str, str] = {}


def _template(name: str) -> str:
    if name not in _TEMPLATE_CACHE:
        _TEMPLATE_CACHE[name] = _load_template(name)
    return _TEMPLATE_CACHE[name]


def _led_fragment(index: int, on: bool) -> str:
    if on:
        return f'<font color=green>ON</font> [ <a href="/?l{index}=0">OFF</a> ]'
    return f'<font color=red>OFF</font> [ <a href="/?l{index}=1">ON</a> ]'


def _notes_fragment(notes) -> str:
    return "".join(f"<br>{html.escape(note)}" for note in notes)


def render_homepage(device: DeviceState, net: "NetConfig", notes=(), aip_text: str | None = None) -> str:
    """Fill the status homepage with live device and network state."""
    return _template("homepage").format(
        led1=_led_fragment(1, device.led1),
        led2=_led_fragment(2, device.led2),
        adc=f"{device.adc_preset:04d}",
        temp=device.temperature_c,
        aip=aip_text if aip_text is not None else str(net.ip),
        sip=str(net.server_ip),
        req=f"{device.request_count:03d}",
        notes=_notes_fragment(notes),
    )


def render_postform(device: DeviceState, net: "NetConfig", notes=()) -> str:
    """Fill the POST-form page variant (temperature box and LED-mode radios)."""
    return _template("postform").format(
        temp=device.temperature_c,
        blinking="checked" if device.led_mode is LedMode.BLINKING else "",
        scanning="checked" if device.led_mode is LedMode.SCANNING else "",
        notes=_notes_fragment(notes),
    )


def build_response(page: str, status: int = 200) -> bytes:
    """Assemble the response bytes: fixed header block, blank line, page."""
    header = f"HTTP/1.0 {_STATUS_LINES[status]}\r\nContent-Type: text/html\r\n\r\n"
    return header.encode("ascii") + page.encode("utf-8")


@dataclass
class HandleResult:
    device: DeviceState
    response: bytes
    device_ip_change: Ipv4Address | None
    status: int


class HttpServer:
    """Request handler bound to one page template."""

    def __init__(self, template: str = "appendix"):
        if template not in TEMPLATE_NAMES:
            raise ValueError(f"template must be one of {TEMPLATE_NAMES}")
        self.template = template

    def handle(self, raw: bytes, device: DeviceState, net: "NetConfig") -> HandleResult | None:
        """Serve one request from assembled bytes.

        Returns None while the request is still incomplete. On success
        the returned state reflects this request's commands plus the
        request-counter bump, and the page is rendered from it.
        """
        try:
            req = parse_request(raw)
        except IncompleteRequest:
            return None
        except MalformedRequest:
            return HandleResult(device, build_response(BAD_REQUEST_PAGE, 400), None, 400)

        commands, notes = extract_commands(req)
        ip_change: Ipv4Address | None = None
        for cmd in commands:
            if isinstance(cmd, SetDeviceIp):
                # applied only after this response is out, or the reply could not be delivered
                ip_change = cmd.ip
                notes.append(f"device IP {cmd.ip} takes effect after this response")
            elif isinstance(cmd, SetServerIp):
                net.server_ip = cmd.ip
            else:
                device = devmodel.apply(device, cmd)
        device = devmodel.count_request(device)

        if self.template == "postform":
            page = render_postform(device, net, notes)
        else:
            aip_text = str(ip_change) if ip_change is not None else None
            page = render_homepage(device, net, notes, aip_text=aip_text)
        return HandleResult(device, build_response(page, 200), ip_change, 200)
