"""Temperature log parsing and table rendering.

The log file is a single line of "timestamp|temperature" records joined
by commas. The historical renderer this module reproduces iterated the
comma-split elements only up to the second-to-last one, so a file that
ends with a trailing comma renders every record, while a file without
one silently loses its final record. The default mode keeps that quirk
byte-for-byte; strict mode drops it and rejects malformed records
instead of rendering blanks.

Neither field may contain ',' or '|'; the format has no escaping.
"""

from __future__ import annotations

from dataclasses import dataclass

PAGE_TITLE = "AVR Ethernet Logger"

_HEADER_ROW = (
    '<tr><td align="center"><b>Date & time<b></td>'
    '<td align="center"><b>Temperature</b></td></tr>'
)


class MalformedRecord(ValueError):
    """Strict mode found an element without a '|' separator."""

    def __init__(self, index: int, element: str):
        super().__init__(f"record {index} has no '|' separator: {element!r}")
        self.index = index
        self.element = element


@dataclass(frozen=True)
class LogRecord:
    timestamp_text: str
    temperature_c: str  # rendered verbatim with a degree suffix


def _split_record(element: str) -> LogRecord:
    fields = element.split("|")
    return LogRecord(fields[0], fields[1] if len(fields) > 1 else "")


def parse_log(content: str, strict: bool = False) -> list[LogRecord]:
    """Split the log into records.

    Default mode mirrors the original loop bound exactly: elements
    0..n-2 of the comma split are parsed and the last element is never
    looked at (it is the empty string when the file ends with a comma).
    Strict mode parses every element except a single trailing empty one
    and raises :class:`MalformedRecord` where the default mode would
    render an empty temperature.
    """
    elements = content.split(",")
    if not strict:
        return [_split_record(elements[i]) for i in range(len(elements) - 1)]
    if elements and elements[-1] == "":
        elements = elements[:-1]
    records = []
    for i, element in enumerate(elements):
        if "|" not in element:
            raise MalformedRecord(i, element)
        records.append(_split_record(element))
    return records


def render_log_table(records: list[LogRecord]) -> str:
    """Emit the log page: a title and one table row per record."""
    rows = "".join(
        f'<tr><td align="center">{r.timestamp_text}</td>'
        f'<td align="center">{r.temperature_c}&deg;C</td></tr>'
        for r in records
    )
    return f"<title>{PAGE_TITLE}</title>\n<table>{_HEADER_ROW}{rows}</table>\n"


def render_log_file(path, strict: bool = False) -> str:
    """Parse and render a log file in one step (CLI helper)."""
    from pathlib import Path

    return render_log_table(parse_log(Path(path).read_text(), strict=strict))
