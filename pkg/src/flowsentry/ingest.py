"""Flow log line parsing plus batch and follow-mode file ingestion."""

from __future__ import annotations

import logging
import os
import re
import time
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Iterator

logger = logging.getLogger(__name__)

# Canonical line grammar. Field 8 is validated but carries no meaning for
# detection; it is kept on the record so lines can be reproduced verbatim.
LINE_GRAMMAR = (
    r"^([0-9]+),([0-9]+),([0-9]+:[0-9]+:[0-9]+),(TCP|UDP|ICMP),"
    r"([0-9.]+):([0-9]+|--),([0-9.]+):([0-9]+|--),[0-9]+,([0-9]+)$"
)

# Same language as LINE_GRAMMAR, with extra captures so every field
# (including the time components and field 8) comes out of one match.
_PARSE_RE = re.compile(
    r"([0-9]+),([0-9]+),([0-9]+):([0-9]+):([0-9]+),(TCP|UDP|ICMP),"
    r"([0-9.]+):([0-9]+|--),([0-9.]+):([0-9]+|--),([0-9]+),([0-9]+)"
)

# Per-token scan of the grammar, used only to locate the first offending
# byte once the fast path has failed.
_STEPS: list[tuple[re.Pattern[str], str]] = [
    (re.compile(r"[0-9]+"), "first numeric field"),
    (re.compile(r","), "comma"),
    (re.compile(r"[0-9]+"), "second numeric field"),
    (re.compile(r","), "comma"),
    (re.compile(r"[0-9]+"), "hours"),
    (re.compile(r":"), "colon"),
    (re.compile(r"[0-9]+"), "minutes"),
    (re.compile(r":"), "colon"),
    (re.compile(r"[0-9]+"), "seconds"),
    (re.compile(r","), "comma"),
    (re.compile(r"TCP|UDP|ICMP"), "protocol"),
    (re.compile(r","), "comma"),
    (re.compile(r"[0-9.]+"), "source address"),
    (re.compile(r":"), "colon"),
    (re.compile(r"[0-9]+|--"), "source port"),
    (re.compile(r","), "comma"),
    (re.compile(r"[0-9.]+"), "destination address"),
    (re.compile(r":"), "colon"),
    (re.compile(r"[0-9]+|--"), "destination port"),
    (re.compile(r","), "comma"),
    (re.compile(r"[0-9]+"), "eighth numeric field"),
    (re.compile(r","), "comma"),
    (re.compile(r"[0-9]+"), "packet count"),
]


class Protocol(str, Enum):
    TCP = "TCP"
    UDP = "UDP"
    ICMP = "ICMP"


class ParseError(ValueError):
    """Raised for a line that violates the grammar; carries the byte offset
    of the first violation."""

    def __init__(self, offset: int, reason: str):
        super().__init__(f"offset {offset}: {reason}")
        self.offset = offset
        self.reason = reason


@dataclass(frozen=True, slots=True)
class FlowRecord:
    """One parsed log line. event_time is seconds of day; a port of 0 means
    the source token was '--' (portless, e.g. ICMP)."""

    raw_field_1: int
    raw_field_2: int
    event_time: int
    protocol: Protocol
    source_ip: str
    source_port: int
    dest_ip: str
    dest_port: int
    raw_field_8: int
    packets: int


@dataclass
class IngestStats:
    lines_read: int = 0
    records_parsed: int = 0
    parse_failures: int = 0


@dataclass(frozen=True)
class StreamReset:
    """Emitted in follow mode when the file shrank underneath the reader."""

    line_number: int


def format_tod(seconds: int) -> str:
    h, rest = divmod(seconds, 3600)
    m, s = divmod(rest, 60)
    return f"{h:02d}:{m:02d}:{s:02d}"


def _violation_offset(line: str) -> tuple[int, str]:
    pos = 0
    for pattern, what in _STEPS:
        m = pattern.match(line, pos)
        if m is None:
            return pos, f"expected {what}"
        pos = m.end()
    return pos, "unexpected trailing text"


_PROTOCOLS = {member.value: member for member in Protocol}


def _ipv4_ok(text: str) -> bool:
    # The grammar already limits text to digits and dots, so each piece is
    # either empty or a plain decimal number.
    parts = text.split(".")
    if len(parts) != 4:
        return False
    for p in parts:
        if not p or (len(p) > 2 and int(p) > 255):
            return False
    return True


def parse_line(line: str) -> FlowRecord:
    """Parse one log line. Raises ParseError (with the offset of the first
    grammar violation) on anything else; never raises anything different."""
    m = _PARSE_RE.fullmatch(line)
    if m is None:
        offset, reason = _violation_offset(line)
        raise ParseError(offset, reason)
    g = m.group
    source_ip = g(7)
    if not _ipv4_ok(source_ip):
        raise ParseError(m.start(7), "source address is not a dotted-quad IPv4 address")
    dest_ip = g(9)
    if not _ipv4_ok(dest_ip):
        raise ParseError(m.start(9), "destination address is not a dotted-quad IPv4 address")
    token = g(8)
    source_port = 0 if token == "--" else int(token)
    if source_port > 65535:
        raise ParseError(m.start(8), "source port out of range")
    token = g(10)
    dest_port = 0 if token == "--" else int(token)
    if dest_port > 65535:
        raise ParseError(m.start(10), "destination port out of range")
    return FlowRecord(
        int(g(1)),
        int(g(2)),
        (int(g(3)) * 3600 + int(g(4)) * 60 + int(g(5))) % 86400,
        _PROTOCOLS[g(6)],
        source_ip,
        source_port,
        dest_ip,
        dest_port,
        int(g(11)),
        int(g(12)),
    )


def _port_token(port: int) -> str:
    return "--" if port == 0 else str(port)


def format_line(record: FlowRecord) -> str:
    """Inverse of parse_line for records with normalized fields."""
    return (
        f"{record.raw_field_1},{record.raw_field_2},{format_tod(record.event_time)},"
        f"{record.protocol.value},{record.source_ip}:{_port_token(record.source_port)},"
        f"{record.dest_ip}:{_port_token(record.dest_port)},{record.raw_field_8},{record.packets}"
    )


class TailReader:
    """Non-blocking incremental reader for a file that may still be growing.

    poll() returns whatever complete lines arrived since the last call, as
    (line_number, text) pairs. Truncation shows up as a StreamReset item and
    reading restarts from the top of the file.
    """

    def __init__(self, path: str):
        self._path = path
        self._pos = 0
        self._buf = b""
        self._line_no = 0
        # Fail fast on unreadable paths.
        with open(path, "rb"):
            pass

    def poll(self) -> list[tuple[int, str] | StreamReset]:
        out: list[tuple[int, str] | StreamReset] = []
        size = os.stat(self._path).st_size
        if size < self._pos:
            out.append(StreamReset(self._line_no))
            self._pos = 0
            self._buf = b""
        if size > self._pos:
            with open(self._path, "rb") as handle:
                handle.seek(self._pos)
                chunk = handle.read()
                self._pos = handle.tell()
            self._buf += chunk
            *complete, self._buf = self._buf.split(b"\n")
            for raw in complete:
                self._line_no += 1
                text = raw.decode("utf-8", errors="replace").rstrip("\r")
                out.append((self._line_no, text))
        return out


def open_stream(
    source: str,
    mode: str = "batch",
    *,
    poll_interval: float = 0.1,
    stop: Callable[[], bool] | None = None,
) -> Iterator[tuple[int, str] | StreamReset]:
    """Yield (line_number, text) items from a log file.

    Batch mode reads to EOF and stops. Follow mode keeps polling for growth
    until stop() turns true, reporting truncation as a StreamReset item.
    """
    if mode == "batch":
        with open(source, "r", errors="replace") as handle:
            for number, raw in enumerate(handle, 1):
                yield number, raw.rstrip("\r\n")
        return
    if mode != "follow":
        raise ValueError(f"unknown mode {mode!r}")
    reader = TailReader(source)
    while stop is None or not stop():
        items = reader.poll()
        if items:
            yield from items
        else:
            time.sleep(poll_interval)


def ingest(
    source: str,
    mode: str = "batch",
    *,
    poll_interval: float = 0.1,
    stop: Callable[[], bool] | None = None,
) -> tuple[Iterator[FlowRecord], IngestStats]:
    """Parse a log file into records.

    Returns a lazy record iterator plus a stats object that fills in as the
    iterator is consumed. Malformed lines are counted and skipped, never
    fatal; lines_read == records_parsed + parse_failures holds at all times.
    """
    stats = IngestStats()

    def records() -> Iterator[FlowRecord]:
        for item in open_stream(source, mode, poll_interval=poll_interval, stop=stop):
            if isinstance(item, StreamReset):
                logger.warning("%s shrank; following from the top", source)
                continue
            stats.lines_read += 1
            try:
                record = parse_line(item[1])
            except ParseError:
                stats.parse_failures += 1
                continue
            stats.records_parsed += 1
            yield record

    return records(), stats
