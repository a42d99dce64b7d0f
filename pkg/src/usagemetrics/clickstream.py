"""Clickstream log records: TSV parsing, robot filtering, country attribution.

Log lines carry eight tab-separated columns::

    timestamp  user_id  ip  hostname  user_agent  action  pub_id  channel

Timestamps are RFC 3339 with a numeric UTC offset. Records are attributed to a
calendar year in fixed UTC-05:00 (no daylight saving), so a year boundary is
the same instant regardless of the offset a producer wrote.
"""
from __future__ import annotations

import enum
import ipaddress
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Iterator, NamedTuple, Union

from .countries import UNKNOWN, tld_to_country

UNIDENTIFIED = "UNIDENTIFIED"
ATTRIBUTION_TZ = timezone(timedelta(hours=-5))
COLUMNS = ("timestamp", "user_id", "ip", "hostname", "user_agent", "action", "pub_id", "channel")

IPAddress = Union[ipaddress.IPv4Address, ipaddress.IPv6Address]
IPNetwork = Union[ipaddress.IPv4Network, ipaddress.IPv6Network]


class Action(str, enum.Enum):
    DOWNLOAD = "DOWNLOAD"
    ABSTRACT_VIEW = "ABSTRACT_VIEW"
    OTHER = "OTHER"


class Channel(str, enum.Enum):
    DIRECT = "DIRECT"
    SEARCH_ENGINE = "SEARCH_ENGINE"
    UNKNOWN = "UNKNOWN"


_ACTIONS = {a.value: a for a in Action}
_CHANNELS = {c.value: c for c in Channel}
_CHANNELS[""] = Channel.UNKNOWN


class ParseError(ValueError):
    """A log line that does not satisfy the record format.

    ``code`` is one of WRONG_FIELD_COUNT, BAD_TIMESTAMP, EMPTY_PUB_ID,
    UNEXPECTED_PUB_ID, BAD_ACTION_TOKEN, BAD_CHANNEL_TOKEN, BAD_IP.
    """

    def __init__(self, code: str, column: str | None, line_no: int, detail: str = ""):
        self.code = code
        self.column = column
        self.line_no = line_no
        where = f"line {line_no}" + (f", column {column!r}" if column else "")
        super().__init__(f"{code} at {where}" + (f": {detail}" if detail else ""))


class LogRecord(NamedTuple):
    timestamp: datetime
    user_id: str
    ip: str
    hostname: str
    user_agent: str
    action: Action
    pub_id: str
    channel: Channel

    @property
    def year(self) -> int:
        return attribution_year(self.timestamp)


def attribution_year(ts: datetime) -> int:
    if ts.utcoffset() == ATTRIBUTION_TZ.utcoffset(None):
        return ts.year
    return ts.astimezone(ATTRIBUTION_TZ).year


@lru_cache(maxsize=1 << 16)
def _parse_ip(text: str) -> IPAddress:
    return ipaddress.ip_address(text)


def _parse_timestamp(text: str) -> datetime:
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    ts = datetime.fromisoformat(text)
    if ts.tzinfo is None:
        raise ValueError("timestamp has no UTC offset")
    return ts


def parse_log_line(line: str, line_no: int = 0) -> LogRecord:
    fields = line.rstrip("\n").rstrip("\r").split("\t")
    if len(fields) != 8:
        raise ParseError("WRONG_FIELD_COUNT", None, line_no, f"expected 8 fields, got {len(fields)}")
    ts_text, user_id, ip, hostname, user_agent, action_text, pub_id, channel_text = fields
    try:
        ts = _parse_timestamp(ts_text)
    except ValueError as exc:
        raise ParseError("BAD_TIMESTAMP", "timestamp", line_no, str(exc)) from None
    action = _ACTIONS.get(action_text)
    if action is None:
        raise ParseError("BAD_ACTION_TOKEN", "action", line_no, repr(action_text))
    if action is Action.OTHER:
        if pub_id:
            raise ParseError("UNEXPECTED_PUB_ID", "pub_id", line_no, "OTHER actions carry no publication")
    elif not pub_id:
        raise ParseError("EMPTY_PUB_ID", "pub_id", line_no)
    channel = _CHANNELS.get(channel_text)
    if channel is None:
        raise ParseError("BAD_CHANNEL_TOKEN", "channel", line_no, repr(channel_text))
    if ip:
        try:
            _parse_ip(ip)
        except ValueError:
            raise ParseError("BAD_IP", "ip", line_no, repr(ip)) from None
    return LogRecord(ts, user_id or UNIDENTIFIED, ip, hostname, user_agent, action, pub_id, channel)


def format_log_line(record: LogRecord) -> str:
    """Inverse of :func:`parse_log_line` (without the trailing newline)."""
    return "\t".join((
        record.timestamp.isoformat(),
        record.user_id,
        record.ip,
        record.hostname,
        record.user_agent,
        record.action.value,
        record.pub_id,
        record.channel.value,
    ))


def iter_log_records(lines: Iterable[str], first_line_no: int = 1) -> Iterator[LogRecord]:
    """Parse lines, skipping ``#`` comments and blank lines."""
    for line_no, line in enumerate(lines, first_line_no):
        if not line or line[0] == "#" or line == "\n":
            continue
        yield parse_log_line(line, line_no)


def read_log(path: str | Path) -> Iterator[LogRecord]:
    with open(path, encoding="utf-8", newline="\n") as fh:
        yield from iter_log_records(fh)


@dataclass(frozen=True)
class RobotPolicy:
    agent_patterns: tuple[str, ...] = ()
    ip_blocks: tuple[IPNetwork, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "agent_patterns", tuple(p.lower() for p in self.agent_patterns if p))
        object.__setattr__(
            self, "ip_blocks",
            tuple(b if not isinstance(b, str) else ipaddress.ip_network(b, strict=False) for b in self.ip_blocks),
        )

    def agent_matches(self, user_agent: str) -> bool:
        ua = user_agent.lower()
        return any(p in ua for p in self.agent_patterns)

    def ip_matches(self, ip: str) -> bool:
        if not ip or not self.ip_blocks:
            return False
        addr = _parse_ip(ip)
        return any(addr.version == b.version and addr in b for b in self.ip_blocks)

    def dump(self) -> str:
        lines = [f"agent_pattern = {p}" for p in self.agent_patterns]
        lines += [f"ip_block = {b}" for b in self.ip_blocks]
        return "".join(line + "\n" for line in lines)


class PolicyError(ValueError):
    pass


def parse_robot_policy(text: str) -> RobotPolicy:
    patterns, blocks = [], []
    for line_no, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not value:
            raise PolicyError(f"line {line_no}: expected '<key> = <value>'")
        if key == "agent_pattern":
            patterns.append(value)
        elif key == "ip_block":
            try:
                blocks.append(ipaddress.ip_network(value, strict=False))
            except ValueError:
                raise PolicyError(f"line {line_no}: bad CIDR {value!r}") from None
        else:
            raise PolicyError(f"line {line_no}: unknown key {key!r}")
    return RobotPolicy(tuple(patterns), tuple(blocks))


def load_robot_policy(path: str | Path) -> RobotPolicy:
    return parse_robot_policy(Path(path).read_text(encoding="utf-8"))


def is_robot(record: LogRecord, policy: RobotPolicy) -> bool:
    return policy.agent_matches(record.user_agent) or policy.ip_matches(record.ip)


def attribute_country(hostname: str, ip: str = "") -> str:
    """Country code for a request origin, or ``UNKNOWN``.

    Only the hostname's last label is consulted; ``ip`` is accepted because the
    hostname is derived from it upstream, but reverse lookups are not done here.
    """
    if not hostname:
        return UNKNOWN
    label = hostname.rstrip(".").rpartition(".")[2]
    return tld_to_country(label)


def is_download(record: LogRecord) -> bool:
    return record.action is Action.DOWNLOAD
