"""Parsing and classification of Google Analytics collection requests.

A "hit" is one HTTP request to a GA collection endpoint. The privacy-relevant
signal is the ``aip`` query parameter: the request instructs Google to
truncate the visitor's IP address if and only if it carries ``aip=1``.
Truncation semantics: IPv4 drops the last octet, IPv6 the last 80 bits.
"""

from __future__ import annotations

import ipaddress
import re
from dataclasses import dataclass
from enum import Enum
from urllib.parse import parse_qsl, quote, urlsplit


class MalformedUrlError(ValueError):
    """The input is not a syntactically valid absolute URL.

    Distinct from "valid URL that is not a GA hit", which parse_hit_url
    signals by returning None.
    """


class AipStatus(Enum):
    ENABLED = "enabled"
    ABSENT = "absent"
    PRESENT_OTHER = "other"


class HitClassification(Enum):
    ANONYMIZED = "anonymized"
    NOT_ANONYMIZED = "not_anonymized"


#: Hosts that receive GA collection traffic. The legacy ``__utm.gif`` path
#: lives on the same hosts; GA4 regional collectors match via pattern.
DEFAULT_ENDPOINT_HOSTS = frozenset(
    {
        "www.google-analytics.com",
        "google-analytics.com",
        "ssl.google-analytics.com",
        "analytics.google.com",
    }
)

DEFAULT_ENDPOINT_HOST_PATTERNS = (re.compile(r"^region\d+\.google-analytics\.com$"),)

DEFAULT_COLLECT_PATHS = frozenset(
    {
        "/collect",
        "/r/collect",
        "/j/collect",
        "/g/collect",
        "/batch",
        "/__utm.gif",
    }
)


@dataclass(frozen=True)
class EndpointConfig:
    """Which (host, path) pairs count as GA collection endpoints."""

    hosts: frozenset[str] = DEFAULT_ENDPOINT_HOSTS
    host_patterns: tuple[re.Pattern[str], ...] = DEFAULT_ENDPOINT_HOST_PATTERNS
    paths: frozenset[str] = DEFAULT_COLLECT_PATHS

    def matches_host(self, host: str) -> bool:
        host = host.lower().rstrip(".")
        if host in self.hosts:
            return True
        return any(p.match(host) for p in self.host_patterns)

    def matches_path(self, path: str) -> bool:
        return path in self.paths


DEFAULT_ENDPOINTS = EndpointConfig()


def aip_status_of(params: tuple[tuple[str, str], ...]) -> AipStatus:
    """Aip status of an ordered parameter multimap.

    Conflicting duplicates (both ``aip=1`` and another value) classify as
    PRESENT_OTHER so that downstream classification stays conservative.
    """
    values = [v for k, v in params if k == "aip"]
    if not values:
        return AipStatus.ABSENT
    if all(v == "1" for v in values):
        return AipStatus.ENABLED
    return AipStatus.PRESENT_OTHER


@dataclass(frozen=True)
class GaHit:
    """One parsed request to a GA collection endpoint."""

    raw_url: str
    endpoint_host: str
    path: str
    params: tuple[tuple[str, str], ...]
    tracking_id: str | None
    hit_type: str | None
    aip_status: AipStatus

    @classmethod
    def from_parts(
        cls, host: str, path: str, params: tuple[tuple[str, str], ...], raw_url: str | None = None
    ) -> "GaHit":
        lookup = {k: v for k, v in reversed(params)}  # first occurrence wins
        return cls(
            raw_url=raw_url if raw_url is not None else serialize_hit_url(host, path, params),
            endpoint_host=host,
            path=path,
            params=params,
            tracking_id=lookup.get("tid"),
            hit_type=lookup.get("t"),
            aip_status=aip_status_of(params),
        )

    def serialize(self) -> str:
        """Canonical URL re-built from endpoint_host, path and params."""
        return serialize_hit_url(self.endpoint_host, self.path, self.params)

    def to_json(self) -> dict:
        return {
            "raw_url": self.raw_url,
            "tracking_id": self.tracking_id,
            "hit_type": self.hit_type,
            "aip": self.aip_status.value,
            "params": [[k, v] for k, v in self.params],
        }

    @classmethod
    def from_json(cls, data: dict) -> "GaHit":
        parts = urlsplit(data["raw_url"])
        params = tuple((k, v) for k, v in data["params"])
        return cls(
            raw_url=data["raw_url"],
            endpoint_host=(parts.hostname or "").lower(),
            path=parts.path,
            params=params,
            tracking_id=data.get("tracking_id"),
            hit_type=data.get("hit_type"),
            aip_status=AipStatus(data["aip"]),
        )


def serialize_hit_url(host: str, path: str, params: tuple[tuple[str, str], ...]) -> str:
    query = "&".join(f"{quote(k, safe='')}={quote(v, safe='')}" for k, v in params)
    url = f"https://{host}{path}"
    return f"{url}?{query}" if query else url


def parse_hit_url(url: str, endpoints: EndpointConfig = DEFAULT_ENDPOINTS) -> GaHit | None:
    """Parse ``url`` into a GaHit, or None when it is not a GA collection hit.

    Raises MalformedUrlError for inputs that are not absolute URLs at all.
    Query parameters are percent-decoded with duplicate keys kept in order.
    """
    try:
        parts = urlsplit(url)
        host = parts.hostname
    except ValueError as exc:
        raise MalformedUrlError(str(exc)) from exc
    if not parts.scheme or not parts.netloc or not host:
        raise MalformedUrlError(f"not an absolute URL: {url!r}")
    if parts.scheme not in ("http", "https"):
        return None
    if not endpoints.matches_host(host) or not endpoints.matches_path(parts.path):
        return None
    params = tuple(parse_qsl(parts.query, keep_blank_values=True))
    return GaHit.from_parts(host.lower(), parts.path, params, raw_url=url)


def parse_batch_hits(
    url: str, body: str, endpoints: EndpointConfig = DEFAULT_ENDPOINTS
) -> list[GaHit]:
    """Parse a ``/batch`` request body: one hit per non-blank payload line."""
    try:
        parts = urlsplit(url)
        host = parts.hostname
    except ValueError as exc:
        raise MalformedUrlError(str(exc)) from exc
    if not host or not endpoints.matches_host(host) or not endpoints.matches_path(parts.path):
        return []
    hits = []
    for line in body.splitlines():
        line = line.strip()
        if not line:
            continue
        params = tuple(parse_qsl(line, keep_blank_values=True))
        hits.append(GaHit.from_parts(host.lower(), parts.path, params))
    return hits


def classify_aip(hit: GaHit) -> HitClassification:
    """Strict existence check: anonymized only when the hit carries aip=1."""
    if hit.aip_status is AipStatus.ENABLED:
        return HitClassification.ANONYMIZED
    return HitClassification.NOT_ANONYMIZED


class IpFamily(Enum):
    V4 = "v4"
    V6 = "v6"


_V4_KEEP = 3  # keep 24 bits, zero the last octet
_V6_KEEP = 6  # keep 48 bits, zero the last 80


@dataclass(frozen=True)
class TruncatedIp:
    """An address with its host-identifying suffix zeroed."""

    original_family: IpFamily
    truncated_bytes: bytes

    def __post_init__(self) -> None:
        expected = 4 if self.original_family is IpFamily.V4 else 16
        if len(self.truncated_bytes) != expected:
            raise ValueError(f"expected {expected} bytes, got {len(self.truncated_bytes)}")
        keep = _V4_KEEP if self.original_family is IpFamily.V4 else _V6_KEEP
        if any(self.truncated_bytes[keep:]):
            raise ValueError("truncated suffix is not zero")

    @property
    def address(self) -> ipaddress.IPv4Address | ipaddress.IPv6Address:
        return ipaddress.ip_address(self.truncated_bytes)

    def __str__(self) -> str:
        return str(self.address)


def truncate_ip(address: str | ipaddress.IPv4Address | ipaddress.IPv6Address) -> TruncatedIp:
    """Zero the last octet (IPv4) or the last 80 bits (IPv6). Idempotent."""
    addr = ipaddress.ip_address(address)
    raw = addr.packed
    if addr.version == 4:
        return TruncatedIp(IpFamily.V4, raw[:_V4_KEEP] + b"\x00" * (4 - _V4_KEEP))
    return TruncatedIp(IpFamily.V6, raw[:_V6_KEEP] + b"\x00" * (16 - _V6_KEEP))
