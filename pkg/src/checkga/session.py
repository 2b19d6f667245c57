"""Page capture: produce a PageTrace for a URL.

Two backends share one contract. The live backend drives an instrumented
browser over the DevTools protocol (see :mod:`checkga.cdp`); the fixture
backend replays stored trace files verbatim and is bit-deterministic, which
is what the test suite and the fixture-backed service deployment use.

Unreachable and timed-out pages are valid traces, not exceptions: downstream
code treats them as offline readings.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Protocol
from urllib.parse import urlsplit

from .trackers import GlobalSnapshot, snapshot_from_json, snapshot_to_json

DEFAULT_USER_AGENT = (
    "Mozilla/5.0 (Windows NT 10.0; Win64; x64) AppleWebKit/537.36 "
    "(KHTML, like Gecko) Chrome/124.0.0.0 Safari/537.36"
)


@dataclass(frozen=True)
class ScrollPlan:
    """Randomized scrolling: amount per step, step interval, total dwell."""

    min_amount_px: int = 100
    max_amount_px: int = 800
    min_interval_ms: int = 500
    max_interval_ms: int = 2000
    dwell_ms: int = 10_000

    def __post_init__(self) -> None:
        if self.dwell_ms < self.min_interval_ms:
            raise ValueError("dwell must cover at least one scroll interval")
        if self.min_amount_px > self.max_amount_px or self.min_interval_ms > self.max_interval_ms:
            raise ValueError("scroll bounds inverted")


@dataclass(frozen=True)
class SessionConfig:
    user_agent_override: str = DEFAULT_USER_AGENT
    scroll: ScrollPlan = field(default_factory=ScrollPlan)
    navigation_timeout_ms: int = 30_000
    capture_request_bodies: bool = True
    scroll_seed: int | None = None  # tests pin this; live captures derive from captured_at

    def __post_init__(self) -> None:
        if self.navigation_timeout_ms <= 0:
            raise ValueError("navigation timeout must be positive")


class TraceStatus(Enum):
    LOADED = "loaded"
    UNREACHABLE = "unreachable"
    TIMEOUT = "timeout"


@dataclass(frozen=True)
class GaRequest:
    ts: datetime
    url: str
    body: str | None = None


@dataclass(frozen=True)
class PageTrace:
    requested_url: str
    final_url: str
    redirect_chain: tuple[str, ...]
    status: TraceStatus
    ga_requests: tuple[GaRequest, ...]
    snapshots: tuple[GlobalSnapshot, ...]
    captured_at: datetime

    def __post_init__(self) -> None:
        if self.status is TraceStatus.LOADED and not self.final_url:
            raise ValueError("loaded trace must carry a final URL")
        if self.redirect_chain and self.redirect_chain[0] != self.requested_url:
            raise ValueError("redirect chain must start at the requested URL")


class SessionBackend(Protocol):
    def capture(self, url: str, config: SessionConfig) -> PageTrace: ...


def capture(url: str, config: SessionConfig, backend: SessionBackend) -> PageTrace:
    if not urlsplit(url).scheme:
        raise ValueError(f"URL must be absolute: {url!r}")
    return backend.capture(url, config)


def offline_trace(url: str, status: TraceStatus = TraceStatus.UNREACHABLE) -> PageTrace:
    return PageTrace(
        requested_url=url,
        final_url="",
        redirect_chain=(url,),
        status=status,
        ga_requests=(),
        snapshots=(),
        captured_at=datetime.now(timezone.utc),
    )


class FixtureBackend:
    """Deterministic backend replaying stored trace files.

    Construct with a single trace file (returned for every URL) or with a
    directory; directory lookup is by hostname slug (``<host>.json``, dots
    kept, optional ``www.`` stripped). URLs without a fixture produce an
    unreachable trace so that a fixture-backed service stays total.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)

    def capture(self, url: str, config: SessionConfig) -> PageTrace:
        del config  # replay is verbatim
        if self.path.is_dir():
            candidate = self._resolve(url)
            if candidate is None:
                return offline_trace(url)
            return load_fixture(candidate)
        return load_fixture(self.path)

    def _resolve(self, url: str) -> Path | None:
        host = (urlsplit(url).hostname or "").lower()
        for name in (host, host.removeprefix("www.")):
            if not name:
                continue
            candidate = self.path / f"{name}.json"
            if candidate.exists():
                return candidate
        return None


def trace_to_json(trace: PageTrace) -> dict:
    return {
        "requested_url": trace.requested_url,
        "final_url": trace.final_url,
        "redirect_chain": list(trace.redirect_chain),
        "status": trace.status.value,
        "ga_requests": [
            {"ts": r.ts.isoformat(), "url": r.url, **({"body": r.body} if r.body else {})}
            for r in trace.ga_requests
        ],
        "snapshots": [snapshot_to_json(s) for s in trace.snapshots],
        "captured_at": trace.captured_at.isoformat(),
    }


def trace_from_json(data: dict) -> PageTrace:
    return PageTrace(
        requested_url=data["requested_url"],
        final_url=data["final_url"],
        redirect_chain=tuple(data["redirect_chain"]),
        status=TraceStatus(data["status"]),
        ga_requests=tuple(
            GaRequest(
                ts=datetime.fromisoformat(r["ts"]),
                url=r["url"],
                body=r.get("body"),
            )
            for r in data["ga_requests"]
        ),
        snapshots=tuple(snapshot_from_json(s) for s in data["snapshots"]),
        captured_at=datetime.fromisoformat(data["captured_at"]),
    )


def record_fixture(trace: PageTrace, path: str | Path) -> None:
    """Write a trace as a fixture file; lossless against load_fixture."""
    Path(path).write_text(json.dumps(trace_to_json(trace), indent=2, sort_keys=True))


def load_fixture(path: str | Path) -> PageTrace:
    return trace_from_json(json.loads(Path(path).read_text()))
