"""Longitudinal scan timelines: smoothing, remediation events, exclusions.

Sites are scanned several times a day; single readings are noisy (transient
errors, flaky deployments). A site only changes smoothed state once c
consecutive readings agree. Offline readings are skipped while counting a
compliant run — they neither reset nor extend it — but c consecutive offline
readings move the site to the offline state. The state transition is dated
at the first reading of the qualifying run, so the reported remediation time
is the earliest evidence.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from datetime import datetime, timedelta
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator

from .domains import registrable_domain
from .verdict import Verdict


@dataclass(frozen=True)
class ScanReading:
    site_id: str
    timestamp: datetime
    verdict: Verdict
    ga_present: bool
    redirect_target_domain: str

    def to_json(self) -> dict:
        return {
            "site_id": self.site_id,
            "ts": self.timestamp.isoformat(),
            "verdict": self.verdict.value,
            "ga_present": self.ga_present,
            "redirect_domain": self.redirect_target_domain,
        }

    @classmethod
    def from_json(cls, data: dict) -> "ScanReading":
        return cls(
            site_id=data["site_id"],
            timestamp=datetime.fromisoformat(data["ts"]),
            verdict=Verdict(data["verdict"]),
            ga_present=bool(data["ga_present"]),
            redirect_target_domain=data.get("redirect_domain", ""),
        )


@dataclass(frozen=True)
class SmoothingConfig:
    c: int = 5

    def __post_init__(self) -> None:
        if self.c < 1:
            raise ValueError("consecutive-reading threshold must be >= 1")


class SmoothedState(Enum):
    NON_COMPLIANT = "non_compliant"
    COMPLIANT = "compliant"
    OFFLINE = "offline"


class RemediationMode(Enum):
    REPAIRED = "repaired"
    REMOVED = "removed"
    WENT_OFFLINE = "went_offline"


@dataclass(frozen=True)
class RemediationEvent:
    site_id: str
    event_time: datetime
    mode: RemediationMode
    duration_days: float

    def __post_init__(self) -> None:
        if self.duration_days < 0:
            raise ValueError("duration must be nonnegative")


@dataclass(frozen=True)
class SiteTimeline:
    site_id: str
    readings: tuple[ScanReading, ...]

    def __post_init__(self) -> None:
        for a, b in zip(self.readings, self.readings[1:]):
            if a.timestamp >= b.timestamp:
                raise ValueError(f"readings for {self.site_id} are not strictly time-ordered")

    def state_transitions(self, config: SmoothingConfig) -> list[tuple[datetime, SmoothedState]]:
        return smooth(self, config)


def _category(verdict: Verdict) -> SmoothedState:
    if verdict is Verdict.OFFLINE:
        return SmoothedState.OFFLINE
    if verdict in (Verdict.COMPLIANT_NO_GA, Verdict.COMPLIANT_ANONYMIZED):
        return SmoothedState.COMPLIANT
    return SmoothedState.NON_COMPLIANT


def smooth(timeline: SiteTimeline, config: SmoothingConfig) -> list[tuple[datetime, SmoothedState]]:
    """State transitions derived from the readings. Sites start in the
    non-compliant state (they enter the dataset as such)."""
    c = config.c
    state = SmoothedState.NON_COMPLIANT
    transitions: list[tuple[datetime, SmoothedState]] = []

    comp_start: datetime | None = None
    comp_count = 0
    nonc_start: datetime | None = None
    nonc_count = 0
    off_start: datetime | None = None
    off_count = 0

    for reading in timeline.readings:
        cat = _category(reading.verdict)
        if cat is SmoothedState.OFFLINE:
            off_count += 1
            if off_start is None:
                off_start = reading.timestamp
            # compliant / non-compliant runs are neither reset nor extended
        else:
            off_count = 0
            off_start = None
            if cat is SmoothedState.COMPLIANT:
                comp_count += 1
                if comp_start is None:
                    comp_start = reading.timestamp
                nonc_count = 0
                nonc_start = None
            else:
                nonc_count += 1
                if nonc_start is None:
                    nonc_start = reading.timestamp
                comp_count = 0
                comp_start = None

        if off_count >= c and state is not SmoothedState.OFFLINE:
            transitions.append((off_start, SmoothedState.OFFLINE))
            state = SmoothedState.OFFLINE
            # the site vanished; any run in progress must restart afterwards
            comp_count = nonc_count = 0
            comp_start = nonc_start = None
        elif comp_count >= c and state is not SmoothedState.COMPLIANT:
            transitions.append((comp_start, SmoothedState.COMPLIANT))
            state = SmoothedState.COMPLIANT
        elif nonc_count >= c and state is not SmoothedState.NON_COMPLIANT:
            transitions.append((nonc_start, SmoothedState.NON_COMPLIANT))
            state = SmoothedState.NON_COMPLIANT

    return transitions


def state_at(
    timeline: SiteTimeline, config: SmoothingConfig, when: datetime
) -> SmoothedState:
    state = SmoothedState.NON_COMPLIANT
    for ts, s in smooth(timeline, config):
        if ts <= when:
            state = s
        else:
            break
    return state


def remediation_event(
    timeline: SiteTimeline, config: SmoothingConfig, notification_receipt: datetime
) -> RemediationEvent | None:
    """First compliant or offline transition at or after receipt; None when
    the subject is right-censored (no qualifying transition)."""
    for ts, state in smooth(timeline, config):
        if ts < notification_receipt:
            continue
        if state is SmoothedState.OFFLINE:
            mode = RemediationMode.WENT_OFFLINE
        elif state is SmoothedState.COMPLIANT:
            mode = _compliant_mode(timeline, config, ts)
        else:
            continue
        duration = (ts - notification_receipt).total_seconds() / 86400.0
        return RemediationEvent(
            site_id=timeline.site_id, event_time=ts, mode=mode, duration_days=duration
        )
    return None


def _compliant_mode(
    timeline: SiteTimeline, config: SmoothingConfig, run_start: datetime
) -> RemediationMode:
    """Repaired when the qualifying run still shows GA (anonymized),
    removed when GA is gone entirely."""
    seen = 0
    for reading in timeline.readings:
        if reading.timestamp < run_start:
            continue
        cat = _category(reading.verdict)
        if cat is SmoothedState.COMPLIANT:
            if reading.ga_present:
                return RemediationMode.REPAIRED
            seen += 1
            if seen >= config.c:
                break
        elif cat is SmoothedState.NON_COMPLIANT:
            break
    return RemediationMode.REMOVED


def redirect_churn_filter(
    timelines: Iterable[SiteTimeline],
    threshold: int = 3,
    window: tuple[datetime, datetime] | None = None,
) -> tuple[list[str], list[str]]:
    """Split site ids into (kept, excluded): a site whose readings point at
    ``threshold`` or more distinct registrable domains is excluded."""
    kept: list[str] = []
    excluded: list[str] = []
    for timeline in timelines:
        domains = set()
        for reading in timeline.readings:
            if window is not None and not (window[0] <= reading.timestamp <= window[1]):
                continue
            if reading.redirect_target_domain:
                domains.add(registrable_domain(reading.redirect_target_domain))
        (excluded if len(domains) >= threshold else kept).append(timeline.site_id)
    return kept, excluded


def schedule_scans(
    site_ids: list[str],
    per_day: int,
    jitter: timedelta = timedelta(minutes=15),
    seed: int = 0,
    day_start: datetime | None = None,
) -> list[tuple[datetime, str]]:
    """One day's scan plan: per_day evenly spaced slots per site with bounded
    jitter. Deterministic given the seed."""
    if per_day < 1:
        raise ValueError("per_day must be >= 1")
    if day_start is None:
        raise ValueError("day_start is required")
    spacing = timedelta(days=1) / per_day
    if jitter < timedelta(0) or jitter * 2 >= spacing:
        raise ValueError("jitter must be nonnegative and below half the slot spacing")
    rng = random.Random(seed)
    plan: list[tuple[datetime, str]] = []
    for slot in range(per_day):
        base = day_start + slot * spacing
        for site_id in site_ids:
            offset = timedelta(seconds=rng.uniform(-jitter.total_seconds(), jitter.total_seconds()))
            plan.append((base + offset, site_id))
    plan.sort(key=lambda item: (item[0], item[1]))
    return plan


class ScanStore:
    """Append-only newline-delimited JSON store of scan readings.

    Single writer per deployment (`watch`); readers tolerate interleaved
    sites and sort per site on load.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)

    def append(self, reading: ScanReading) -> None:
        with self.path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(reading.to_json(), sort_keys=True) + "\n")

    def iter_readings(self) -> Iterator[ScanReading]:
        if not self.path.exists():
            return
        with self.path.open(encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    yield ScanReading.from_json(json.loads(line))

    def timelines(self) -> dict[str, SiteTimeline]:
        grouped: dict[str, list[ScanReading]] = {}
        for reading in self.iter_readings():
            grouped.setdefault(reading.site_id, []).append(reading)
        return {
            site_id: SiteTimeline(
                site_id=site_id,
                readings=tuple(sorted(readings, key=lambda r: r.timestamp)),
            )
            for site_id, readings in grouped.items()
        }
