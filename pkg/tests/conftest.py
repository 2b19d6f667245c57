"""Shared trace builders for the test suite."""

from datetime import datetime, timezone

import pytest

from checkga.session import GaRequest, PageTrace, TraceStatus
from checkga.trackers import GlobalSnapshot, ValueKind, ValueShape

CAPTURED_AT = datetime(2024, 5, 6, 12, 0, 0, tzinfo=timezone.utc)


def ga_snapshot(trackers, context_id="main"):
    """Snapshot with one analytics.js command queue holding ``trackers``
    (list of config dicts)."""
    items = {
        str(i): ValueShape(
            kind=ValueKind.OBJECT,
            attribute_names=frozenset(cfg),
            attributes={k: ValueShape(kind=ValueKind.PRIMITIVE, value=v) for k, v in cfg.items()},
        )
        for i, cfg in enumerate(trackers)
    }
    ga = ValueShape(
        kind=ValueKind.FUNCTION,
        method_names=frozenset({"getAll", "create", "remove"}),
        attribute_names=frozenset({"q", "l", "trackers"}),
        attributes={
            "q": ValueShape(kind=ValueKind.ARRAY),
            "l": ValueShape(kind=ValueKind.PRIMITIVE, value=1),
            "trackers": ValueShape(
                kind=ValueKind.ARRAY, attribute_names=frozenset(items), attributes=items
            ),
        },
    )
    return GlobalSnapshot(context_id=context_id, globals={"ga": ga})


def hit_url(tid="UA-12345-6", aip=None, host="www.google-analytics.com"):
    url = f"https://{host}/collect?v=1&t=pageview&tid={tid}"
    if aip is not None:
        url += f"&aip={aip}"
    return url


def make_trace(url, requests=(), snapshots=(), status=TraceStatus.LOADED, final_url=None):
    return PageTrace(
        requested_url=url,
        final_url=(url if final_url is None else final_url) if status is TraceStatus.LOADED else "",
        redirect_chain=(url,) if final_url in (None, url) else (url, final_url),
        status=status,
        ga_requests=tuple(
            GaRequest(ts=CAPTURED_AT, url=u) if isinstance(u, str) else u for u in requests
        ),
        snapshots=tuple(snapshots),
        captured_at=CAPTURED_AT,
    )


def compliant_trace(url="https://compliant.example.de/"):
    return make_trace(
        url,
        requests=[hit_url(aip="1")],
        snapshots=[ga_snapshot([{"trackingId": "UA-12345-6", "anonymizeIp": True, "name": "t0"}])],
    )


def noncompliant_trace(url="https://broken.example.de/"):
    return make_trace(
        url,
        requests=[hit_url()],
        snapshots=[ga_snapshot([{"trackingId": "UA-12345-6", "name": "t0"}])],
    )


def no_ga_trace(url="https://clean.example.de/"):
    return make_trace(url)


def offline_trace_fixture(url="https://gone.example.de/"):
    return make_trace(url, status=TraceStatus.UNREACHABLE)


@pytest.fixture
def fixture_dir(tmp_path):
    """Directory of host-keyed trace fixtures for the FixtureBackend."""
    from checkga.session import record_fixture

    record_fixture(compliant_trace(), tmp_path / "compliant.example.de.json")
    record_fixture(noncompliant_trace(), tmp_path / "broken.example.de.json")
    record_fixture(no_ga_trace(), tmp_path / "clean.example.de.json")
    record_fixture(offline_trace_fixture(), tmp_path / "gone.example.de.json")
    return tmp_path
