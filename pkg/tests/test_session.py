from pathlib import Path

import pytest

from checkga.hits import parse_hit_url
from checkga.session import (
    FixtureBackend,
    PageTrace,
    ScrollPlan,
    SessionConfig,
    TraceStatus,
    capture,
    load_fixture,
    record_fixture,
    trace_from_json,
    trace_to_json,
)

from conftest import compliant_trace, noncompliant_trace, offline_trace_fixture

FIXTURES = Path(__file__).parent / "fixtures"


class TestFixtureBackend:
    def test_compliant_fixture_passthrough(self):
        backend = FixtureBackend(FIXTURES / "compliant_single_tracker.json")
        trace = capture("https://compliant.example.de/", SessionConfig(), backend)
        assert trace.status is TraceStatus.LOADED
        assert len(trace.ga_requests) == 1
        hit = parse_hit_url(trace.ga_requests[0].url)
        assert hit is not None and hit.aip_status.value == "enabled"
        assert len(trace.snapshots) == 1

    def test_offline_fixture(self):
        backend = FixtureBackend(FIXTURES / "offline.json")
        trace = capture("https://gone.example.de/", SessionConfig(), backend)
        assert trace.status is TraceStatus.UNREACHABLE
        assert trace.ga_requests == ()

    def test_directory_lookup_by_host(self, fixture_dir):
        backend = FixtureBackend(fixture_dir)
        trace = capture("https://broken.example.de/path?x=1", SessionConfig(), backend)
        assert trace.requested_url == "https://broken.example.de/"

    def test_www_prefix_falls_back(self, fixture_dir):
        backend = FixtureBackend(fixture_dir)
        trace = capture("https://www.clean.example.de/", SessionConfig(), backend)
        assert trace.status is TraceStatus.LOADED

    def test_unknown_host_is_unreachable(self, fixture_dir):
        backend = FixtureBackend(fixture_dir)
        trace = capture("https://nowhere.example.org/", SessionConfig(), backend)
        assert trace.status is TraceStatus.UNREACHABLE

    def test_deterministic_across_repeated_captures(self, fixture_dir):
        backend = FixtureBackend(fixture_dir)
        first = capture("https://compliant.example.de/", SessionConfig(), backend)
        second = capture("https://compliant.example.de/", SessionConfig(), backend)
        assert first == second

    def test_relative_url_rejected(self, fixture_dir):
        with pytest.raises(ValueError):
            capture("not-a-url", SessionConfig(), FixtureBackend(fixture_dir))


class TestFixtureRoundTrip:
    @pytest.mark.parametrize(
        "trace",
        [compliant_trace(), noncompliant_trace(), offline_trace_fixture()],
        ids=["compliant", "noncompliant", "offline"],
    )
    def test_record_then_load_is_identity(self, trace, tmp_path):
        path = tmp_path / "trace.json"
        record_fixture(trace, path)
        assert load_fixture(path) == trace

    def test_json_round_trip(self):
        trace = compliant_trace()
        assert trace_from_json(trace_to_json(trace)) == trace

    def test_every_ga_request_parses_as_a_hit(self):
        for trace in (compliant_trace(), noncompliant_trace()):
            for request in trace.ga_requests:
                assert parse_hit_url(request.url) is not None


class TestValidation:
    def test_loaded_trace_needs_final_url(self):
        with pytest.raises(ValueError):
            PageTrace(
                requested_url="https://a.de/",
                final_url="",
                redirect_chain=("https://a.de/",),
                status=TraceStatus.LOADED,
                ga_requests=(),
                snapshots=(),
                captured_at=compliant_trace().captured_at,
            )

    def test_redirect_chain_must_start_at_request(self):
        with pytest.raises(ValueError):
            PageTrace(
                requested_url="https://a.de/",
                final_url="https://b.de/",
                redirect_chain=("https://b.de/",),
                status=TraceStatus.LOADED,
                ga_requests=(),
                snapshots=(),
                captured_at=compliant_trace().captured_at,
            )

    def test_scroll_plan_requires_dwell_covering_one_interval(self):
        with pytest.raises(ValueError):
            ScrollPlan(dwell_ms=100, min_interval_ms=500)

    def test_timeout_positive(self):
        with pytest.raises(ValueError):
            SessionConfig(navigation_timeout_ms=0)
