import json
from datetime import datetime, timedelta, timezone
from pathlib import Path

import pytest
from click.testing import CliRunner

from checkga.cli import main
from checkga.timeline import ScanReading, ScanStore
from checkga.verdict import Verdict

FIXTURES = Path(__file__).parent / "fixtures"
EXAMPLES = Path(__file__).parent.parent / "src" / "checkga" / "data" / "examples"


@pytest.fixture
def runner():
    return CliRunner()


def write_sites(path, entries):
    with open(path, "w") as fh:
        for site_id, url in entries:
            fh.write(json.dumps({"site_id": site_id, "url": url}) + "\n")


class TestScanCommand:
    def test_compliant_fixture_exits_zero(self, runner):
        result = runner.invoke(
            main,
            ["scan", "https://compliant.example.de/", "--fixture",
             str(FIXTURES / "compliant_single_tracker.json")],
        )
        assert result.exit_code == 0, result.output
        assert "compliant_anonymized" in result.output

    def test_noncompliant_fixture_exits_one(self, runner):
        result = runner.invoke(
            main,
            ["scan", "https://broken.example.de/", "--fixture",
             str(FIXTURES / "noncompliant_tracker.json")],
        )
        assert result.exit_code == 1
        assert "non_compliant" in result.output

    def test_json_output(self, runner):
        result = runner.invoke(
            main,
            ["scan", "https://compliant.example.de/", "--json", "--fixture",
             str(FIXTURES / "compliant_single_tracker.json")],
        )
        report = json.loads(result.output)
        assert report["verdict"] == "compliant_anonymized"

    def test_no_backend_is_usage_error(self, runner, monkeypatch):
        monkeypatch.delenv("CHECKGA_CDP_URL", raising=False)
        result = runner.invoke(main, ["scan", "https://x.de/"])
        assert result.exit_code == 2


class TestLintCommand:
    def test_misconfigured_snippet_three_findings_exit_one(self, runner):
        result = runner.invoke(main, ["lint", str(EXAMPLES / "misconfigured.js")])
        assert result.exit_code == 1
        assert result.output.count("set-before-create") == 1
        assert result.output.count("misspelled-option") == 1
        assert result.output.count("set-after-send") == 1

    def test_corrected_snippet_exit_zero(self, runner):
        result = runner.invoke(main, ["lint", str(EXAMPLES / "corrected.js")])
        assert result.exit_code == 0
        assert "no findings" in result.output

    def test_json_format(self, runner):
        result = runner.invoke(
            main, ["lint", str(EXAMPLES / "misconfigured.js"), "--format", "json"]
        )
        findings = json.loads(result.output)
        assert [f["line"] for f in findings] == [5, 7, 9]

    def test_missing_file_exit_two(self, runner):
        assert runner.invoke(main, ["lint", "/nonexistent.js"]).exit_code == 2


class TestWatchAndRescan:
    def test_watch_once_appends_readings(self, runner, fixture_dir, tmp_path):
        sites = tmp_path / "sites.ndjson"
        write_sites(
            sites,
            [("sa", "https://compliant.example.de/"), ("sb", "https://broken.example.de/")],
        )
        store = tmp_path / "scans.ndjson"
        result = runner.invoke(
            main,
            ["watch", "--sites", str(sites), "--store", str(store),
             "--fixture-dir", str(fixture_dir), "--once"],
        )
        assert result.exit_code == 0, result.output
        timelines = ScanStore(store).timelines()
        assert timelines["sa"].readings[0].verdict is Verdict.COMPLIANT_ANONYMIZED
        assert timelines["sb"].readings[0].verdict is Verdict.NON_COMPLIANT

    def test_rescan_reports_transitions(self, runner, fixture_dir, tmp_path):
        sites = tmp_path / "sites.ndjson"
        write_sites(sites, [("sa", "https://compliant.example.de/")])
        store = tmp_path / "scans.ndjson"
        scan_store = ScanStore(store)
        base = datetime(2024, 7, 1, tzinfo=timezone.utc)
        for i in range(6):
            scan_store.append(
                ScanReading("sa", base + i * timedelta(hours=6), Verdict.NON_COMPLIANT,
                            True, "compliant.example.de")
            )
        before = store.read_text()
        result = runner.invoke(
            main,
            ["rescan", "--sites", str(sites), "--store", str(store),
             "--fixture-dir", str(fixture_dir), "--json"],
        )
        assert result.exit_code == 0, result.output
        counters = json.loads(result.output)
        assert counters["newly_compliant"] == 1
        # the study store is read-only for rescan; readings go to a side store
        assert store.read_text() == before
        follow_up = ScanStore(str(store) + ".rescan.ndjson")
        assert len(list(follow_up.iter_readings())) == 1


class TestMergeAssignLifecycle:
    def owners_file(self, path):
        rows = [
            {"site_id": "s1", "url": "https://a.de/", "recipient_name": "Company",
             "street": "Weg 1", "zip": "64289", "city": "DA",
             "labels": ["company", "company", "company"]},
            {"site_id": "s2", "url": "https://b.de/", "recipient_name": "Company LLC",
             "street": "Weg 1", "zip": "64289", "city": "DA",
             "labels": ["company", "company", "individual"]},
            {"site_id": "s3", "url": "https://c.de/", "recipient_name": "Someone Else",
             "street": "Pfad 2", "zip": "10115", "city": "B", "email": "x@c.de",
             "labels": ["individual", "individual", "individual"]},
        ]
        with open(path, "w") as fh:
            for row in rows:
                fh.write(json.dumps(row) + "\n")

    def test_merge_then_assign(self, runner, tmp_path):
        owners = tmp_path / "owners.ndjson"
        self.owners_file(owners)
        groups_out = tmp_path / "groups.json"
        result = runner.invoke(main, ["merge", "--owners", str(owners), "--out", str(groups_out)])
        assert result.exit_code == 0, result.output
        groups = json.loads(groups_out.read_text())["groups"]
        assert len(groups) == 2  # s1+s2 merged, s3 separate

        csv_out = tmp_path / "assignments.csv"
        result = runner.invoke(
            main,
            ["assign", "--groups", str(groups_out), "--seed", "7",
             "--weights", "1,2,4", "--out", str(csv_out)],
        )
        assert result.exit_code == 0, result.output
        lines = csv_out.read_text().strip().splitlines()
        assert lines[0] == "group_id,site_ids,medium,sender,framing"
        assert len(lines) == 3

    def test_lifecycle_on_store(self, runner, tmp_path, fixture_dir):
        owners = tmp_path / "owners.ndjson"
        self.owners_file(owners)
        groups_out = tmp_path / "groups.json"
        runner.invoke(main, ["merge", "--owners", str(owners), "--out", str(groups_out)])
        csv_out = tmp_path / "assignments.csv"
        runner.invoke(
            main, ["assign", "--groups", str(groups_out), "--out", str(csv_out)]
        )
        store = tmp_path / "scans.ndjson"
        scan_store = ScanStore(store)
        base = datetime(2024, 7, 1, tzinfo=timezone.utc)
        for site in ("s1", "s2", "s3"):
            for i in range(6):
                scan_store.append(
                    ScanReading(site, base + i * timedelta(hours=6),
                                Verdict.NON_COMPLIANT, True, "x.de")
                )
        events = tmp_path / "events.ndjson"
        result = runner.invoke(
            main,
            ["lifecycle", "--assignments", str(csv_out), "--store", str(store),
             "--date", "2024-07-01", "--notification-date", "2024-07-01",
             "--events", str(events), "--record"],
        )
        assert result.exit_code == 0, result.output
        assert "notification" in result.output
        assert events.exists()


class TestAnalyzeCommand:
    def build_store(self, store_path, remediation_days):
        """Sites remediate after the given day offsets (None = censored)."""
        scan_store = ScanStore(store_path)
        receipt = datetime(2024, 7, 1, tzinfo=timezone.utc)
        end = receipt + timedelta(days=60)
        for site_id, day in remediation_days.items():
            t = receipt
            while t <= end:
                if day is not None and (t - receipt).total_seconds() / 86400.0 >= day:
                    verdict = Verdict.COMPLIANT_ANONYMIZED
                else:
                    verdict = Verdict.NON_COMPLIANT
                scan_store.append(
                    ScanReading(site_id, t, verdict, True, f"{site_id}.de")
                )
                t += timedelta(hours=6)

    def assignments_csv(self, path, cells):
        lines = ["group_id,site_ids,medium,sender,framing"]
        for i, (site_id, cell) in enumerate(cells.items()):
            lines.append(f"g{i},{site_id},{cell}")
        Path(path).write_text("\n".join(lines) + "\n")

    def test_survival_table_and_comparisons(self, runner, tmp_path):
        store = tmp_path / "scans.ndjson"
        self.build_store(
            store,
            {"e1": 5, "e2": None, "e3": 10, "e4": None,
             "l1": 3, "l2": 4, "l3": None, "l4": 6,
             "c1": None, "c2": None},
        )
        csv_path = tmp_path / "assign.csv"
        self.assignments_csv(
            csv_path,
            {"e1": "email,cs_group,gdpr", "e2": "email,cs_group,gdpr",
             "e3": "email,cs_group,privacy", "e4": "email,cs_group,privacy",
             "l1": "letter,cs_group,gdpr", "l2": "letter,cs_group,gdpr",
             "l3": "letter,cs_group,privacy", "l4": "letter,cs_group,privacy",
             "c1": "control,control,control", "c2": "control,control,control"},
        )
        out_dir = tmp_path / "curves"
        result = runner.invoke(
            main,
            ["analyze", "--store", str(store), "--assignments", str(csv_path),
             "--receipt", "2024-07-01", "--at-days", "35", "--json",
             "--out-dir", str(out_dir)],
        )
        assert result.exit_code == 0, result.output
        data = json.loads(result.output)
        by_level = {row["level"]: row for row in data["survival"]}
        assert by_level["all_notified"]["survival"] == pytest.approx(3 / 8, abs=1e-9)
        assert by_level["control"]["survival"] == 1.0
        assert by_level["medium:email"]["survival"] == pytest.approx(0.5, abs=1e-9)
        assert by_level["medium:letter"]["survival"] == pytest.approx(0.25, abs=1e-9)
        assert (out_dir / "curve_all_notified.csv").exists()
        assert any(c["a"] == "medium:email" for c in data["comparisons"])

    def test_churn_exclusion_applies(self, runner, tmp_path):
        store = tmp_path / "scans.ndjson"
        scan_store = ScanStore(store)
        receipt = datetime(2024, 7, 1, tzinfo=timezone.utc)
        # churning site redirects to three distinct domains
        for i, domain in enumerate(["a.de", "b.de", "c.de", "a.de", "b.de", "c.de"]):
            scan_store.append(
                ScanReading("churn", receipt + i * timedelta(hours=6),
                            Verdict.NON_COMPLIANT, True, domain)
            )
        for i in range(6):
            scan_store.append(
                ScanReading("steady", receipt + i * timedelta(hours=6),
                            Verdict.NON_COMPLIANT, True, "steady.de")
            )
        csv_path = tmp_path / "assign.csv"
        self.assignments_csv(
            csv_path,
            {"churn": "email,cs_group,gdpr", "steady": "email,cs_group,gdpr"},
        )
        result = runner.invoke(
            main,
            ["analyze", "--store", str(store), "--assignments", str(csv_path),
             "--receipt", "2024-07-01", "--at-days", "1", "--json"],
        )
        assert result.exit_code == 0, result.output
        data = json.loads(result.output)
        by_level = {row["level"]: row for row in data["survival"]}
        assert by_level["all_notified"]["n_subjects"] == 1
