"""Operator command line.

Exit codes across all commands: 0 success, 1 findings or non-compliance,
2 usage or I/O errors.
"""

from __future__ import annotations

import itertools
import json
import sys
import time as time_module
from datetime import date, datetime, timedelta, timezone
from pathlib import Path

import click

from . import campaign as camp
from . import survival as surv
from .lint import lint_source
from .session import FixtureBackend, SessionConfig, capture
from .timeline import (
    RemediationMode,
    ScanReading,
    ScanStore,
    SiteTimeline,
    SmoothedState,
    SmoothingConfig,
    redirect_churn_filter,
    remediation_event,
    schedule_scans,
    state_at,
)
from .verdict import Verdict, assess


def _fail(message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(2)


def _load_config(ctx: click.Context, param, value):
    if not value:
        return None
    try:
        data = json.loads(Path(value).read_text())
    except (OSError, ValueError) as exc:
        raise click.UsageError(f"cannot read config file: {exc}")
    ctx.default_map = ctx.default_map or {}
    for command, options in data.items():
        ctx.default_map.setdefault(command, {}).update(options)
    return value


@click.group()
@click.option(
    "--config",
    type=click.Path(),
    callback=_load_config,
    expose_value=False,
    is_eager=True,
    help="JSON file with per-command option defaults.",
)
def main() -> None:
    """Compliance scanning, campaign management and survival analysis for
    the GA IP-anonymization misconfiguration."""


def _backend(fixture: str | None, fixture_dir: str | None):
    if fixture:
        return FixtureBackend(fixture)
    if fixture_dir:
        return FixtureBackend(fixture_dir)
    try:
        from .cdp import CdpBackend

        return CdpBackend()
    except ValueError as exc:
        _fail(str(exc))


# ---------------------------------------------------------------------------
# scan / lint
# ---------------------------------------------------------------------------


@main.command()
@click.argument("url")
@click.option("--fixture", type=click.Path(exists=True), help="Trace fixture to replay.")
@click.option("--json", "as_json", is_flag=True, help="Emit the report as JSON.")
def scan(url: str, fixture: str | None, as_json: bool) -> None:
    """Scan one URL and print its report."""
    backend = _backend(fixture, None)
    try:
        trace = capture(url, SessionConfig(), backend)
    except (OSError, ValueError) as exc:
        _fail(str(exc))
    report = assess(trace)
    if as_json:
        click.echo(json.dumps(report.to_json(), indent=2))
    else:
        click.echo(f"{url}: {report.verdict.value}")
        for hit, classification in report.hit_details:
            click.echo(f"  hit {hit.raw_url[:100]} -> {classification.value}")
        for tracker, evaluation in report.tracker_details:
            click.echo(
                f"  tracker {tracker.name} ({tracker.tracking_id or '?'}) -> {evaluation.value}"
            )
        for diagnostic in report.diagnostics:
            click.echo(f"  note: {diagnostic}")
    sys.exit(1 if report.verdict is Verdict.NON_COMPLIANT else 0)


@main.command("lint")
@click.argument("snippet", type=click.Path(exists=True))
@click.option("--format", "fmt", type=click.Choice(["text", "json"]), default="text")
def lint_command(snippet: str, fmt: str) -> None:
    """Check a GA embed snippet for anonymization misconfigurations."""
    try:
        source = Path(snippet).read_text(encoding="utf-8")
    except OSError as exc:
        _fail(str(exc))
    findings = lint_source(source)
    if fmt == "json":
        click.echo(json.dumps([f.to_json() for f in findings], indent=2))
    else:
        for finding in findings:
            location = f"{snippet}:{finding.span[0]}:{finding.span[1]}"
            tracker = f" [{finding.tracker_id}]" if finding.tracker_id else ""
            click.echo(f"{location}: {finding.code}{tracker}: {finding.message}")
        if not findings:
            click.echo("no findings")
    sys.exit(1 if findings else 0)


# ---------------------------------------------------------------------------
# watch / rescan
# ---------------------------------------------------------------------------


def _read_sites(path: str) -> list[tuple[str, str]]:
    sites = []
    try:
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                data = json.loads(line)
                sites.append((data["site_id"], data["url"]))
    except (OSError, ValueError, KeyError) as exc:
        _fail(f"cannot read site list: {exc}")
    return sites


def _reading_for(site_id: str, url: str, backend) -> ScanReading:
    from urllib.parse import urlsplit

    trace = capture(url, SessionConfig(), backend)
    report = assess(trace)
    host = urlsplit(trace.final_url).hostname if trace.final_url else ""
    return ScanReading(
        site_id=site_id,
        timestamp=datetime.now(timezone.utc),
        verdict=report.verdict,
        ga_present=report.ga_present,
        redirect_target_domain=host or "",
    )


@main.command()
@click.option("--sites", required=True, type=click.Path(exists=True), help="NDJSON site list.")
@click.option("--store", required=True, type=click.Path(), help="Scan store to append to.")
@click.option("--per-day", default=4, show_default=True)
@click.option("--jitter-minutes", default=15, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--fixture-dir", type=click.Path(exists=True))
@click.option("--once", is_flag=True, help="Run a single immediate pass and exit.")
def watch(sites, store, per_day, jitter_minutes, seed, fixture_dir, once) -> None:
    """Run the scan scheduler and append readings to the store."""
    site_list = _read_sites(sites)
    backend = _backend(None, fixture_dir)
    scan_store = ScanStore(store)
    if once:
        for site_id, url in site_list:
            scan_store.append(_reading_for(site_id, url, backend))
        click.echo(f"recorded {len(site_list)} readings")
        return
    click.echo(f"scheduling {len(site_list)} sites {per_day}x/day; ctrl-c to stop")
    day = 0
    while True:
        day_start = datetime.now(timezone.utc).replace(
            hour=0, minute=0, second=0, microsecond=0
        ) + timedelta(days=day)
        plan = schedule_scans(
            [s for s, _ in site_list],
            per_day=per_day,
            jitter=timedelta(minutes=jitter_minutes),
            seed=seed + day,
            day_start=day_start,
        )
        urls = dict(site_list)
        for when, site_id in plan:
            delay = (when - datetime.now(timezone.utc)).total_seconds()
            if delay > 0:
                time_module.sleep(delay)
            scan_store.append(_reading_for(site_id, urls[site_id], backend))
        day += 1


@main.command()
@click.option("--sites", required=True, type=click.Path(exists=True))
@click.option("--store", required=True, type=click.Path(),
              help="Study scan store (read-only here; watch owns it).")
@click.option("--out", "out_path", type=click.Path(),
              help="Where the follow-up readings go [default: <store>.rescan.ndjson].")
@click.option("--fixture-dir", type=click.Path(exists=True))
@click.option("--c", "c_value", default=5, show_default=True)
@click.option("--json", "as_json", is_flag=True)
def rescan(sites, store, out_path, fixture_dir, c_value, as_json) -> None:
    """One-shot follow-up pass: re-scan every site and compare against its
    previous smoothed state. New readings land in a separate store so the
    study data stays untouched."""
    site_list = _read_sites(sites)
    backend = _backend(None, fixture_dir)
    follow_up = ScanStore(out_path or f"{store}.rescan.ndjson")
    config = SmoothingConfig(c=c_value)
    previous = ScanStore(store).timelines()
    now = datetime.now(timezone.utc)

    counters = {"still_compliant": 0, "regressed": 0, "newly_compliant": 0,
                "still_non_compliant": 0, "unreachable": 0}
    for site_id, url in site_list:
        reading = _reading_for(site_id, url, backend)
        follow_up.append(reading)
        was = (
            state_at(previous[site_id], config, now)
            if site_id in previous
            else SmoothedState.NON_COMPLIANT
        )
        if reading.verdict is Verdict.OFFLINE:
            counters["unreachable"] += 1
        elif reading.verdict is Verdict.NON_COMPLIANT:
            if was is SmoothedState.COMPLIANT:
                counters["regressed"] += 1
            else:
                counters["still_non_compliant"] += 1
        else:
            if was is SmoothedState.COMPLIANT:
                counters["still_compliant"] += 1
            else:
                counters["newly_compliant"] += 1
    if as_json:
        click.echo(json.dumps(counters, indent=2))
    else:
        for key, value in counters.items():
            click.echo(f"{key}: {value}")


# ---------------------------------------------------------------------------
# merge / assign / lifecycle
# ---------------------------------------------------------------------------


@main.command()
@click.option("--owners", required=True, type=click.Path(exists=True), help="NDJSON site records.")
@click.option("--out", type=click.Path(), help="Write groups JSON here instead of stdout.")
def merge(owners, out) -> None:
    """Merge co-owned sites into owner groups; list review candidates."""
    try:
        records = camp.read_site_records(owners)
    except (OSError, ValueError, KeyError) as exc:
        _fail(f"cannot read owner records: {exc}")
    result = camp.merge_co_owned(records)
    payload = {
        "groups": [
            {
                "group_id": g.group_id,
                "site_ids": sorted(g.site_ids),
                "category": g.category.value if g.category else None,
            }
            for g in result.groups
        ],
        "review_candidates": [
            {
                "zip": c.zip_code,
                "site_a": c.site_a,
                "site_b": c.site_b,
                "name_a": c.name_a,
                "name_b": c.name_b,
            }
            for c in result.review_candidates
        ],
    }
    text = json.dumps(payload, indent=2)
    if out:
        Path(out).write_text(text)
        click.echo(
            f"{len(result.groups)} groups, {len(result.review_candidates)} review candidates"
        )
    else:
        click.echo(text)


@main.command()
@click.option("--groups", "groups_path", required=True, type=click.Path(exists=True),
              help="Groups JSON produced by `merge`.")
@click.option("--seed", default=0, show_default=True)
@click.option("--weights", default=None, help="email,letter,control (e.g. 1,2,4).")
@click.option("--out", type=click.Path(), help="Write the assignment CSV here.")
def assign(groups_path, seed, weights, out) -> None:
    """Assign owner groups to experimental cells, stratified by category."""
    try:
        data = json.loads(Path(groups_path).read_text())
        groups = [
            camp.OwnerGroup(
                group_id=g["group_id"],
                owners=(),
                site_ids=frozenset(g["site_ids"]),
                category=camp.Category(g["category"]) if g.get("category") else None,
            )
            for g in data["groups"]
        ]
    except (OSError, ValueError, KeyError) as exc:
        _fail(f"cannot read groups: {exc}")
    cell_weights = camp.CellWeights()
    if weights:
        try:
            email_w, letter_w, control_w = (float(x) for x in weights.split(","))
            cell_weights = camp.CellWeights(email=email_w, letter=letter_w, control=control_w)
        except ValueError as exc:
            _fail(f"bad --weights: {exc}")
    try:
        assignments = camp.assign_groups(groups, cell_weights, seed=seed)
    except ValueError as exc:
        _fail(str(exc))
    csv_text = camp.assignments_to_csv(assignments, {g.group_id: g for g in groups})
    if out:
        Path(out).write_text(csv_text)
        click.echo(f"{len(assignments)} assignments written to {out}")
    else:
        click.echo(csv_text, nl=False)


@main.command()
@click.option("--assignments", "assignments_path", required=True, type=click.Path(exists=True))
@click.option("--store", required=True, type=click.Path(exists=True))
@click.option("--events", "events_path", type=click.Path(), help="Message-event NDJSON history.")
@click.option("--date", "today_text", required=True, help="Evaluation date (ISO).")
@click.option("--notification-date", default=None, help="Campaign start (ISO).")
@click.option("--reminder-after-days", default=30, show_default=True)
@click.option("--debrief-after-days", default=60, show_default=True)
@click.option("--c", "c_value", default=5, show_default=True)
@click.option("--record", is_flag=True, help="Append due events to the events file.")
def lifecycle(assignments_path, store, events_path, today_text, notification_date,
              reminder_after_days, debrief_after_days, c_value, record) -> None:
    """List (and optionally record) the messages due on a date."""
    try:
        assignments, group_sites = camp.assignments_from_csv(Path(assignments_path).read_text())
        today = date.fromisoformat(today_text)
    except (OSError, ValueError) as exc:
        _fail(str(exc))

    history = []
    if events_path and Path(events_path).exists():
        with open(events_path, encoding="utf-8") as fh:
            history = [camp.MessageEvent.from_json(json.loads(l)) for l in fh if l.strip()]

    start = date.fromisoformat(notification_date) if notification_date else today
    schedule = camp.CampaignSchedule(
        notification_date=start,
        letter_receipt_date=start,
        reminder_after_days=reminder_after_days,
        debrief_after_days=debrief_after_days,
    )

    timelines = ScanStore(store).timelines()
    config = SmoothingConfig(c=c_value)
    moment = datetime.combine(today, datetime.min.time(), tzinfo=timezone.utc)
    compliant_groups = set()
    for assignment in assignments:
        sites = group_sites.get(assignment.group_id, frozenset())
        states = [
            state_at(timelines[s], config, moment) for s in sites if s in timelines
        ]
        if states and all(s is SmoothedState.COMPLIANT for s in states):
            compliant_groups.add(assignment.group_id)

    due = camp.lifecycle_step(assignments, history, compliant_groups, today, schedule)
    for event in due:
        cell = event.cell.label() if event.cell else "control"
        click.echo(f"{event.kind.value}: {event.group_id} [{cell}]")
    if not due:
        click.echo("nothing due")
    if record and events_path:
        with open(events_path, "a", encoding="utf-8") as fh:
            for event in due:
                fh.write(json.dumps(event.to_json(), sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# analyze
# ---------------------------------------------------------------------------


def _collect_inputs(
    timelines: dict[str, SiteTimeline],
    group_sites: dict[str, frozenset[str]],
    receipt: datetime,
    end: datetime,
    config: SmoothingConfig,
) -> dict[str, list[surv.SurvivalInput]]:
    """Per-group survival subjects: one per site, weight 1/|G|; offline
    transitions censor at the offline time."""
    horizon_days = (end - receipt).total_seconds() / 86400.0
    inputs: dict[str, list[surv.SurvivalInput]] = {}
    for group_id, sites in group_sites.items():
        members = sorted(sites)
        weight = 1.0 / len(members) if members else 1.0
        subjects = []
        for site_id in members:
            timeline = timelines.get(site_id)
            event = remediation_event(timeline, config, receipt) if timeline else None
            if event is None:
                subjects.append(
                    surv.SurvivalInput(site_id, max(horizon_days, 0.0), False, weight)
                )
            elif event.mode is RemediationMode.WENT_OFFLINE:
                subjects.append(
                    surv.SurvivalInput(site_id, event.duration_days, False, weight)
                )
            else:
                subjects.append(
                    surv.SurvivalInput(site_id, event.duration_days, True, weight)
                )
        inputs[group_id] = subjects
    return inputs


@main.command()
@click.option("--store", required=True, type=click.Path(exists=True))
@click.option("--assignments", "assignments_path", required=True, type=click.Path(exists=True))
@click.option("--at-days", default="35,55", show_default=True)
@click.option("--compare", default="medium,sender,framing", show_default=True)
@click.option("--receipt", required=True, help="Notification receipt date (ISO).")
@click.option("--end", "end_text", default=None, help="Study end (ISO; default last reading).")
@click.option("--c", "c_value", default=5, show_default=True)
@click.option("--alpha", default=0.05, show_default=True)
@click.option("--out-dir", type=click.Path(), help="Write per-level curve CSVs here.")
@click.option("--exclude-churn/--no-exclude-churn", default=True, show_default=True,
              help="Drop sites redirecting to 3+ distinct domains.")
@click.option("--json", "as_json", is_flag=True)
def analyze(store, assignments_path, at_days, compare, receipt, end_text, c_value,
            alpha, out_dir, exclude_churn, as_json) -> None:
    """Survival tables per factor with corrected point-in-time comparisons."""
    try:
        assignments, group_sites = camp.assignments_from_csv(Path(assignments_path).read_text())
        receipt_dt = datetime.fromisoformat(receipt)
        if receipt_dt.tzinfo is None:
            receipt_dt = receipt_dt.replace(tzinfo=timezone.utc)
        days = [float(d) for d in at_days.split(",") if d]
        factors = [f.strip() for f in compare.split(",") if f.strip()]
    except (OSError, ValueError) as exc:
        _fail(str(exc))

    timelines = ScanStore(store).timelines()
    if not timelines:
        _fail("scan store is empty")
    if exclude_churn:
        _, excluded = redirect_churn_filter(timelines.values())
        for site_id in excluded:
            del timelines[site_id]
        group_sites = {
            gid: frozenset(s for s in sites if s in timelines)
            for gid, sites in group_sites.items()
        }

    end = (
        datetime.fromisoformat(end_text).replace(tzinfo=timezone.utc)
        if end_text
        else max(r.timestamp for t in timelines.values() for r in t.readings)
    )
    config = SmoothingConfig(c=c_value)
    by_group = _collect_inputs(timelines, group_sites, receipt_dt, end, config)
    cells = {a.group_id: a.cell for a in assignments}

    def level_inputs(selector) -> list[surv.SurvivalInput]:
        out = []
        for group_id, subjects in by_group.items():
            if group_id in cells and selector(cells[group_id]):
                out.extend(subjects)
        return out

    levels: dict[str, list[surv.SurvivalInput]] = {
        "all_notified": level_inputs(lambda cell: cell is not None),
        "control": level_inputs(lambda cell: cell is None),
    }
    factor_levels: dict[str, list[str]] = {"overall": ["all_notified", "control"]}
    for factor in factors:
        enum = {"medium": camp.Medium, "sender": camp.Sender, "framing": camp.Framing}.get(factor)
        if enum is None:
            _fail(f"unknown factor {factor!r}")
        names = []
        for member in enum:
            key = f"{factor}:{member.value}"
            levels[key] = level_inputs(
                lambda cell, f=factor, m=member: cell is not None
                and getattr(cell, f) is m
            )
            names.append(key)
        factor_levels[factor] = names

    curves = {name: surv.weighted_km(subjects) for name, subjects in levels.items() if subjects}

    rows = []
    for name, curve in curves.items():
        for t in days:
            s, v = surv.survival_at(curve, t)
            half_width = 1.959963984540054 * (v ** 0.5)
            rows.append(
                {
                    "level": name,
                    "t_days": t,
                    "survival": s,
                    "ci_low": max(s - half_width, 0.0),
                    "ci_high": min(s + half_width, 1.0),
                    "n_subjects": len(levels[name]),
                }
            )

    comparisons = []
    for factor, names in factor_levels.items():
        for a, b in itertools.combinations(names, 2):
            if a not in curves or b not in curves:
                continue
            for t in days:
                try:
                    point = surv.cloglog_compare(curves[a], curves[b], t)
                except surv.SingularComparisonError:
                    continue
                comparisons.append(
                    {"factor": factor, "a": a, "b": b, "t_days": t,
                     "s_a": point.s1, "s_b": point.s2, "z": point.z, "p_raw": point.p}
                )
    if comparisons:
        corrected = surv.holm_bonferroni([c["p_raw"] for c in comparisons], alpha=alpha)
        for row, adjusted, rejected in zip(
            comparisons, corrected.adjusted_p, corrected.rejected
        ):
            row["p_adjusted"] = adjusted
            row["significant"] = rejected

    if out_dir:
        out_path = Path(out_dir)
        out_path.mkdir(parents=True, exist_ok=True)
        for name, curve in curves.items():
            safe = name.replace(":", "_")
            (out_path / f"curve_{safe}.csv").write_text(surv.curve_to_csv(curve))

    if as_json:
        click.echo(json.dumps({"survival": rows, "comparisons": comparisons}, indent=2))
        return
    click.echo(f"{'level':<22} {'t':>5} {'S(t)':>8} {'95% CI':>19} {'n':>5}")
    for row in rows:
        ci = f"[{row['ci_low']:.3f}, {row['ci_high']:.3f}]"
        click.echo(
            f"{row['level']:<22} {row['t_days']:>5.0f} {row['survival']:>8.3f} {ci:>19} "
            f"{row['n_subjects']:>5}"
        )
    if comparisons:
        click.echo()
        click.echo(f"{'comparison':<46} {'t':>5} {'z':>8} {'p(adj)':>10}  sig")
        for row in comparisons:
            label = f"{row['a']} vs {row['b']}"
            mark = "*" if row["significant"] else ""
            click.echo(
                f"{label:<46} {row['t_days']:>5.0f} {row['z']:>8.3f} "
                f"{row['p_adjusted']:>10.4g}  {mark}"
            )


# ---------------------------------------------------------------------------
# serve
# ---------------------------------------------------------------------------


@main.command()
@click.option("--port", default=8800, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--fixture-dir", type=click.Path(exists=True))
@click.option("--store", type=click.Path(), help="Scan-record NDJSON store.")
@click.option("--webui-dir", type=click.Path(exists=True), help="Static UI build to serve at /.")
def serve(port, host, fixture_dir, store, webui_dir) -> None:
    """Run the self-service scan service."""
    import uvicorn

    from .service import ServiceConfig, create_app

    backend = _backend(None, fixture_dir)
    app = create_app(
        ServiceConfig(
            backend=backend,
            record_store_path=store,
            per_target_min_interval_s=0.0 if fixture_dir else 10.0,
        )
    )
    if webui_dir:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=webui_dir, html=True), name="webui")
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
