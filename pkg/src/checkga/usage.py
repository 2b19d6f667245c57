"""Scan-record analytics for the self-service tool.

Scans carry no account identity; what links them is the visit token handed
out per browser visit and the privacy-truncated client address. Two scans
belong to the same user when they share a token, or when they share a
truncated address on the same UTC day. On top of these links sit the usage
metrics: which owners checked their own sites, how many scans it took them
to reach compliance, and how long the first scan preceded remediation.
"""

from __future__ import annotations

import json
import statistics
from dataclasses import dataclass
from datetime import datetime
from enum import Enum
from pathlib import Path
from typing import Sequence
from urllib.parse import urlsplit

from .domains import registrable_domain
from .hits import IpFamily, TruncatedIp
from .verdict import Verdict


@dataclass(frozen=True)
class ScanRecord:
    """One persisted self-service scan. The client address is stored
    truncated only; the full address never reaches the store."""

    scan_id: str
    url: str
    verdict: Verdict
    scanned_at: datetime
    client_ip_truncated: TruncatedIp
    session_token: str
    final_domain: str = ""  # registrable domain after redirects, if known

    @property
    def target_domain(self) -> str:
        return registrable_domain(urlsplit(self.url).hostname or "")

    def to_json(self) -> dict:
        return {
            "scan_id": self.scan_id,
            "url": self.url,
            "verdict": self.verdict.value,
            "scanned_at": self.scanned_at.isoformat(),
            "client_ip_truncated": str(self.client_ip_truncated),
            "client_ip_family": self.client_ip_truncated.original_family.value,
            "session_token": self.session_token,
            "final_domain": self.final_domain,
        }

    @classmethod
    def from_json(cls, data: dict) -> "ScanRecord":
        from ipaddress import ip_address

        addr = ip_address(data["client_ip_truncated"])
        family = IpFamily(data.get("client_ip_family", "v4" if addr.version == 4 else "v6"))
        return cls(
            scan_id=data["scan_id"],
            url=data["url"],
            verdict=Verdict(data["verdict"]),
            scanned_at=datetime.fromisoformat(data["scanned_at"]),
            client_ip_truncated=TruncatedIp(family, addr.packed),
            session_token=data["session_token"],
            final_domain=data.get("final_domain", ""),
        )


class LinkBasis(Enum):
    SAME_SESSION = "same_session"
    SAME_TRUNCATED_IP_SAME_DAY = "same_truncated_ip_same_day"


@dataclass(frozen=True)
class UsageLink:
    scan_id_a: str
    scan_id_b: str
    link_basis: LinkBasis

    def __post_init__(self) -> None:
        if self.scan_id_a == self.scan_id_b:
            raise ValueError("a link connects two distinct scans")


def build_usage_links(records: Sequence[ScanRecord]) -> list[UsageLink]:
    """All pairwise same-user links. Session identity is checked first; an
    IP-and-day link is only added for pairs not already session-linked."""
    links: list[UsageLink] = []
    seen: set[tuple[str, str]] = set()

    def add(a: ScanRecord, b: ScanRecord, basis: LinkBasis) -> None:
        key = tuple(sorted((a.scan_id, b.scan_id)))
        if key[0] != key[1] and key not in seen:
            seen.add(key)
            links.append(UsageLink(scan_id_a=key[0], scan_id_b=key[1], link_basis=basis))

    by_session: dict[str, list[ScanRecord]] = {}
    for record in records:
        if record.session_token:
            by_session.setdefault(record.session_token, []).append(record)
    for group in by_session.values():
        for i, a in enumerate(group):
            for b in group[i + 1 :]:
                add(a, b, LinkBasis.SAME_SESSION)

    by_ip_day: dict[tuple[bytes, str], list[ScanRecord]] = {}
    for record in records:
        key = (
            record.client_ip_truncated.truncated_bytes,
            record.scanned_at.date().isoformat(),
        )
        by_ip_day.setdefault(key, []).append(record)
    for group in by_ip_day.values():
        for i, a in enumerate(group):
            for b in group[i + 1 :]:
                add(a, b, LinkBasis.SAME_TRUNCATED_IP_SAME_DAY)

    return links


class ScanRelation(Enum):
    IN_DATASET = "in_dataset"
    RELATED = "related"
    UNRELATED = "unrelated"


def is_in_dataset(record: ScanRecord, study_domains: set[str]) -> bool:
    return record.target_domain in study_domains or (
        bool(record.final_domain) and record.final_domain in study_domains
    )


def classify_scan(
    record: ScanRecord,
    study_domains: set[str],
    records_by_id: dict[str, ScanRecord],
    links: Sequence[UsageLink],
) -> ScanRelation:
    """In-dataset: targets (or redirects to) a study site. Related: linked
    to an in-dataset scan by the same user. Unrelated otherwise."""
    if is_in_dataset(record, study_domains):
        return ScanRelation.IN_DATASET
    for link in links:
        if record.scan_id not in (link.scan_id_a, link.scan_id_b):
            continue
        other_id = link.scan_id_b if link.scan_id_a == record.scan_id else link.scan_id_a
        other = records_by_id.get(other_id)
        if other is not None and is_in_dataset(other, study_domains):
            return ScanRelation.RELATED
    return ScanRelation.UNRELATED


def scans_until_compliance(verdicts: Sequence[Verdict]) -> int:
    """Number of scans before the trailing all-compliant run.

    A site may look compliant mid-sequence (e.g. GA broken while the owner
    works on it); only the suffix where every subsequent scan is compliant
    counts as done. With no compliant suffix the count is the whole
    sequence.
    """
    compliant = (Verdict.COMPLIANT_NO_GA, Verdict.COMPLIANT_ANONYMIZED)
    n = len(verdicts)
    cut = n
    while cut > 0 and verdicts[cut - 1] in compliant:
        cut -= 1
    return cut


@dataclass(frozen=True)
class StudyRegistry:
    """Study-side context for usage metrics: which domain is which site,
    which group owns it, and which groups remediated."""

    domain_to_site: dict[str, str]
    site_to_group: dict[str, str]
    remediated_groups: frozenset[str]
    remediation_times: dict[str, datetime]  # per site

    @property
    def study_domains(self) -> set[str]:
        return set(self.domain_to_site)

    def all_groups(self) -> set[str]:
        return set(self.site_to_group.values())


@dataclass(frozen=True)
class UsageReport:
    owners_total: int
    owners_remediated: int
    usage_all: float  # share of owners who scanned one of their own sites
    usage_remediated: float
    usage_unremediated: float
    scans_per_site_median: float | None
    scans_per_site_mean: float | None
    scans_until_compliance_median: float | None
    scans_until_compliance_mean: float | None
    first_scan_to_remediation_hours: dict[str, float]  # quartile label -> hours

    def to_json(self) -> dict:
        return {
            "owners_total": self.owners_total,
            "owners_remediated": self.owners_remediated,
            "usage_all": self.usage_all,
            "usage_remediated": self.usage_remediated,
            "usage_unremediated": self.usage_unremediated,
            "scans_per_site_median": self.scans_per_site_median,
            "scans_per_site_mean": self.scans_per_site_mean,
            "scans_until_compliance_median": self.scans_until_compliance_median,
            "scans_until_compliance_mean": self.scans_until_compliance_mean,
            "first_scan_to_remediation_hours": self.first_scan_to_remediation_hours,
        }


def _share(part: int, whole: int) -> float:
    return part / whole if whole else 0.0


def usage_metrics(records: Sequence[ScanRecord], registry: StudyRegistry) -> UsageReport:
    by_site: dict[str, list[ScanRecord]] = {}
    for record in records:
        site = registry.domain_to_site.get(record.target_domain) or (
            registry.domain_to_site.get(record.final_domain) if record.final_domain else None
        )
        if site is not None:
            by_site.setdefault(site, []).append(record)
    for site_records in by_site.values():
        site_records.sort(key=lambda r: r.scanned_at)

    groups_with_scans: set[str] = set()
    for site in by_site:
        group = registry.site_to_group.get(site)
        if group is not None:
            groups_with_scans.add(group)

    all_groups = registry.all_groups()
    remediated = registry.remediated_groups & all_groups
    unremediated = all_groups - remediated

    scan_counts = [len(v) for v in by_site.values()]
    until_compliance = [
        scans_until_compliance([r.verdict for r in site_records])
        for site_records in by_site.values()
    ]

    lead_times: list[float] = []
    for site, site_records in by_site.items():
        done_at = registry.remediation_times.get(site)
        if done_at is None:
            continue
        first = site_records[0].scanned_at
        if done_at >= first:
            lead_times.append((done_at - first).total_seconds() / 3600.0)

    quartiles: dict[str, float] = {}
    if lead_times:
        lead_times.sort()
        quartiles = {
            "q25": _quantile(lead_times, 0.25),
            "median": _quantile(lead_times, 0.5),
            "q75": _quantile(lead_times, 0.75),
            "mean": statistics.fmean(lead_times),
        }

    return UsageReport(
        owners_total=len(all_groups),
        owners_remediated=len(remediated),
        usage_all=_share(len(groups_with_scans), len(all_groups)),
        usage_remediated=_share(len(groups_with_scans & remediated), len(remediated)),
        usage_unremediated=_share(len(groups_with_scans & unremediated), len(unremediated)),
        scans_per_site_median=statistics.median(scan_counts) if scan_counts else None,
        scans_per_site_mean=statistics.fmean(scan_counts) if scan_counts else None,
        scans_until_compliance_median=(
            statistics.median(until_compliance) if until_compliance else None
        ),
        scans_until_compliance_mean=(
            statistics.fmean(until_compliance) if until_compliance else None
        ),
        first_scan_to_remediation_hours=quartiles,
    )


def _quantile(sorted_values: list[float], q: float) -> float:
    if len(sorted_values) == 1:
        return sorted_values[0]
    pos = q * (len(sorted_values) - 1)
    lo = int(pos)
    hi = min(lo + 1, len(sorted_values) - 1)
    frac = pos - lo
    return sorted_values[lo] * (1 - frac) + sorted_values[hi] * frac


# ---------------------------------------------------------------------------
# Record store
# ---------------------------------------------------------------------------


class RecordStore:
    """Append-only NDJSON store of scan records."""

    def __init__(self, path: str | Path):
        self.path = Path(path)

    def append(self, record: ScanRecord) -> None:
        with self.path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(record.to_json(), sort_keys=True) + "\n")

    def load(self) -> list[ScanRecord]:
        if not self.path.exists():
            return []
        records = []
        with self.path.open(encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    records.append(ScanRecord.from_json(json.loads(line)))
        return records


def validate_record_store(path: str | Path) -> list[str]:
    """Privacy schema check over a record store: every persisted client
    address must be truncated (construction of TruncatedIp enforces the
    zeroed suffix). Returns a list of violations, empty when clean."""
    problems: list[str] = []
    store = RecordStore(path)
    if not store.path.exists():
        return problems
    with store.path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                ScanRecord.from_json(json.loads(line))
            except (ValueError, KeyError) as exc:
                problems.append(f"line {lineno}: {exc}")
    return problems
