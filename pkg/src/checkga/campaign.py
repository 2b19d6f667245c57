"""Notification-campaign management.

Covers the registry side of a campaign: merging co-owned sites into owner
groups, resolving annotator disagreement by majority vote, stratified
random assignment to the full-factorial experimental cells (two media,
three senders, three framings, plus control) with letters weighted twice
as heavily as emails, and the notification / reminder / debrief lifecycle
with bounce handling. Message dispatch itself is out of scope; the module
tracks events and derives reminder content from the stored assignment so a
reminder can never carry a different cell than the original notification.
"""

from __future__ import annotations

import csv
import io
import json
import random
import re
from collections import Counter
from dataclasses import dataclass, field
from datetime import date, datetime
from enum import Enum
from fractions import Fraction
from math import floor
from typing import Iterable, Sequence


class Category(Enum):
    COMPANY = "company"
    INDIVIDUAL = "individual"
    PUBLIC_SECTOR = "public_sector"
    OTHER = "other"


def majority_vote(labels: Sequence[Category]) -> Category | None:
    """Category held by at least two of the three annotators; None when all
    three disagree (flagged for manual resolution)."""
    if len(labels) != 3:
        raise ValueError("exactly three annotator labels expected")
    value, count = Counter(labels).most_common(1)[0]
    return value if count >= 2 else None


@dataclass(frozen=True)
class SiteRecord:
    """One line of the owners/sites input: contact data plus annotator labels."""

    site_id: str
    url: str
    recipient_name: str
    street: str
    zip_code: str
    city: str
    email: str | None
    labels: tuple[Category, Category, Category]

    def __post_init__(self) -> None:
        has_postal = bool(self.street and self.zip_code)
        if not has_postal and not self.email:
            raise ValueError(f"{self.site_id}: needs a postal address or an email")

    @classmethod
    def from_json(cls, data: dict) -> "SiteRecord":
        return cls(
            site_id=data["site_id"],
            url=data.get("url", ""),
            recipient_name=data.get("recipient_name", ""),
            street=data.get("street", ""),
            zip_code=str(data.get("zip", "")),
            city=data.get("city", ""),
            email=data.get("email") or None,
            labels=tuple(Category(l) for l in data["labels"]),
        )


@dataclass(frozen=True)
class Owner:
    owner_id: str
    recipient_name: str
    postal: tuple[str, str, str] | None  # (street, zip, city)
    email: str | None
    category: Category | None


@dataclass(frozen=True)
class OwnerGroup:
    group_id: str
    owners: tuple[Owner, ...]
    site_ids: frozenset[str]
    category: Category | None

    def __post_init__(self) -> None:
        if not self.site_ids:
            raise ValueError("owner group without sites")

    @property
    def size_g(self) -> int:
        return len(self.site_ids)

    @property
    def weight(self) -> float:
        """Per-site analysis weight: each owner counts once overall."""
        return 1.0 / self.size_g


# Legal-form suffixes stripped during address normalization so that
# "Company" and "Company LLC" merge.
DEFAULT_LEGAL_SUFFIXES = (
    "gmbh & co. kg", "gmbh & co kg", "gmbh", "mbh", "ag", "kg", "ohg", "gbr",
    "ug (haftungsbeschränkt)", "ug", "e.v.", "ev", "e.k.", "ek", "llc",
    "ltd.", "ltd", "inc.", "inc", "co.", "co",
)

_PUNCT = re.compile(r"[^\w\s]", re.UNICODE)
_WS = re.compile(r"\s+")


def normalize_name(name: str, legal_suffixes: Sequence[str] = DEFAULT_LEGAL_SUFFIXES) -> str:
    text = name.casefold().strip()
    for suffix in sorted(legal_suffixes, key=len, reverse=True):
        if text.endswith(" " + suffix) or text == suffix:
            text = text[: len(text) - len(suffix)].strip()
    text = _PUNCT.sub(" ", text)
    return _WS.sub(" ", text).strip()


def normalize_street(street: str) -> str:
    text = _PUNCT.sub(" ", street.casefold())
    text = text.replace("strasse", "str").replace("straße", "str")
    return _WS.sub(" ", text).strip()


@dataclass(frozen=True)
class ReviewCandidate:
    """Same normalized street+ZIP but different recipient names: not merged
    automatically, emitted for human review (sorted by ZIP)."""

    zip_code: str
    site_a: str
    site_b: str
    name_a: str
    name_b: str


@dataclass
class MergeResult:
    groups: list[OwnerGroup]
    review_candidates: list[ReviewCandidate]


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, i: int) -> int:
        while self.parent[i] != i:
            self.parent[i] = self.parent[self.parent[i]]
            i = self.parent[i]
        return i

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[rb] = ra


def merge_co_owned(
    records: Sequence[SiteRecord],
    legal_suffixes: Sequence[str] = DEFAULT_LEGAL_SUFFIXES,
) -> MergeResult:
    """Merge sites into owner groups.

    Two sites are co-owned when they share a contact email, or when their
    normalized (recipient name, street, ZIP) coincide. A shared address under
    a different recipient name is never merged automatically; such pairs come
    back as review candidates.
    """
    uf = _UnionFind(len(records))

    by_email: dict[str, int] = {}
    by_address: dict[tuple[str, str, str], int] = {}
    address_names: dict[tuple[str, str], dict[str, int]] = {}

    for i, record in enumerate(records):
        if record.email:
            key = record.email.casefold().strip()
            if key in by_email:
                uf.union(by_email[key], i)
            else:
                by_email[key] = i
        if record.street and record.zip_code:
            name = normalize_name(record.recipient_name, legal_suffixes)
            addr = (name, normalize_street(record.street), record.zip_code.strip())
            if addr in by_address:
                uf.union(by_address[addr], i)
            else:
                by_address[addr] = i
            address_names.setdefault((addr[1], addr[2]), {}).setdefault(name, i)

    candidates = []
    for (street, zip_code), names in address_names.items():
        if len(names) < 2:
            continue
        items = sorted(names.items())
        for (name_a, ia), (name_b, ib) in zip(items, items[1:]):
            if uf.find(ia) != uf.find(ib):
                candidates.append(
                    ReviewCandidate(
                        zip_code=zip_code,
                        site_a=records[ia].site_id,
                        site_b=records[ib].site_id,
                        name_a=records[ia].recipient_name,
                        name_b=records[ib].recipient_name,
                    )
                )
    candidates.sort(key=lambda c: (c.zip_code, c.site_a))

    clusters: dict[int, list[SiteRecord]] = {}
    for i, record in enumerate(records):
        clusters.setdefault(uf.find(i), []).append(record)

    groups = []
    ordered = sorted(clusters.values(), key=lambda rs: min(r.site_id for r in rs))
    for idx, members in enumerate(ordered):
        owners = tuple(
            Owner(
                owner_id=m.site_id,
                recipient_name=m.recipient_name,
                postal=(m.street, m.zip_code, m.city) if m.street else None,
                email=m.email,
                category=majority_vote(m.labels),
            )
            for m in sorted(members, key=lambda m: m.site_id)
        )
        groups.append(
            OwnerGroup(
                group_id=f"g{idx:04d}",
                owners=owners,
                site_ids=frozenset(m.site_id for m in members),
                category=_group_category(owners),
            )
        )
    return MergeResult(groups=groups, review_candidates=candidates)


def _group_category(owners: tuple[Owner, ...]) -> Category | None:
    votes = [o.category for o in owners]
    if any(v is None for v in votes):
        return None
    value, _ = Counter(votes).most_common(1)[0]
    return value


# ---------------------------------------------------------------------------
# Experimental assignment
# ---------------------------------------------------------------------------


class Medium(Enum):
    EMAIL = "email"
    LETTER = "letter"


class Sender(Enum):
    CITIZEN = "citizen"
    CS_GROUP = "cs_group"
    LAW_GROUP = "law_group"


class Framing(Enum):
    PRIVACY = "privacy"
    GDPR = "gdpr"
    FEE = "fee"


@dataclass(frozen=True)
class Cell:
    medium: Medium
    sender: Sender
    framing: Framing

    def label(self) -> str:
        return f"{self.medium.value}/{self.sender.value}/{self.framing.value}"


FACTORIAL_CELLS: tuple[Cell, ...] = tuple(
    Cell(medium, sender, framing)
    for medium in Medium
    for sender in Sender
    for framing in Framing
)

# Control weight matched to the realized share of the reference campaign
# (595 control owners against 4050 notified, i.e. 27 units of cell weight).
DEFAULT_CONTROL_WEIGHT = 27 * 595 / 4050


@dataclass(frozen=True)
class CellWeights:
    email: float = 1.0
    letter: float = 2.0
    control: float = DEFAULT_CONTROL_WEIGHT

    def __post_init__(self) -> None:
        if self.email < 0 or self.letter < 0 or self.control < 0:
            raise ValueError("weights must be nonnegative")

    def of(self, cell: Cell | None) -> float:
        if cell is None:
            return self.control
        return self.email if cell.medium is Medium.EMAIL else self.letter


@dataclass(frozen=True)
class Assignment:
    group_id: str
    cell: Cell | None  # None = control

    @property
    def is_control(self) -> bool:
        return self.cell is None


def _apportion(n: int, weights: Sequence[float], rng: random.Random) -> list[int]:
    """Split n seats over weighted cells: integer floors of the exact quotas
    plus systematic randomized rounding of the remainders, so every cell's
    expected count equals its quota and no count is off by more than one.
    Exact rational arithmetic keeps the counts summing to n."""
    total = sum(Fraction(w) for w in weights)
    if total <= 0:
        raise ValueError("at least one positive weight required")
    quotas = [Fraction(w) * n / total for w in weights]
    counts = [floor(q) for q in quotas]
    leftover = n - sum(counts)
    if leftover:
        order = list(range(len(weights)))
        rng.shuffle(order)
        point = Fraction(rng.random())
        cumulative = Fraction(0)
        for idx in order:
            lo = cumulative
            cumulative += quotas[idx] - counts[idx]
            counts[idx] += floor(cumulative - point) - floor(lo - point)
    return counts


def assign_groups(
    groups: Sequence[OwnerGroup],
    weights: CellWeights = CellWeights(),
    seed: int = 0,
    cells: Sequence[Cell] = FACTORIAL_CELLS,
) -> list[Assignment]:
    """Stratified random assignment: within each category, groups are dealt
    to the factorial cells plus control proportionally to the weights;
    per-stratum counts deviate from exact proportionality by at most one."""
    unresolved = [g.group_id for g in groups if g.category is None]
    if unresolved:
        raise ValueError(f"groups without a resolved category: {unresolved[:5]}")

    all_cells: list[Cell | None] = list(cells) + [None]
    cell_weights = [weights.of(c) for c in all_cells]

    assignments: list[Assignment] = []
    by_category: dict[Category, list[OwnerGroup]] = {}
    for group in groups:
        by_category.setdefault(group.category, []).append(group)

    for category in sorted(by_category, key=lambda c: c.value):
        members = sorted(by_category[category], key=lambda g: g.group_id)
        rng = random.Random(f"{seed}:{category.value}")
        rng.shuffle(members)
        counts = _apportion(len(members), cell_weights, rng)
        cursor = 0
        for cell, count in zip(all_cells, counts):
            for group in members[cursor : cursor + count]:
                assignments.append(Assignment(group_id=group.group_id, cell=cell))
            cursor += count
    assignments.sort(key=lambda a: a.group_id)
    return assignments


def assignments_to_csv(
    assignments: Iterable[Assignment], groups: dict[str, OwnerGroup]
) -> str:
    out = io.StringIO()
    writer = csv.writer(out)
    writer.writerow(["group_id", "site_ids", "medium", "sender", "framing"])
    for a in assignments:
        sites = ";".join(sorted(groups[a.group_id].site_ids)) if a.group_id in groups else ""
        if a.is_control:
            writer.writerow([a.group_id, sites, "control", "control", "control"])
        else:
            writer.writerow(
                [a.group_id, sites, a.cell.medium.value, a.cell.sender.value, a.cell.framing.value]
            )
    return out.getvalue()


def assignments_from_csv(text: str) -> tuple[list[Assignment], dict[str, frozenset[str]]]:
    assignments = []
    sites: dict[str, frozenset[str]] = {}
    for row in csv.DictReader(io.StringIO(text)):
        group_id = row["group_id"]
        sites[group_id] = frozenset(s for s in row.get("site_ids", "").split(";") if s)
        if row["medium"] == "control":
            assignments.append(Assignment(group_id=group_id, cell=None))
        else:
            assignments.append(
                Assignment(
                    group_id=group_id,
                    cell=Cell(
                        medium=Medium(row["medium"]),
                        sender=Sender(row["sender"]),
                        framing=Framing(row["framing"]),
                    ),
                )
            )
    return assignments, sites


# ---------------------------------------------------------------------------
# Message lifecycle
# ---------------------------------------------------------------------------


class MessageKind(Enum):
    NOTIFICATION = "notification"
    REMINDER = "reminder"
    DEBRIEF = "debrief"


class Delivery(Enum):
    ASSUMED = "assumed"
    BOUNCED = "bounced"
    OPTED_OUT = "opted_out"


@dataclass(frozen=True)
class MessageEvent:
    group_id: str
    kind: MessageKind
    sent_at: date
    receipt_date: date
    delivery: Delivery
    cell: Cell | None = None

    def to_json(self) -> dict:
        return {
            "group_id": self.group_id,
            "kind": self.kind.value,
            "sent_at": self.sent_at.isoformat(),
            "receipt_date": self.receipt_date.isoformat(),
            "delivery": self.delivery.value,
            "cell": self.cell.label() if self.cell else None,
        }

    @classmethod
    def from_json(cls, data: dict) -> "MessageEvent":
        cell = None
        if data.get("cell"):
            medium, sender, framing = data["cell"].split("/")
            cell = Cell(Medium(medium), Sender(sender), Framing(framing))
        return cls(
            group_id=data["group_id"],
            kind=MessageKind(data["kind"]),
            sent_at=date.fromisoformat(data["sent_at"]),
            receipt_date=date.fromisoformat(data["receipt_date"]),
            delivery=Delivery(data["delivery"]),
            cell=cell,
        )


@dataclass(frozen=True)
class CampaignSchedule:
    notification_date: date
    letter_receipt_date: date | None = None  # campaign-wide; defaults to notification_date
    reminder_after_days: int = 30
    debrief_after_days: int = 60

    def receipt_for(self, cell: Cell | None, sent: date, kind: MessageKind) -> date:
        if (
            kind is MessageKind.NOTIFICATION
            and cell is not None
            and cell.medium is Medium.LETTER
        ):
            return self.letter_receipt_date or self.notification_date
        return sent


def lifecycle_step(
    assignments: Sequence[Assignment],
    history: Sequence[MessageEvent],
    compliant_groups: set[str],
    today: date,
    schedule: CampaignSchedule,
) -> list[MessageEvent]:
    """Messages due on ``today``.

    Notifications go to every non-control group once. A reminder goes to
    groups that were reachable (notification delivery assumed), are still
    non-compliant, and whose notification receipt lies at least the reminder
    interval in the past; its cell is always the stored assignment's cell.
    The debrief goes to every notified group that has not opted out —
    reaching out one final time is owed to bounced recipients too — without
    regard to compliance. Control groups receive nothing here.
    """
    by_group: dict[str, dict[MessageKind, MessageEvent]] = {}
    for event in history:
        by_group.setdefault(event.group_id, {})[event.kind] = event

    due: list[MessageEvent] = []
    for assignment in assignments:
        if assignment.is_control:
            continue
        events = by_group.get(assignment.group_id, {})
        notification = events.get(MessageKind.NOTIFICATION)

        if notification is None:
            if today >= schedule.notification_date:
                due.append(
                    MessageEvent(
                        group_id=assignment.group_id,
                        kind=MessageKind.NOTIFICATION,
                        sent_at=today,
                        receipt_date=schedule.receipt_for(
                            assignment.cell, today, MessageKind.NOTIFICATION
                        ),
                        delivery=Delivery.ASSUMED,
                        cell=assignment.cell,
                    )
                )
            continue

        if notification.delivery is Delivery.OPTED_OUT:
            continue

        reminder_due = (
            notification.delivery is Delivery.ASSUMED
            and MessageKind.REMINDER not in events
            and assignment.group_id not in compliant_groups
            and (today - notification.receipt_date).days >= schedule.reminder_after_days
            and (today - notification.receipt_date).days < schedule.debrief_after_days
        )
        if reminder_due:
            due.append(
                MessageEvent(
                    group_id=assignment.group_id,
                    kind=MessageKind.REMINDER,
                    sent_at=today,
                    receipt_date=today,
                    delivery=Delivery.ASSUMED,
                    cell=assignment.cell,
                )
            )

        debrief_due = (
            MessageKind.DEBRIEF not in events
            and (today - notification.receipt_date).days >= schedule.debrief_after_days
        )
        if debrief_due:
            due.append(
                MessageEvent(
                    group_id=assignment.group_id,
                    kind=MessageKind.DEBRIEF,
                    sent_at=today,
                    receipt_date=today,
                    delivery=Delivery.ASSUMED,
                    cell=assignment.cell,
                )
            )
    return due


# ---------------------------------------------------------------------------
# Multi-site remediation coherence
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CoherenceReport:
    multi_site_groups: int
    fully_compliant: int
    fully_non_compliant: int
    mixed: int
    spans_days: dict[str, float] = field(hash=False, default_factory=dict)

    @property
    def coherent_fraction(self) -> float:
        if not self.multi_site_groups:
            return 0.0
        return (self.fully_compliant + self.fully_non_compliant) / self.multi_site_groups


def cohort_coherence(
    groups: Sequence[OwnerGroup],
    site_events: dict[str, datetime | None],
) -> CoherenceReport:
    """How coherently multi-site owners remediate.

    ``site_events`` maps site id to its remediation time (None = never).
    For fully compliant groups the span between the first and last site's
    remediation is reported in days.
    """
    multi = [g for g in groups if g.size_g > 1]
    fully_compliant = fully_non = mixed = 0
    spans: dict[str, float] = {}
    for group in multi:
        times = [site_events.get(site_id) for site_id in sorted(group.site_ids)]
        if all(t is not None for t in times):
            fully_compliant += 1
            span = max(times) - min(times)
            spans[group.group_id] = span.total_seconds() / 86400.0
        elif all(t is None for t in times):
            fully_non += 1
        else:
            mixed += 1
    return CoherenceReport(
        multi_site_groups=len(multi),
        fully_compliant=fully_compliant,
        fully_non_compliant=fully_non,
        mixed=mixed,
        spans_days=spans,
    )


def read_site_records(path) -> list[SiteRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(SiteRecord.from_json(json.loads(line)))
    return records
