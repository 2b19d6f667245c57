"""Site verdicts: combine a trace's GA hits and tracker objects.

The verdict is deliberately one-sided: NON_COMPLIANT only on positive
evidence (an unanonymized hit, or a tracker whose option is off/unset and
that cannot be vouched for by its own hits). Trackers hidden behind consent
banners are invisible to the capture layer, so a compliant verdict can be a
false negative — the report says so in its diagnostics — but never the
other way around.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .hits import GaHit, HitClassification, classify_aip, parse_batch_hits, parse_hit_url
from .session import PageTrace, TraceStatus
from .trackers import (
    AnonymizeIp,
    LibrarySignature,
    TrackerObject,
    detect_ga_objects,
    extract_trackers,
)


class Verdict(Enum):
    COMPLIANT_NO_GA = "compliant_no_ga"
    COMPLIANT_ANONYMIZED = "compliant_anonymized"
    NON_COMPLIANT = "non_compliant"
    OFFLINE = "offline"


class TrackerEvaluation(Enum):
    ANONYMIZED = "anonymized"
    ANONYMIZED_VIA_HITS = "anonymized_via_hits"
    OPTION_UNSET = "option_unset"
    DISABLED = "disabled"

    @property
    def compliant(self) -> bool:
        return self in (TrackerEvaluation.ANONYMIZED, TrackerEvaluation.ANONYMIZED_VIA_HITS)


SUMMARY_KEYS = {
    Verdict.COMPLIANT_NO_GA: "summary.no_ga",
    Verdict.COMPLIANT_ANONYMIZED: "summary.anonymized",
    Verdict.NON_COMPLIANT: "summary.problem",
    Verdict.OFFLINE: "summary.offline",
}

CONSENT_CAVEAT = (
    "Trackers that only load after a consent banner is confirmed are not "
    "visible to this scan; a clean result cannot rule them out."
)


@dataclass(frozen=True)
class SiteReport:
    verdict: Verdict
    hit_details: tuple[tuple[GaHit, HitClassification], ...]
    tracker_details: tuple[tuple[TrackerObject, TrackerEvaluation], ...]
    summary_text_key: str
    diagnostics: tuple[str, ...]

    @property
    def ga_present(self) -> bool:
        return bool(self.hit_details or self.tracker_details)

    def to_json(self) -> dict:
        return {
            "verdict": self.verdict.value,
            "summary_text_key": self.summary_text_key,
            "hits": [
                {**hit.to_json(), "classification": cls.value}
                for hit, cls in self.hit_details
            ],
            "trackers": [
                {**tracker.to_json(), "evaluation": evaluation.value}
                for tracker, evaluation in self.tracker_details
            ],
            "diagnostics": list(self.diagnostics),
        }


def _collect_hits(trace: PageTrace) -> list[GaHit]:
    hits: list[GaHit] = []
    for request in trace.ga_requests:
        if request.body:
            batch = parse_batch_hits(request.url, request.body)
            if batch:
                hits.extend(batch)
                continue
        parsed = parse_hit_url(request.url)
        if parsed is not None:
            hits.append(parsed)
    return hits


def _collect_trackers(
    trace: PageTrace, signatures: list[LibrarySignature] | None
) -> tuple[list[TrackerObject], list[str]]:
    """Union over all snapshot passes; when both passes see the same tracker
    the later pass wins (its configuration is the resolved one)."""
    by_identity: dict[tuple, TrackerObject] = {}
    diagnostics: list[str] = []
    for snapshot in trace.snapshots:
        for name, library in detect_ga_objects(snapshot, signatures):
            extraction = extract_trackers(name, snapshot, library)
            for note in extraction.diagnostics:
                message = f"{snapshot.context_id}/{name}: {note}"
                if message not in diagnostics:
                    diagnostics.append(message)
            for tracker in extraction.trackers:
                by_identity[(tracker.source_library, tracker.name, tracker.tracking_id)] = tracker
    return list(by_identity.values()), diagnostics


def _evaluate_tracker(tracker: TrackerObject, hits: list[GaHit]) -> TrackerEvaluation:
    if tracker.anonymize_ip is AnonymizeIp.TRUE:
        return TrackerEvaluation.ANONYMIZED
    if tracker.anonymize_ip is AnonymizeIp.FALSE:
        return TrackerEvaluation.DISABLED
    # Option unset: the transmitted requests decide. A tracker whose every
    # observed hit carries aip=1 is anonymizing in practice (set at hit level
    # by a wrapper); with no hits of its own it stays unset.
    own_hits = [h for h in hits if h.tracking_id and h.tracking_id == tracker.tracking_id]
    if own_hits and all(
        classify_aip(h) is HitClassification.ANONYMIZED for h in own_hits
    ):
        return TrackerEvaluation.ANONYMIZED_VIA_HITS
    return TrackerEvaluation.OPTION_UNSET


def assess(trace: PageTrace, signatures: list[LibrarySignature] | None = None) -> SiteReport:
    """Pure function of the trace (and signature set) to a SiteReport."""
    if trace.status is not TraceStatus.LOADED:
        return SiteReport(
            verdict=Verdict.OFFLINE,
            hit_details=(),
            tracker_details=(),
            summary_text_key=SUMMARY_KEYS[Verdict.OFFLINE],
            diagnostics=(CONSENT_CAVEAT,),
        )

    hits = _collect_hits(trace)
    trackers, diagnostics = _collect_trackers(trace, signatures)

    hit_details = tuple((hit, classify_aip(hit)) for hit in hits)
    tracker_details = tuple(
        (tracker, _evaluate_tracker(tracker, hits)) for tracker in trackers
    )

    if not hit_details and not tracker_details:
        verdict = Verdict.COMPLIANT_NO_GA
    elif all(cls is HitClassification.ANONYMIZED for _, cls in hit_details) and all(
        evaluation.compliant for _, evaluation in tracker_details
    ):
        verdict = Verdict.COMPLIANT_ANONYMIZED
    else:
        verdict = Verdict.NON_COMPLIANT

    return SiteReport(
        verdict=verdict,
        hit_details=hit_details,
        tracker_details=tracker_details,
        summary_text_key=SUMMARY_KEYS[verdict],
        diagnostics=tuple([CONSENT_CAVEAT, *diagnostics]),
    )
