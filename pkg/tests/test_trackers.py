import pytest
from hypothesis import given, strategies as st

from checkga.trackers import (
    AnonymizeIp,
    GlobalSnapshot,
    Library,
    ValueKind,
    ValueShape,
    default_signatures,
    detect_ga_objects,
    extract_trackers,
    shape_from_json,
    snapshot_from_json,
    snapshot_to_json,
)


def analytics_shape(trackers=None, include_registry=True):
    attrs = {
        "q": ValueShape(kind=ValueKind.ARRAY),
        "l": ValueShape(kind=ValueKind.PRIMITIVE, value=1),
    }
    if include_registry:
        items = {}
        for i, cfg in enumerate(trackers or []):
            items[str(i)] = ValueShape(
                kind=ValueKind.OBJECT,
                attribute_names=frozenset(cfg),
                attributes={
                    k: ValueShape(kind=ValueKind.PRIMITIVE, value=v) for k, v in cfg.items()
                },
            )
        attrs["trackers"] = ValueShape(
            kind=ValueKind.ARRAY, attribute_names=frozenset(items), attributes=items
        )
    return ValueShape(
        kind=ValueKind.FUNCTION,
        method_names=frozenset({"getAll", "create", "remove"}),
        attribute_names=frozenset(attrs),
        attributes=attrs,
    )


class TestDetect:
    def test_analytics_js_command_queue_is_detected(self):
        snap = GlobalSnapshot(context_id="main", globals={"ga": analytics_shape()})
        assert detect_ga_objects(snap) == [("ga", Library.ANALYTICS_JS)]

    def test_empty_snapshot(self):
        snap = GlobalSnapshot(context_id="main", globals={})
        assert detect_ga_objects(snap) == []

    def test_unrelated_global_does_not_match(self):
        jquery = ValueShape(kind=ValueKind.FUNCTION, method_names=frozenset({"ajax", "fn"}))
        snap = GlobalSnapshot(context_id="main", globals={"jQuery": jquery})
        assert detect_ga_objects(snap) == []

    def test_ga_js_gat_object_is_detected(self):
        gat = ValueShape(
            kind=ValueKind.OBJECT,
            method_names=frozenset({"_getTracker", "_createTracker", "_getTrackerByName"}),
        )
        snap = GlobalSnapshot(context_id="main", globals={"_gat": gat})
        assert detect_ga_objects(snap) == [("_gat", Library.GA_JS)]

    def test_first_matching_signature_wins(self):
        both = ValueShape(
            kind=ValueKind.FUNCTION,
            method_names=frozenset({"getAll", "create", "_getTracker", "_createTracker"}),
            attribute_names=frozenset({"q"}),
        )
        snap = GlobalSnapshot(context_id="main", globals={"x": both})
        [(name, lib)] = detect_ga_objects(snap)
        assert lib is Library.ANALYTICS_JS

    def test_empty_signature_list_rejected(self):
        snap = GlobalSnapshot(context_id="main", globals={})
        with pytest.raises(ValueError):
            detect_ga_objects(snap, signatures=[])

    @given(
        st.dictionaries(
            st.text(min_size=1, max_size=6),
            st.sets(st.text(min_size=1, max_size=6), max_size=4),
            max_size=5,
        )
    )
    def test_monotone_adding_globals_never_removes_matches(self, extra):
        base = {"ga": analytics_shape()}
        snap = GlobalSnapshot(context_id="main", globals=base)
        grown = dict(base)
        for name, methods in extra.items():
            if name in grown:
                continue
            grown[name] = ValueShape(kind=ValueKind.OBJECT, method_names=frozenset(methods))
        bigger = GlobalSnapshot(context_id="main", globals=grown)
        assert set(detect_ga_objects(snap)) <= set(detect_ga_objects(bigger))


class TestExtraction:
    def test_single_tracker_with_option(self):
        snap = GlobalSnapshot(
            context_id="main",
            globals={"ga": analytics_shape([{"trackingId": "UA-1-1", "anonymizeIp": True}])},
        )
        result = extract_trackers("ga", snap, Library.ANALYTICS_JS)
        assert not result.registry_missing
        [tracker] = result.trackers
        assert tracker.tracking_id == "UA-1-1"
        assert tracker.anonymize_ip is AnonymizeIp.TRUE

    def test_tracker_without_option_is_unset(self):
        snap = GlobalSnapshot(
            context_id="main",
            globals={
                "ga": analytics_shape(
                    [
                        {"trackingId": "UA-1-1", "anonymizeIp": True},
                        {"trackingId": "UA-2-2"},
                    ]
                )
            },
        )
        result = extract_trackers("ga", snap, Library.ANALYTICS_JS)
        assert [t.anonymize_ip for t in result.trackers] == [AnonymizeIp.TRUE, AnonymizeIp.UNSET]

    def test_case_sensitive_key_miss_is_unset(self):
        snap = GlobalSnapshot(
            context_id="main",
            globals={"ga": analytics_shape([{"trackingId": "UA-1-1", "anonymizeIP": True}])},
        )
        [tracker] = extract_trackers("ga", snap, Library.ANALYTICS_JS).trackers
        assert tracker.anonymize_ip is AnonymizeIp.UNSET

    def test_every_single_position_case_flip_is_unset(self):
        key = "anonymizeIp"
        for i in range(len(key)):
            flipped = key[:i] + key[i].swapcase() + key[i:][1:]
            assert flipped != key
            snap = GlobalSnapshot(
                context_id="main",
                globals={"ga": analytics_shape([{"trackingId": "UA-1-1", flipped: True}])},
            )
            [tracker] = extract_trackers("ga", snap, Library.ANALYTICS_JS).trackers
            assert tracker.anonymize_ip is AnonymizeIp.UNSET, flipped

    def test_explicit_false_is_false_not_unset(self):
        snap = GlobalSnapshot(
            context_id="main",
            globals={"ga": analytics_shape([{"trackingId": "UA-1-1", "anonymizeIp": False}])},
        )
        [tracker] = extract_trackers("ga", snap, Library.ANALYTICS_JS).trackers
        assert tracker.anonymize_ip is AnonymizeIp.FALSE

    def test_missing_registry_is_flagged_distinct_from_empty(self):
        snap = GlobalSnapshot(
            context_id="main", globals={"ga": analytics_shape(include_registry=False)}
        )
        result = extract_trackers("ga", snap, Library.ANALYTICS_JS)
        assert result.trackers == ()
        assert result.registry_missing
        assert result.diagnostics

        empty = GlobalSnapshot(context_id="main", globals={"ga": analytics_shape([])})
        result = extract_trackers("ga", empty, Library.ANALYTICS_JS)
        assert result.trackers == ()
        assert not result.registry_missing

    def test_context_id_recorded_in_name(self):
        snap = GlobalSnapshot(
            context_id="frame-7",
            globals={"ga": analytics_shape([{"trackingId": "UA-3-3"}])},
        )
        [tracker] = extract_trackers("ga", snap, Library.ANALYTICS_JS).trackers
        assert tracker.name.startswith("frame-7:")


class TestWireFormat:
    def test_snapshot_round_trip(self):
        snap = GlobalSnapshot(
            context_id="main",
            globals={"ga": analytics_shape([{"trackingId": "UA-1-1", "anonymizeIp": True}])},
        )
        again = snapshot_from_json(snapshot_to_json(snap))
        assert again == snap

    def test_primitive_literals_become_value_shapes(self):
        shape = shape_from_json({"kind": "object", "attributes": {"x": 5, "s": "hi"}})
        assert shape.attributes["x"].kind is ValueKind.PRIMITIVE
        assert shape.attributes["x"].value == 5
        assert shape.attributes["s"].value == "hi"

    def test_depth_limit_drops_deep_structure(self):
        deep = {"kind": "object", "attributes": {}}
        node = deep
        for _ in range(6):
            node["attributes"]["n"] = {"kind": "object", "attributes": {}}
            node = node["attributes"]["n"]
        shape = shape_from_json(deep)
        level, depth = shape, 0
        while level.attributes:
            level = level.attributes.get("n")
            depth += 1
        assert depth <= 3

    def test_method_attribute_overlap_rejected(self):
        with pytest.raises(ValueError):
            ValueShape(
                kind=ValueKind.OBJECT,
                method_names=frozenset({"a"}),
                attribute_names=frozenset({"a"}),
            )

    def test_default_signatures_load(self):
        sigs = default_signatures()
        assert {s.library for s in sigs} == {Library.ANALYTICS_JS, Library.GA_JS}
        assert any(s.matches(analytics_shape()) for s in sigs)
