"""Linting of GA embed snippets for IP-anonymization misconfigurations.

The GA embed APIs are easy to get wrong in ways that fail silently: the
``anonymizeIp`` option is ignored when misspelled, when set before the
tracker is created, or when set after the first hit has already been sent;
gtag.js spells the option ``anonymize_ip`` instead; and every tracker on a
page needs its own option.

The parser recognizes the literal invocation forms ``ga(...)``,
``gtag(...)`` and ``_gaq.push([...])`` (optionally ``window.``-prefixed).
Dynamically constructed calls and non-literal arguments become opaque
markers and never produce findings: the linter guarantees zero false
positives at the price of false negatives.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum


class CallApi(Enum):
    GA_QUEUE = "ga_queue"
    GTAG_CONFIG = "gtag_config"
    GAQ_PUSH = "gaq_push"


class _Opaque:
    """Marker for arguments (or whole calls) the parser cannot prove literal."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "<opaque>"


OPAQUE = _Opaque()


@dataclass(frozen=True)
class GaCall:
    api: CallApi
    command: str | None
    args: tuple
    span: tuple[int, int]  # (line, column), 1-based
    opaque: bool = False


class FindingKind(Enum):
    SET_BEFORE_CREATE = "set-before-create"
    MISSPELLED_OPTION = "misspelled-option"
    SET_AFTER_SEND = "set-after-send"
    MISSING_AIP = "missing-aip"
    UNCOVERED_TRACKER = "uncovered-tracker"
    GTAG_WRONG_OPTION_NAME = "gtag-wrong-option-name"


@dataclass(frozen=True)
class LintFinding:
    kind: FindingKind
    span: tuple[int, int]
    message: str
    tracker_id: str | None = None

    @property
    def code(self) -> str:
        return self.kind.value

    def to_json(self) -> dict:
        return {
            "code": self.code,
            "line": self.span[0],
            "column": self.span[1],
            "message": self.message,
            "tracker_id": self.tracker_id,
        }


# ---------------------------------------------------------------------------
# Tokenizer / literal-argument parser
# ---------------------------------------------------------------------------

_IDENT_CHARS = set("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_$")


class _Scanner:
    def __init__(self, source: str):
        self.src = source
        self.n = len(source)
        self.i = 0
        self.line = 1
        self.col = 1

    def advance(self, count: int = 1) -> None:
        for _ in range(count):
            if self.i >= self.n:
                return
            if self.src[self.i] == "\n":
                self.line += 1
                self.col = 1
            else:
                self.col += 1
            self.i += 1

    def skip_string(self) -> None:
        quote = self.src[self.i]
        self.advance()
        while self.i < self.n:
            ch = self.src[self.i]
            if ch == "\\":
                self.advance(2)
                continue
            self.advance()
            if ch == quote:
                return

    def skip_line_comment(self) -> None:
        while self.i < self.n and self.src[self.i] != "\n":
            self.advance()

    def skip_block_comment(self) -> None:
        self.advance(2)
        while self.i < self.n:
            if self.src.startswith("*/", self.i):
                self.advance(2)
                return
            self.advance()

    def skip_ws_and_comments(self) -> None:
        while self.i < self.n:
            ch = self.src[self.i]
            if ch in " \t\r\n":
                self.advance()
            elif self.src.startswith("//", self.i):
                self.skip_line_comment()
            elif self.src.startswith("/*", self.i):
                self.skip_block_comment()
            else:
                return


_CALL_HEADS = ("ga", "gtag")


def parse_snippet(source: str) -> list[GaCall]:
    """All recognizable GA API invocations, in source order.

    Unparseable invocations become opaque call markers; the function never
    raises on malformed input.
    """
    calls: list[GaCall] = []
    sc = _Scanner(source)
    while sc.i < sc.n:
        ch = sc.src[sc.i]
        if ch in "'\"`":
            sc.skip_string()
            continue
        if sc.src.startswith("//", sc.i):
            sc.skip_line_comment()
            continue
        if sc.src.startswith("/*", sc.i):
            sc.skip_block_comment()
            continue
        if ch in _IDENT_CHARS and not _is_ident_char(sc.src, sc.i - 1):
            call = _try_parse_call(sc)
            if call is not None:
                calls.extend(call)
                continue
        sc.advance()
    return calls


def _is_ident_char(src: str, i: int) -> bool:
    return 0 <= i < len(src) and (src[i] in _IDENT_CHARS or src[i] == ".")


def _read_ident(src: str, i: int) -> str:
    j = i
    while j < len(src) and src[j] in _IDENT_CHARS:
        j += 1
    return src[i:j]


def _try_parse_call(sc: _Scanner) -> list[GaCall] | None:
    """Parse an invocation starting at the scanner position, if any.

    Returns a list of calls (``_gaq.push`` may carry several command arrays),
    or None when the position does not start a recognized invocation. The
    scanner is advanced past the call on success.
    """
    ident = _read_ident(sc.src, sc.i)
    start_i, start_line, start_col = sc.i, sc.line, sc.col
    head = ident
    offset = sc.i + len(ident)

    if ident == "window":
        # allow window.ga(... / window.gtag(... / window._gaq.push(...
        if offset < sc.n and sc.src[offset] == ".":
            head = _read_ident(sc.src, offset + 1)
            offset = offset + 1 + len(head)
        else:
            return None

    if head in _CALL_HEADS:
        api = CallApi.GA_QUEUE if head == "ga" else CallApi.GTAG_CONFIG
    elif head == "_gaq":
        if not sc.src.startswith(".push", offset):
            return None
        offset += len(".push")
        api = CallApi.GAQ_PUSH
    else:
        return None

    j = _skip_ws(sc.src, offset)
    if j >= sc.n or sc.src[j] != "(":
        return None

    span = (start_line, start_col)
    args, end = _parse_arg_list(sc.src, j + 1)
    if args is None:
        # unparseable invocation: opaque marker, resume after the "("
        sc.advance(j + 1 - start_i)
        return [GaCall(api=api, command=None, args=(), span=span, opaque=True)]
    sc.advance(end - start_i)
    return _calls_from_args(api, args, span)


def _calls_from_args(api: CallApi, args: list, span: tuple[int, int]) -> list[GaCall]:
    if api is CallApi.GAQ_PUSH:
        calls = []
        for arg in args:
            if isinstance(arg, list) and arg and isinstance(arg[0], str):
                calls.append(
                    GaCall(api=api, command=arg[0], args=tuple(arg[1:]), span=span)
                )
            else:
                calls.append(GaCall(api=api, command=None, args=(), span=span, opaque=True))
        return calls or [GaCall(api=api, command=None, args=(), span=span, opaque=True)]
    if args and isinstance(args[0], str):
        return [GaCall(api=api, command=args[0], args=tuple(args[1:]), span=span)]
    return [GaCall(api=api, command=None, args=(), span=span, opaque=True)]


def _skip_ws(src: str, i: int) -> int:
    while i < len(src) and src[i] in " \t\r\n":
        i += 1
    return i


def _parse_arg_list(src: str, i: int) -> tuple[list | None, int]:
    """Comma-separated literal values up to the matching ')'.

    Returns (args, index-after-close-paren), or (None, i) when the call is
    structurally broken (unbalanced before EOF).
    """
    args: list = []
    i = _skip_ws_comments(src, i)
    if i < len(src) and src[i] == ")":
        return args, i + 1
    while i < len(src):
        value, i = _parse_value(src, i)
        args.append(value)
        i = _skip_ws_comments(src, i)
        if i >= len(src):
            return None, i
        if src[i] == ",":
            i = _skip_ws_comments(src, i + 1)
            continue
        if src[i] == ")":
            return args, i + 1
        # junk after a value (e.g. `1 + x`): treat the argument as opaque
        args[-1] = OPAQUE
        i = _skip_to_arg_end(src, i)
        if i >= len(src):
            return None, i
        if src[i] == ",":
            i = _skip_ws_comments(src, i + 1)
            continue
        return args, i + 1
    return None, i


def _skip_ws_comments(src: str, i: int) -> int:
    while i < len(src):
        if src[i] in " \t\r\n":
            i += 1
        elif src.startswith("//", i):
            while i < len(src) and src[i] != "\n":
                i += 1
        elif src.startswith("/*", i):
            end = src.find("*/", i + 2)
            i = len(src) if end < 0 else end + 2
        else:
            return i
    return i


def _parse_value(src: str, i: int):
    i = _skip_ws_comments(src, i)
    if i >= len(src):
        return OPAQUE, i
    ch = src[i]
    if ch in "'\"":
        return _parse_string(src, i)
    if ch == "{":
        return _parse_object(src, i)
    if ch == "[":
        return _parse_array(src, i)
    if ch.isdigit() or (ch in "+-." and i + 1 < len(src) and src[i + 1].isdigit()):
        return _parse_number(src, i)
    ident = _read_ident(src, i)
    if ident in ("true", "false"):
        return ident == "true", i + len(ident)
    if ident in ("null", "undefined"):
        return None, i + len(ident)
    return OPAQUE, _skip_to_arg_end(src, i)


def _parse_string(src: str, i: int):
    quote = src[i]
    i += 1
    out = []
    while i < len(src):
        ch = src[i]
        if ch == "\\" and i + 1 < len(src):
            nxt = src[i + 1]
            out.append({"n": "\n", "t": "\t", "r": "\r"}.get(nxt, nxt))
            i += 2
            continue
        if ch == quote:
            return "".join(out), i + 1
        out.append(ch)
        i += 1
    return OPAQUE, i


def _parse_number(src: str, i: int):
    j = i
    if src[j] in "+-":
        j += 1
    while j < len(src) and (src[j].isdigit() or src[j] in ".eE" or (src[j] in "+-" and src[j - 1] in "eE")):
        j += 1
    text = src[i:j]
    try:
        return (int(text) if text.lstrip("+-").isdigit() else float(text)), j
    except ValueError:
        return OPAQUE, j


def _parse_object(src: str, i: int):
    obj: dict = {}
    i += 1
    i = _skip_ws_comments(src, i)
    if i < len(src) and src[i] == "}":
        return obj, i + 1
    while i < len(src):
        i = _skip_ws_comments(src, i)
        if i >= len(src):
            return OPAQUE, i
        ch = src[i]
        if ch in "'\"":
            key, i = _parse_string(src, i)
            if key is OPAQUE:
                return OPAQUE, i
        else:
            key = _read_ident(src, i)
            if not key:
                return OPAQUE, _skip_balanced(src, i, "}")
            i += len(key)
        i = _skip_ws_comments(src, i)
        if i >= len(src) or src[i] != ":":
            return OPAQUE, _skip_balanced(src, i, "}")
        value, i = _parse_value(src, i + 1)
        obj[key] = value
        i = _skip_ws_comments(src, i)
        if i < len(src) and src[i] == ",":
            i += 1
            i = _skip_ws_comments(src, i)
            if i < len(src) and src[i] == "}":
                return obj, i + 1
            continue
        if i < len(src) and src[i] == "}":
            return obj, i + 1
        return OPAQUE, _skip_balanced(src, i, "}")
    return OPAQUE, i


def _parse_array(src: str, i: int):
    arr: list = []
    i += 1
    i = _skip_ws_comments(src, i)
    if i < len(src) and src[i] == "]":
        return arr, i + 1
    while i < len(src):
        value, i = _parse_value(src, i)
        arr.append(value)
        i = _skip_ws_comments(src, i)
        if i < len(src) and src[i] == ",":
            i += 1
            i = _skip_ws_comments(src, i)
            if i < len(src) and src[i] == "]":
                return arr, i + 1
            continue
        if i < len(src) and src[i] == "]":
            return arr, i + 1
        return OPAQUE, _skip_balanced(src, i, "]")
    return OPAQUE, i


def _skip_to_arg_end(src: str, i: int) -> int:
    """Advance over one opaque expression: stop at a ',' or ')' at depth 0."""
    depth = 0
    while i < len(src):
        ch = src[i]
        if ch in "'\"`":
            quote = ch
            i += 1
            while i < len(src):
                if src[i] == "\\":
                    i += 2
                    continue
                if src[i] == quote:
                    i += 1
                    break
                i += 1
            continue
        if ch in "([{":
            depth += 1
        elif ch in ")]}":
            if depth == 0:
                return i
            depth -= 1
        elif ch == "," and depth == 0:
            return i
        i += 1
    return i


def _skip_balanced(src: str, i: int, closer: str) -> int:
    depth = 1
    while i < len(src):
        ch = src[i]
        if ch in "'\"`":
            quote = ch
            i += 1
            while i < len(src):
                if src[i] == "\\":
                    i += 2
                    continue
                if src[i] == quote:
                    i += 1
                    break
                i += 1
            continue
        if ch in "([{":
            depth += 1
        elif ch in ")]}":
            depth -= 1
            if depth == 0:
                return i + 1
        i += 1
    return i


# ---------------------------------------------------------------------------
# Rule engine
# ---------------------------------------------------------------------------

_OPTION = "anonymizeIp"
_GTAG_OPTION = "anonymize_ip"
_GAQ_GLOBAL = "_gat._anonymizeIp"

_MESSAGES = {
    FindingKind.SET_BEFORE_CREATE: "anonymizeIp set before the tracking ID is configured; the option is ignored",
    FindingKind.MISSPELLED_OPTION: "anonymization option misspelled; the correct key is 'anonymizeIp' (case-sensitive)",
    FindingKind.SET_AFTER_SEND: "anonymizeIp set after a hit was already sent; earlier requests carry the full IP",
    FindingKind.MISSING_AIP: "GA is used but no IP-anonymization option is set anywhere",
    FindingKind.UNCOVERED_TRACKER: "tracker sends hits without its own anonymizeIp option; each tracker needs one",
    FindingKind.GTAG_WRONG_OPTION_NAME: "gtag.js spells the option 'anonymize_ip'; 'anonymizeIp' is ignored here",
}


@dataclass
class _Tracker:
    name: str
    created_idx: int | None = None
    created_span: tuple[int, int] | None = None
    first_send_idx: int | None = None
    valid_set: bool = False
    attempted: bool = False  # any anonymization attempt addressed here


def _finding(kind: FindingKind, span: tuple[int, int], tracker_id: str | None = None) -> LintFinding:
    return LintFinding(kind=kind, span=span, message=_MESSAGES[kind], tracker_id=tracker_id)


def lint(calls: list[GaCall]) -> list[LintFinding]:
    """Evaluate the misconfiguration catalog over a call sequence."""
    findings: list[LintFinding] = []
    ga: dict[str, _Tracker] = {}
    gaq: dict[str, _Tracker] = {}
    gtag_targets: dict[str, _Tracker] = {}
    gaq_global_anonymize_idx: int | None = None
    gaq_global_attempted = False
    gtag_global_set = False
    any_attempt = False
    any_usage_span: tuple[int, int] | None = None
    opaque_create = False

    def tracker(table: dict[str, _Tracker], name: str) -> _Tracker:
        if name not in table:
            table[name] = _Tracker(name=name)
        return table[name]

    for idx, call in enumerate(calls):
        if call.opaque or call.command is None:
            continue
        if call.api is CallApi.GA_QUEUE:
            name, base = _split_command(call.command)
            if base == "create":
                any_usage_span = any_usage_span or call.span
                opts = next((a for a in call.args if isinstance(a, dict)), None)
                if any(a is OPAQUE for a in call.args):
                    opaque_create = True
                created_name = name
                if opts and isinstance(opts.get("name"), str):
                    created_name = opts["name"]
                t = tracker(ga, created_name)
                if t.created_idx is None:
                    t.created_idx = idx
                    t.created_span = call.span
            elif base == "set":
                for key, value in _set_entries(call.args):
                    if key is OPAQUE:
                        t = tracker(ga, name)
                        t.attempted = True
                        any_attempt = True
                        continue
                    verdict = _classify_option_key(key, CallApi.GA_QUEUE)
                    if verdict is None:
                        continue
                    any_attempt = True
                    t = tracker(ga, name)
                    t.attempted = True
                    if verdict == "misspelled":
                        findings.append(_finding(FindingKind.MISSPELLED_OPTION, call.span, name))
                        continue
                    # correctly spelled anonymizeIp
                    if t.created_idx is None and not opaque_create:
                        findings.append(_finding(FindingKind.SET_BEFORE_CREATE, call.span, name))
                        continue
                    if t.created_idx is None:
                        continue  # an opaque create may have created it
                    if t.first_send_idx is not None and not t.valid_set:
                        findings.append(_finding(FindingKind.SET_AFTER_SEND, call.span, name))
                        continue
                    if t.first_send_idx is None and (value is True or value is OPAQUE):
                        t.valid_set = True
            elif base == "send":
                any_usage_span = any_usage_span or call.span
                t = tracker(ga, name)
                if t.first_send_idx is None:
                    t.first_send_idx = idx
        elif call.api is CallApi.GAQ_PUSH:
            cmd = call.command
            prefix, base = _split_gaq_command(cmd)
            if _is_gaq_anonymize(cmd):
                any_attempt = True
                gaq_global_attempted = True
                if cmd == _GAQ_GLOBAL:
                    if gaq_global_anonymize_idx is None:
                        gaq_global_anonymize_idx = idx
                else:
                    findings.append(_finding(FindingKind.MISSPELLED_OPTION, call.span))
            elif base == "_setAccount":
                any_usage_span = any_usage_span or call.span
                t = tracker(gaq, prefix)
                if t.created_idx is None:
                    t.created_idx = idx
                    t.created_span = call.span
            elif base in ("_trackPageview", "_trackEvent", "_trackPageLoadTime"):
                any_usage_span = any_usage_span or call.span
                t = tracker(gaq, prefix)
                if t.first_send_idx is None:
                    t.first_send_idx = idx
            elif base == "_set":
                if call.args and isinstance(call.args[0], str) and (
                    _classify_option_key(call.args[0], CallApi.GAQ_PUSH)
                ):
                    # ineffective in this API; counted as an attempt only
                    t = tracker(gaq, prefix)
                    t.attempted = True
                    any_attempt = True
        elif call.api is CallApi.GTAG_CONFIG:
            if call.command == "config":
                any_usage_span = any_usage_span or call.span
                target = call.args[0] if call.args and isinstance(call.args[0], str) else None
                opts = next((a for a in call.args if isinstance(a, dict)), None)
                t = tracker(gtag_targets, target or f"gtag#{idx}")
                t.created_idx = idx
                t.created_span = call.span
                t.first_send_idx = idx  # config itself fires a hit
                if gtag_global_set:
                    t.valid_set = True
                if any(a is OPAQUE for a in call.args):
                    t.attempted = True
                if opts is None:
                    continue
                covered, attempted, opt_findings = _gtag_options(opts, call.span, target)
                findings.extend(opt_findings)
                t.valid_set = t.valid_set or covered
                t.attempted = t.attempted or attempted
                any_attempt = any_attempt or attempted or covered
            elif call.command == "set":
                opts = next((a for a in call.args if isinstance(a, dict)), None)
                if opts is not None:
                    covered, attempted, opt_findings = _gtag_options(opts, call.span, None)
                    findings.extend(opt_findings)
                    gtag_global_set = gtag_global_set or covered
                    any_attempt = any_attempt or attempted or covered

    # gaq trackers: the legacy global call covers a tracker when pushed
    # before its first track command (it may precede _setAccount).
    for t in gaq.values():
        if gaq_global_anonymize_idx is not None and (
            t.first_send_idx is None or gaq_global_anonymize_idx < t.first_send_idx
        ):
            t.valid_set = True
        if gaq_global_attempted:
            t.attempted = True

    uncovered = [
        t
        for table in (ga, gaq, gtag_targets)
        for t in table.values()
        if t.created_idx is not None
        and t.first_send_idx is not None
        and not t.valid_set
        and not t.attempted
    ]

    if any_usage_span is not None and not any_attempt:
        findings.append(_finding(FindingKind.MISSING_AIP, any_usage_span))
    else:
        for t in uncovered:
            findings.append(
                _finding(FindingKind.UNCOVERED_TRACKER, t.created_span or (1, 1), t.name)
            )

    findings.sort(key=lambda f: (f.span, f.kind.value))
    return findings


def lint_source(source: str) -> list[LintFinding]:
    return lint(parse_snippet(source))


def _split_command(command: str) -> tuple[str, str]:
    """'t2.set' -> ('t2', 'set'); 'set' -> ('t0', 'set'). The default
    tracker is named t0."""
    if "." in command:
        name, _, base = command.partition(".")
        return name, base
    return "t0", command


def _split_gaq_command(command: str) -> tuple[str, str]:
    if "." in command and not command.startswith("_gat."):
        name, _, base = command.partition(".")
        return name, base
    return "t0", command


def _is_gaq_anonymize(command: str) -> bool:
    return command.lower() == _GAQ_GLOBAL.lower()


def _set_entries(args: tuple) -> list[tuple[object, object]]:
    """Option entries of a `set` call: (key, value) or ({k:v,...},)."""
    if not args:
        return []
    first = args[0]
    if isinstance(first, dict):
        return list(first.items())
    value = args[1] if len(args) > 1 else None
    return [(first, value)]


def _classify_option_key(key: object, api: CallApi) -> str | None:
    """None: unrelated key. 'proper': the exact option for this API.
    'misspelled': a recognizable but ineffective variant."""
    if not isinstance(key, str):
        return None
    lowered = key.lower()
    if api is CallApi.GTAG_CONFIG:
        if key == _GTAG_OPTION:
            return "proper"
        if lowered in (_OPTION.lower(), _GTAG_OPTION):
            return "misspelled"
        return None
    if key == _OPTION:
        return "proper"
    if lowered in (_OPTION.lower(), _GTAG_OPTION):
        return "misspelled"
    return None


def _gtag_options(
    opts: dict, span: tuple[int, int], target: str | None
) -> tuple[bool, bool, list[LintFinding]]:
    """Evaluate a gtag options object: (covered, attempted, findings)."""
    covered = False
    attempted = False
    findings: list[LintFinding] = []
    for key, value in opts.items():
        if key is OPAQUE or not isinstance(key, str):
            attempted = True
            continue
        lowered = key.lower()
        if key == _GTAG_OPTION:
            attempted = True
            if value is True or value is OPAQUE:
                covered = True
        elif lowered == _OPTION.lower():
            attempted = True
            findings.append(_finding(FindingKind.GTAG_WRONG_OPTION_NAME, span, target))
        elif lowered == _GTAG_OPTION:
            attempted = True
            findings.append(_finding(FindingKind.MISSPELLED_OPTION, span, target))
    return covered, attempted, findings
