"""Self-service scan service.

HTTP surface (all UTF-8 JSON):

    POST /api/scan {url}        -> {scan_id, session_token}
    GET  /api/scan/{scan_id}    -> report JSON, or {status: "pending"}
    GET  /api/health            -> {ok: true}
    GET  /api/help              -> pitfall catalog for the help page

Scans run on a bounded worker pool. The client address is truncated before
anything is persisted; per-visit session tokens stand in for a transport-
layer session identity (no cookies are set). Rate limits protect both the
service (per client) and the scanned sites (per-target politeness window).
"""

from __future__ import annotations

import secrets
import threading
import uuid
from concurrent.futures import ThreadPoolExecutor
from contextlib import asynccontextmanager
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from importlib import resources
from pathlib import Path
from urllib.parse import urlsplit

from fastapi import FastAPI, Header, HTTPException, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .domains import registrable_domain
from .hits import truncate_ip
from .session import FixtureBackend, SessionBackend, SessionConfig, offline_trace
from .usage import RecordStore, ScanRecord
from .verdict import Verdict, assess


@dataclass
class ServiceConfig:
    backend: SessionBackend
    session_config: SessionConfig = field(default_factory=SessionConfig)
    record_store_path: str | Path | None = None
    per_client_per_hour: int = 30
    per_target_min_interval_s: float = 10.0
    retention_days: int = 30
    workers: int = 2


class ScanRequest(BaseModel):
    url: str


@dataclass
class _ScanJob:
    record: ScanRecord
    report_json: dict | None = None  # None while pending

    @property
    def pending(self) -> bool:
        return self.report_json is None


def _valid_target(url: str) -> bool:
    try:
        parts = urlsplit(url)
    except ValueError:
        return False
    return parts.scheme in ("http", "https") and bool(parts.hostname)


class ScanService:
    def __init__(self, config: ServiceConfig):
        self.config = config
        self._jobs: dict[str, _ScanJob] = {}
        self._lock = threading.Lock()
        self._pool = ThreadPoolExecutor(max_workers=config.workers)
        self._client_windows: dict[bytes, list[datetime]] = {}
        self._target_last: dict[str, datetime] = {}
        self._store = (
            RecordStore(config.record_store_path) if config.record_store_path else None
        )

    # -- rate limiting -------------------------------------------------

    def _check_client(self, client_key: bytes, now: datetime) -> float | None:
        """Returns seconds to wait, or None when the request may proceed."""
        window = self._client_windows.setdefault(client_key, [])
        cutoff = now - timedelta(hours=1)
        window[:] = [t for t in window if t > cutoff]
        if len(window) >= self.config.per_client_per_hour:
            return (window[0] - cutoff).total_seconds()
        window.append(now)
        return None

    def _check_target(self, host: str, now: datetime) -> float | None:
        last = self._target_last.get(host)
        interval = self.config.per_target_min_interval_s
        if last is not None:
            elapsed = (now - last).total_seconds()
            if elapsed < interval:
                return interval - elapsed
        self._target_last[host] = now
        return None

    # -- scan lifecycle --------------------------------------------------

    def submit(self, url: str, client_ip: str, session_token: str | None) -> tuple[str, str]:
        if not _valid_target(url):
            raise HTTPException(status_code=400, detail="URL must be absolute http(s)")
        now = datetime.now(timezone.utc)
        token = session_token or secrets.token_urlsafe(16)
        try:
            truncated = truncate_ip(client_ip)
        except ValueError:
            # non-IP peer (unix socket, test transport): a zero address keeps
            # the privacy invariant without inventing identity
            truncated = truncate_ip("0.0.0.0")
        host = (urlsplit(url).hostname or "").lower()

        with self._lock:
            self._purge(now)
            wait = self._check_client(truncated.truncated_bytes, now)
            if wait is None:
                wait = self._check_target(host, now)
            if wait is not None:
                raise HTTPException(
                    status_code=429,
                    detail="rate limited; retry later",
                    headers={"Retry-After": str(max(1, int(wait + 0.5)))},
                )
            scan_id = uuid.uuid4().hex
            record = ScanRecord(
                scan_id=scan_id,
                url=url,
                verdict=Verdict.OFFLINE,  # placeholder until the capture finishes
                scanned_at=now,
                client_ip_truncated=truncated,
                session_token=token,
            )
            self._jobs[scan_id] = _ScanJob(record=record)

        self._pool.submit(self._run, scan_id, url)
        return scan_id, token

    def _run(self, scan_id: str, url: str) -> None:
        try:
            trace = self.config.backend.capture(url, self.config.session_config)
        except Exception:
            trace = offline_trace(url)
        report = assess(trace)
        final_host = urlsplit(trace.final_url).hostname or "" if trace.final_url else ""
        with self._lock:
            job = self._jobs.get(scan_id)
            if job is None:
                return
            job.record = ScanRecord(
                scan_id=job.record.scan_id,
                url=job.record.url,
                verdict=report.verdict,
                scanned_at=job.record.scanned_at,
                client_ip_truncated=job.record.client_ip_truncated,
                session_token=job.record.session_token,
                final_domain=registrable_domain(final_host) if final_host else "",
            )
            job.report_json = {
                "scan_id": scan_id,
                "url": url,
                "scanned_at": job.record.scanned_at.isoformat(),
                **report.to_json(),
            }
            if self._store is not None:
                self._store.append(job.record)

    def status(self, scan_id: str) -> dict:
        with self._lock:
            job = self._jobs.get(scan_id)
            if job is None:
                raise HTTPException(status_code=404, detail="unknown scan id")
            if job.pending:
                return {"status": "pending", "scan_id": scan_id}
            return {"status": "done", **job.report_json}

    def _purge(self, now: datetime) -> None:
        horizon = now - timedelta(days=self.config.retention_days)
        stale = [sid for sid, job in self._jobs.items() if job.record.scanned_at < horizon]
        for sid in stale:
            del self._jobs[sid]

    def shutdown(self) -> None:
        self._pool.shutdown(wait=True)


def help_content() -> dict:
    """Pitfall catalog with code examples, rendered by the help page."""
    examples = resources.files("checkga").joinpath("data/examples")
    return {
        "title": "Enabling IP anonymization correctly",
        "pitfalls": [
            {
                "id": "explicit-activation",
                "text": "IP anonymization is off by default and must be enabled "
                "explicitly on every site, including sites that added Google "
                "Analytics years ago.",
            },
            {
                "id": "inclusion-method",
                "text": "How to enable it depends on how the library is included: "
                "a <script> snippet needs extra JavaScript, a tag-manager "
                "deployment needs the option in the manager's own interface.",
            },
            {
                "id": "library-versions",
                "text": "analytics.js, the older ga.js and the gtag.js loader each "
                "use different calls to enable the option.",
            },
            {
                "id": "case-sensitive-spelling",
                "text": "The option is case-sensitive: 'anonymizeIp' with a lower-"
                "case p. gtag.js instead calls it 'anonymize_ip'. Misspelling "
                "raises no error; the option is silently ignored.",
            },
            {
                "id": "ordering",
                "text": "Set the option after configuring the tracking ID and "
                "before the first hit is sent; too early or too late also fails "
                "silently.",
            },
            {
                "id": "per-tracker",
                "text": "Every tracker defined on a page needs the option "
                "separately.",
            },
        ],
        "examples": {
            "misconfigured": examples.joinpath("misconfigured.js").read_text(),
            "corrected": examples.joinpath("corrected.js").read_text(),
        },
    }


def create_app(config: ServiceConfig) -> FastAPI:
    service = ScanService(config)

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        yield
        service.shutdown()

    app = FastAPI(title="CheckGA", version="0.1.0", lifespan=lifespan)
    app.state.service = service

    @app.post("/api/scan")
    def start_scan(
        body: ScanRequest,
        request: Request,
        x_scan_session: str | None = Header(default=None),
    ) -> JSONResponse:
        client_ip = request.client.host if request.client else "127.0.0.1"
        scan_id, token = service.submit(body.url, client_ip, x_scan_session)
        return JSONResponse({"scan_id": scan_id, "session_token": token})

    @app.get("/api/scan/{scan_id}")
    def scan_status(scan_id: str) -> JSONResponse:
        return JSONResponse(service.status(scan_id))

    @app.get("/api/health")
    def health() -> dict:
        return {"ok": True}

    @app.get("/api/help")
    def help_page() -> dict:
        return help_content()

    return app


def create_fixture_app(
    fixture_dir: str | Path,
    record_store_path: str | Path | None = None,
    per_target_min_interval_s: float = 0.0,
) -> FastAPI:
    """App bound to the deterministic fixture backend (demo and tests)."""
    return create_app(
        ServiceConfig(
            backend=FixtureBackend(fixture_dir),
            record_store_path=record_store_path,
            per_target_min_interval_s=per_target_min_interval_s,
        )
    )
