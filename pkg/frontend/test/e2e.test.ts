/**
 * End-to-end: the UI flow against the real fixture-backed scan service.
 *
 * Spawns `python3 -m checkga.cli serve --fixture-dir <tmp>`, drives the
 * typed client and controller over real HTTP, swaps the fixture on disk
 * (the owner "fixes" the site) and verifies a rescan flips the summary
 * within one polling cycle.
 */

import { spawn, spawnSync, ChildProcess } from "node:child_process";
import { copyFileSync, mkdtempSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ScanApiClient } from "../src/api.js";
import { ScanController } from "../src/controller.js";
import { renderReport, renderSummary } from "../src/render.js";

const PYTHON = "python3";
const PORT = 8873;
const BASE = `http://127.0.0.1:${PORT}`;
const URL_UNDER_TEST = "https://rescan.example.de/";

const pythonAvailable =
  spawnSync(PYTHON, ["-c", "import checkga"], { encoding: "utf-8" }).status === 0;

const FIXTURE_SCRIPT = `
import sys
from datetime import datetime, timezone
from checkga.session import GaRequest, PageTrace, TraceStatus, record_fixture
from checkga.trackers import GlobalSnapshot, ValueKind, ValueShape

out = sys.argv[1]
url = "https://rescan.example.de/"
when = datetime(2024, 7, 8, 9, 0, tzinfo=timezone.utc)

def snapshot(config):
    item = ValueShape(
        kind=ValueKind.OBJECT,
        attribute_names=frozenset(config),
        attributes={k: ValueShape(kind=ValueKind.PRIMITIVE, value=v) for k, v in config.items()},
    )
    ga = ValueShape(
        kind=ValueKind.FUNCTION,
        method_names=frozenset({"getAll", "create"}),
        attribute_names=frozenset({"q", "trackers"}),
        attributes={
            "q": ValueShape(kind=ValueKind.ARRAY),
            "trackers": ValueShape(
                kind=ValueKind.ARRAY, attribute_names=frozenset({"0"}), attributes={"0": item}
            ),
        },
    )
    return GlobalSnapshot(context_id="main", globals={"ga": ga})

def trace(aip, config):
    hit = "https://www.google-analytics.com/collect?v=1&t=pageview&tid=UA-5-5"
    if aip:
        hit += "&aip=1"
    return PageTrace(
        requested_url=url,
        final_url=url,
        redirect_chain=(url,),
        status=TraceStatus.LOADED,
        ga_requests=(GaRequest(ts=when, url=hit),),
        snapshots=(snapshot(config),),
        captured_at=when,
    )

record_fixture(trace(False, {"trackingId": "UA-5-5", "name": "t0"}), out + "/broken.json")
record_fixture(
    trace(True, {"trackingId": "UA-5-5", "name": "t0", "anonymizeIp": True}),
    out + "/fixed.json",
)
`;

let server: ChildProcess | null = null;
let fixtureDir = "";

async function waitForHealth(): Promise<void> {
  for (let attempt = 0; attempt < 100; attempt++) {
    try {
      const response = await fetch(`${BASE}/api/health`);
      if (response.ok) return;
    } catch {
      // not up yet
    }
    await new Promise((resolve) => setTimeout(resolve, 100));
  }
  throw new Error("scan service never became healthy");
}

describe.skipIf(!pythonAvailable)("scan loop against the fixture-backed service", () => {
  beforeAll(async () => {
    fixtureDir = mkdtempSync(join(tmpdir(), "checkga-ui-"));
    const generated = spawnSync(PYTHON, ["-c", FIXTURE_SCRIPT, fixtureDir], {
      encoding: "utf-8",
    });
    expect(generated.status, generated.stderr).toBe(0);
    copyFileSync(join(fixtureDir, "broken.json"), join(fixtureDir, "rescan.example.de.json"));

    server = spawn(
      PYTHON,
      ["-m", "checkga.cli", "serve", "--port", String(PORT), "--fixture-dir", fixtureDir],
      { stdio: "ignore" },
    );
    await waitForHealth();
  }, 30_000);

  afterAll(() => {
    server?.kill();
  });

  it("renders the flagged rows, then flips to compliant after a rescan", async () => {
    const api = new ScanApiClient(BASE);
    const controller = new ScanController(api, { intervalMs: 150, timeoutMs: 15_000 });

    const first = await controller.submit(URL_UNDER_TEST);
    expect(first.phase).toBe("report");
    if (first.phase !== "report") return;
    expect(first.report.verdict).toBe("non_compliant");

    const html = renderReport(first.report);
    expect(html).toContain("summary-bad");
    expect(html.match(/<tr class="flagged">/g)).toHaveLength(2);
    expect(html).toContain('<td class="aip">absent</td>');
    expect(html).toContain("anonymizeIp not set");

    // the owner fixes the site: swap the stored trace for this host
    copyFileSync(join(fixtureDir, "fixed.json"), join(fixtureDir, "rescan.example.de.json"));

    const second = await controller.rescan();
    expect(second.phase).toBe("report");
    if (second.phase !== "report") return;
    expect(second.report.verdict).toBe("compliant_anonymized");
    expect(renderSummary(second.report)).toContain("summary-good");
    expect(renderReport(second.report).match(/<tr class="flagged">/g)).toBeNull();
  }, 30_000);

  it("serves the help content the help page renders", async () => {
    const api = new ScanApiClient(BASE);
    const help = await api.getHelp();
    expect(help.pitfalls.length).toBe(6);
    expect(help.examples.corrected).toContain("anonymizeIp");
  });
});
