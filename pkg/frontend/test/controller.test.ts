import { describe, expect, it } from "vitest";

import { ApiError } from "../src/api.js";
import { ScanController } from "../src/controller.js";
import { pollScan, PollTimeoutError } from "../src/poll.js";
import {
  FakeScanService,
  compliantReport,
  instantSleep,
  nonCompliantReport,
} from "./helpers.js";

const fastPoll = { intervalMs: 1, timeoutMs: 50, sleep: instantSleep };

describe("pollScan", () => {
  it("polls through pending states to the report", async () => {
    const service = new FakeScanService();
    service.pendingPolls = 3;
    service.setReport("https://x.de/", compliantReport("https://x.de/"));
    const { scan_id } = await service.startScan("https://x.de/");
    const report = await pollScan(service, scan_id, fastPoll);
    expect(report.verdict).toBe("compliant_anonymized");
  });

  it("gives up after the timeout cap", async () => {
    const service = new FakeScanService();
    service.pendingPolls = 10_000;
    service.setReport("https://x.de/", compliantReport("https://x.de/"));
    const { scan_id } = await service.startScan("https://x.de/");
    await expect(pollScan(service, scan_id, fastPoll)).rejects.toBeInstanceOf(
      PollTimeoutError,
    );
  });
});

describe("ScanController", () => {
  it("walks idle -> scanning -> report", async () => {
    const service = new FakeScanService();
    service.setReport("https://x.de/", nonCompliantReport("https://x.de/"));
    const controller = new ScanController(service, fastPoll);
    const phases: string[] = [];
    controller.onChange((state) => phases.push(state.phase));

    const state = await controller.submit("https://x.de/");
    expect(state.phase).toBe("report");
    expect(phases).toEqual(["scanning", "report"]);
    if (state.phase === "report") {
      expect(state.report.summary_text_key).toBe("summary.problem");
    }
  });

  it("rescan resubmits the last URL and picks up the new result", async () => {
    const service = new FakeScanService();
    const url = "https://rescan.example.de/";
    service.setReport(url, nonCompliantReport(url));
    const controller = new ScanController(service, fastPoll);

    const before = await controller.submit(url);
    expect(before.phase === "report" && before.report.verdict).toBe("non_compliant");

    // the owner fixes the site: the same URL now produces a clean report
    service.setReport(url, compliantReport(url));
    const after = await controller.rescan();
    expect(after.phase === "report" && after.report.verdict).toBe(
      "compliant_anonymized",
    );
  });

  it("rescan without a previous scan is a no-op", async () => {
    const controller = new ScanController(new FakeScanService(), fastPoll);
    const state = await controller.rescan();
    expect(state.phase).toBe("idle");
  });

  it("maps throttling to a retriable error state", async () => {
    const throttled = {
      startScan: async () => {
        throw new ApiError("rate limited; retry later", 429, 7);
      },
      getScan: async () => {
        throw new Error("unreachable");
      },
    };
    const controller = new ScanController(throttled, fastPoll);
    const state = await controller.submit("https://x.de/");
    expect(state.phase).toBe("error");
    if (state.phase === "error") {
      expect(state.retriable).toBe(true);
      expect(state.message).toContain("rate limited");
    }
  });

  it("rejects empty input without calling the service", async () => {
    const controller = new ScanController(new FakeScanService(), fastPoll);
    const state = await controller.submit("   ");
    expect(state.phase).toBe("error");
    if (state.phase === "error") {
      expect(state.retriable).toBe(false);
    }
  });
});
