import type { ScanReport, ScanStarted, ScanStatus } from "../src/types.js";

export function compliantReport(url = "https://site.example.de/"): ScanReport {
  return {
    scan_id: "scan-ok",
    url,
    scanned_at: "2024-07-08T09:00:00+00:00",
    verdict: "compliant_anonymized",
    summary_text_key: "summary.anonymized",
    hits: [
      {
        raw_url:
          "https://www.google-analytics.com/collect?v=1&t=pageview&tid=UA-1-1&aip=1",
        tracking_id: "UA-1-1",
        hit_type: "pageview",
        aip: "enabled",
        params: [["aip", "1"]],
        classification: "anonymized",
      },
    ],
    trackers: [
      {
        library: "analytics_js",
        name: "main:t0",
        tracking_id: "UA-1-1",
        config: { anonymizeIp: true },
        anonymize_ip: "true",
        evaluation: "anonymized",
      },
    ],
    diagnostics: ["Trackers that only load after a consent banner is confirmed are not visible."],
  };
}

export function nonCompliantReport(url = "https://site.example.de/"): ScanReport {
  const report = compliantReport(url);
  return {
    ...report,
    scan_id: "scan-bad",
    verdict: "non_compliant",
    summary_text_key: "summary.problem",
    hits: [
      {
        ...report.hits[0],
        raw_url: "https://www.google-analytics.com/collect?v=1&t=pageview&tid=UA-1-1",
        aip: "absent",
        classification: "not_anonymized",
      },
    ],
    trackers: [
      {
        ...report.trackers[0],
        config: {},
        anonymize_ip: "unset",
        evaluation: "option_unset",
      },
    ],
  };
}

/** In-memory stand-in for the scan service: maps URL to the report it will
 * produce, with a configurable number of pending polls first. */
export class FakeScanService {
  private reports = new Map<string, ScanReport>();
  private jobs = new Map<string, { url: string; pendingLeft: number }>();
  private counter = 0;
  pendingPolls = 1;

  setReport(url: string, report: ScanReport): void {
    this.reports.set(url, report);
  }

  async startScan(url: string): Promise<ScanStarted> {
    const scanId = `scan-${this.counter++}`;
    this.jobs.set(scanId, { url, pendingLeft: this.pendingPolls });
    return { scan_id: scanId, session_token: "visit-token" };
  }

  async getScan(scanId: string): Promise<ScanStatus> {
    const job = this.jobs.get(scanId);
    if (!job) {
      throw new Error("unknown scan id");
    }
    if (job.pendingLeft > 0) {
      job.pendingLeft -= 1;
      return { status: "pending", scan_id: scanId };
    }
    const report = this.reports.get(job.url);
    if (!report) {
      throw new Error(`no report configured for ${job.url}`);
    }
    return { status: "done", ...report, url: job.url, scan_id: scanId };
  }
}

export const instantSleep = () => Promise.resolve();
