import type { HelpContent, ScanReport, SummaryKey } from "./types.js";

/** Pure report-to-HTML rendering. Everything shown comes straight from the
 * report JSON; the summary copy is selected by summary_text_key alone. */

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&#39;");
}

interface SummaryCopy {
  tone: "good" | "bad" | "muted";
  heading: string;
  detail: string;
}

const SUMMARIES: Record<SummaryKey, SummaryCopy> = {
  "summary.no_ga": {
    tone: "good",
    heading: "Everything is fine: no Google Analytics found",
    detail: "The scan saw no GA requests and no tracker objects on this page.",
  },
  "summary.anonymized": {
    tone: "good",
    heading: "Everything is fine: IP anonymization is active",
    detail: "Every GA request carried aip=1 and every tracker has the option enabled.",
  },
  "summary.problem": {
    tone: "bad",
    heading: "Problem: Google Analytics runs without IP anonymization",
    detail:
      "At least one GA request or tracker transmits the full visitor IP. " +
      "The rows flagged below show where; the help page explains the fix.",
  },
  "summary.offline": {
    tone: "muted",
    heading: "The site could not be reached",
    detail: "The page did not load, so nothing can be said about its GA setup.",
  },
};

export function summaryFor(key: SummaryKey): SummaryCopy {
  return SUMMARIES[key] ?? SUMMARIES["summary.offline"];
}

export function renderSummary(report: ScanReport): string {
  const copy = summaryFor(report.summary_text_key);
  return (
    `<div class="summary summary-${copy.tone}" data-verdict="${report.verdict}">` +
    `<h2>${escapeHtml(copy.heading)}</h2>` +
    `<p>${escapeHtml(copy.detail)}</p>` +
    `</div>`
  );
}

function hitRows(report: ScanReport): string {
  if (report.hits.length === 0) {
    return `<tr><td colspan="4" class="empty">no GA requests observed</td></tr>`;
  }
  return report.hits
    .map((hit) => {
      const flagged = hit.classification !== "anonymized";
      return (
        `<tr class="${flagged ? "flagged" : "ok"}">` +
        `<td class="url">${escapeHtml(hit.raw_url)}</td>` +
        `<td>${escapeHtml(hit.tracking_id ?? "–")}</td>` +
        `<td class="aip">${escapeHtml(hit.aip)}</td>` +
        `<td>${flagged ? "full IP transmitted" : "anonymized"}</td>` +
        `</tr>`
      );
    })
    .join("");
}

function trackerRows(report: ScanReport): string {
  if (report.trackers.length === 0) {
    return `<tr><td colspan="4" class="empty">no tracker objects detected</td></tr>`;
  }
  const labels: Record<string, string> = {
    anonymized: "anonymizeIp enabled",
    anonymized_via_hits: "anonymized at request level",
    option_unset: "anonymizeIp not set",
    disabled: "anonymizeIp disabled",
  };
  return report.trackers
    .map((tracker) => {
      const flagged =
        tracker.evaluation === "option_unset" || tracker.evaluation === "disabled";
      return (
        `<tr class="${flagged ? "flagged" : "ok"}">` +
        `<td>${escapeHtml(tracker.name)}</td>` +
        `<td>${escapeHtml(tracker.tracking_id ?? "–")}</td>` +
        `<td>${escapeHtml(tracker.library)}</td>` +
        `<td>${escapeHtml(labels[tracker.evaluation] ?? tracker.evaluation)}</td>` +
        `</tr>`
      );
    })
    .join("");
}

export function renderReport(report: ScanReport): string {
  const diagnostics = report.diagnostics
    .map((note) => `<li>${escapeHtml(note)}</li>`)
    .join("");
  return `
${renderSummary(report)}
<section class="hits">
  <h3>GA requests</h3>
  <table>
    <thead><tr><th>request</th><th>tracking ID</th><th>aip</th><th>assessment</th></tr></thead>
    <tbody>${hitRows(report)}</tbody>
  </table>
</section>
<section class="trackers">
  <h3>Tracker objects</h3>
  <table>
    <thead><tr><th>tracker</th><th>tracking ID</th><th>library</th><th>anonymizeIp</th></tr></thead>
    <tbody>${trackerRows(report)}</tbody>
  </table>
</section>
<section class="diagnostics">
  <h3>Notes</h3>
  <ul>${diagnostics}</ul>
</section>
<p class="scanned-at">scanned ${escapeHtml(report.scanned_at)} ·
  <button type="button" id="rescan">Rescan this URL</button></p>`;
}

export function renderHelp(help: HelpContent): string {
  const items = help.pitfalls
    .map((p) => `<li id="pitfall-${escapeHtml(p.id)}">${escapeHtml(p.text)}</li>`)
    .join("");
  return `
<h2>${escapeHtml(help.title)}</h2>
<ol class="pitfalls">${items}</ol>
<h3>A misconfigured snippet</h3>
<pre><code>${escapeHtml(help.examples.misconfigured)}</code></pre>
<h3>The corrected version</h3>
<pre><code>${escapeHtml(help.examples.corrected)}</code></pre>`;
}

export function renderError(message: string, retriable: boolean): string {
  return (
    `<div class="summary summary-muted error-banner">` +
    `<h2>Scan failed</h2><p>${escapeHtml(message)}</p>` +
    (retriable ? `<button type="button" id="retry">Try again</button>` : "") +
    `</div>`
  );
}

export function renderProgress(url: string): string {
  return `<div class="progress">Scanning ${escapeHtml(url)} …</div>`;
}
