/** Shapes of the scan service's JSON payloads. The UI renders these
 * verbatim; verdicts are never re-derived client-side. */

export type VerdictValue =
  | "compliant_no_ga"
  | "compliant_anonymized"
  | "non_compliant"
  | "offline";

export type SummaryKey =
  | "summary.no_ga"
  | "summary.anonymized"
  | "summary.problem"
  | "summary.offline";

export interface HitRow {
  raw_url: string;
  tracking_id: string | null;
  hit_type: string | null;
  aip: "enabled" | "absent" | "other";
  params: [string, string][];
  classification: "anonymized" | "not_anonymized";
}

export interface TrackerRow {
  library: string;
  name: string;
  tracking_id: string | null;
  config: Record<string, unknown>;
  anonymize_ip: "true" | "false" | "unset";
  evaluation: "anonymized" | "anonymized_via_hits" | "option_unset" | "disabled";
}

export interface ScanReport {
  scan_id: string;
  url: string;
  scanned_at: string;
  verdict: VerdictValue;
  summary_text_key: SummaryKey;
  hits: HitRow[];
  trackers: TrackerRow[];
  diagnostics: string[];
}

export interface ScanStarted {
  scan_id: string;
  session_token: string;
}

export type ScanStatus = { status: "pending"; scan_id: string } | ({ status: "done" } & ScanReport);

export interface HelpContent {
  title: string;
  pitfalls: { id: string; text: string }[];
  examples: { misconfigured: string; corrected: string };
}
