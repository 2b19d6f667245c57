import { ApiError, ScanApiClient } from "./api.js";
import { pollScan, PollOptions, PollTimeoutError } from "./poll.js";
import type { ScanReport } from "./types.js";

export type ViewState =
  | { phase: "idle" }
  | { phase: "scanning"; url: string }
  | { phase: "report"; url: string; report: ScanReport }
  | { phase: "error"; url: string; message: string; retriable: boolean };

type Listener = (state: ViewState) => void;

/** Drives the scan flow: submit -> poll -> report, plus rescan of the last
 * URL. Pure state machine over the API client; the DOM layer subscribes. */
export class ScanController {
  private state: ViewState = { phase: "idle" };
  private listeners: Listener[] = [];
  private lastUrl: string | null = null;

  constructor(
    private readonly api: Pick<ScanApiClient, "startScan" | "getScan">,
    private readonly pollOptions: PollOptions = {},
  ) {}

  get current(): ViewState {
    return this.state;
  }

  onChange(listener: Listener): void {
    this.listeners.push(listener);
  }

  private transition(state: ViewState): ViewState {
    this.state = state;
    for (const listener of this.listeners) {
      listener(state);
    }
    return state;
  }

  async submit(url: string): Promise<ViewState> {
    const trimmed = url.trim();
    if (!trimmed) {
      return this.transition({
        phase: "error",
        url,
        message: "enter a URL to scan",
        retriable: false,
      });
    }
    this.lastUrl = trimmed;
    this.transition({ phase: "scanning", url: trimmed });
    try {
      const started = await this.api.startScan(trimmed);
      const report = await pollScan(this.api, started.scan_id, this.pollOptions);
      return this.transition({ phase: "report", url: trimmed, report });
    } catch (error) {
      return this.transition({
        phase: "error",
        url: trimmed,
        message: error instanceof Error ? error.message : String(error),
        retriable:
          error instanceof PollTimeoutError ||
          (error instanceof ApiError && error.retriable),
      });
    }
  }

  /** Re-submit the last scanned URL (the owner fixed the site and wants
   * confirmation). */
  async rescan(): Promise<ViewState> {
    if (!this.lastUrl) {
      return this.state;
    }
    return this.submit(this.lastUrl);
  }
}
