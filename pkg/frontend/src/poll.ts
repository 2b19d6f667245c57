import type { ScanApiClient } from "./api.js";
import type { ScanReport } from "./types.js";

export class PollTimeoutError extends Error {
  constructor(readonly scanId: string) {
    super("scan did not finish in time");
  }
}

export interface PollOptions {
  /** Delay between status requests. Scans take seconds; 2 s is plenty. */
  intervalMs?: number;
  /** Give up after this long and show a retriable error. */
  timeoutMs?: number;
  sleep?: (ms: number) => Promise<void>;
}

const defaultSleep = (ms: number) => new Promise<void>((resolve) => setTimeout(resolve, ms));

/** Poll until the report is ready. One request fires immediately, then
 * every interval until the timeout cap. */
export async function pollScan(
  api: Pick<ScanApiClient, "getScan">,
  scanId: string,
  options: PollOptions = {},
): Promise<ScanReport> {
  const interval = options.intervalMs ?? 2000;
  const timeout = options.timeoutMs ?? 60_000;
  const sleep = options.sleep ?? defaultSleep;
  let elapsed = 0;
  for (;;) {
    const status = await api.getScan(scanId);
    if (status.status === "done") {
      return status;
    }
    if (elapsed >= timeout) {
      throw new PollTimeoutError(scanId);
    }
    await sleep(interval);
    elapsed += interval;
  }
}
