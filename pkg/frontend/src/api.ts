import type { HelpContent, ScanStarted, ScanStatus } from "./types.js";

export class ApiError extends Error {
  constructor(
    message: string,
    readonly status: number,
    readonly retryAfterSeconds: number | null = null,
  ) {
    super(message);
  }

  /** Throttling and transient failures are worth a retry banner. */
  get retriable(): boolean {
    return this.status === 429 || this.status >= 500;
  }
}

type FetchLike = typeof fetch;

/** Thin typed client over the scan service API. The session token handed
 * out by the first scan is kept for the page visit only (in memory), so
 * scans from one visit can be linked without cookies. */
export class ScanApiClient {
  private sessionToken: string | null = null;

  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchImpl: FetchLike = fetch,
  ) {}

  async startScan(url: string): Promise<ScanStarted> {
    const headers: Record<string, string> = { "Content-Type": "application/json" };
    if (this.sessionToken) {
      headers["X-Scan-Session"] = this.sessionToken;
    }
    const response = await this.fetchImpl(`${this.baseUrl}/api/scan`, {
      method: "POST",
      headers,
      body: JSON.stringify({ url }),
    });
    if (!response.ok) {
      throw await this.asError(response);
    }
    const started = (await response.json()) as ScanStarted;
    this.sessionToken = started.session_token;
    return started;
  }

  async getScan(scanId: string): Promise<ScanStatus> {
    const response = await this.fetchImpl(`${this.baseUrl}/api/scan/${scanId}`);
    if (!response.ok) {
      throw await this.asError(response);
    }
    return (await response.json()) as ScanStatus;
  }

  async getHelp(): Promise<HelpContent> {
    const response = await this.fetchImpl(`${this.baseUrl}/api/help`);
    if (!response.ok) {
      throw await this.asError(response);
    }
    return (await response.json()) as HelpContent;
  }

  private async asError(response: Response): Promise<ApiError> {
    let detail = `service error (${response.status})`;
    try {
      const body = (await response.json()) as { detail?: string };
      if (body.detail) detail = body.detail;
    } catch {
      // non-JSON error body; keep the generic message
    }
    const retryAfter = response.headers.get("Retry-After");
    return new ApiError(detail, response.status, retryAfter ? Number(retryAfter) : null);
  }
}
