import type {
  DeviceTime,
  PTMetrics,
  PortDescriptor,
  SessionSummary,
  TimelineData,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    message: string,
    readonly status: number,
    readonly errorName: string | null,
  ) {
    super(message);
  }
}

async function unwrap<T>(response: Response): Promise<T> {
  if (response.ok) {
    return (await response.json()) as T;
  }
  let errorName: string | null = null;
  let message = `${response.status} ${response.statusText}`;
  try {
    const body = await response.json();
    const detail = body?.detail;
    if (typeof detail === "string") {
      message = detail;
    } else if (detail && typeof detail === "object") {
      errorName = detail.error ?? null;
      message = detail.detail ?? JSON.stringify(detail);
    }
  } catch {
    // non-JSON error body; keep the status line
  }
  throw new ApiError(message, response.status, errorName);
}

/** Thin typed client over the JSON service; all filters are query params. */
export class ApiClient {
  constructor(
    readonly baseUrl: string = "",
    private readonly fetchImpl: typeof fetch = fetch,
  ) {}

  private get(path: string): Promise<Response> {
    return this.fetchImpl(`${this.baseUrl}${path}`);
  }

  private post(path: string, body: unknown): Promise<Response> {
    return this.fetchImpl(`${this.baseUrl}${path}`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body ?? {}),
    });
  }

  async listPorts(): Promise<PortDescriptor[]> {
    const body = await unwrap<{ ports: PortDescriptor[] }>(await this.get("/ports"));
    return body.ports;
  }

  async listSessions(): Promise<SessionSummary[]> {
    const body = await unwrap<{ sessions: SessionSummary[] }>(await this.get("/sessions"));
    return body.sessions;
  }

  async metrics(
    sessionId: string,
    minPuffSeconds: number,
    useThermistor: boolean,
  ): Promise<PTMetrics[]> {
    const query = this.filterQuery(minPuffSeconds, useThermistor);
    const body = await unwrap<{ metrics: PTMetrics[] }>(
      await this.get(`/sessions/${encodeURIComponent(sessionId)}/metrics?${query}`),
    );
    return body.metrics;
  }

  async timeline(
    sessionId: string,
    date: string,
    minPuffSeconds: number,
    useThermistor: boolean,
  ): Promise<TimelineData> {
    const query = this.filterQuery(minPuffSeconds, useThermistor, { date });
    return unwrap<TimelineData>(
      await this.get(`/sessions/${encodeURIComponent(sessionId)}/timeline?${query}`),
    );
  }

  private filterQuery(
    minPuffSeconds: number,
    useThermistor: boolean,
    extra: Record<string, string> = {},
  ): string {
    const params = new URLSearchParams(extra);
    params.set("min_puff_s", String(minPuffSeconds));
    params.set("use_thermistor", String(useThermistor));
    return params.toString();
  }

  connectDevice(port: string | null) {
    return this.post("/device/connect", port ? { port } : {}).then(
      unwrap<{ state: string; port: string }>,
    );
  }

  setDeviceTime(port: string | null) {
    return this.post("/device/set-time", port ? { port } : {}).then(
      unwrap<{ acknowledged: boolean }>,
    );
  }

  readDeviceTime(): Promise<DeviceTime> {
    return this.get("/device/time").then(unwrap<DeviceTime>);
  }

  eraseDevice(port: string | null) {
    return this.post("/device/erase", port ? { port } : {}).then(
      unwrap<{ acknowledged: boolean }>,
    );
  }

  startCollection(port: string | null) {
    return this.post("/device/start", port ? { port } : {}).then(
      unwrap<{ acknowledged: boolean }>,
    );
  }

  pullData(port: string | null, sessionId?: string) {
    const body: Record<string, string> = {};
    if (port) body.port = port;
    if (sessionId) body.session_id = sessionId;
    return this.post("/device/pull", body).then(
      unwrap<{ session_id: string; record_count: number }>,
    );
  }
}
