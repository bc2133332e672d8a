import type { ApiClient } from "./api.js";
import type { PTMetrics, TimelineControls, TimelineData } from "./types.js";
import { DEFAULT_CONTROLS } from "./types.js";

/** Summary card values, taken verbatim from the /metrics response for the
 * selected date (the UI never recomputes counts from episode lists). */
export interface SummaryCards {
  puffCount: number;
  totalPuffDurationS: number;
  meanInterPuffIntervalS: number | null;
}

export interface TimelineViewState {
  sessionId: string | null;
  dates: string[];
  selectedDate: string | null;
  controls: TimelineControls;
  timeline: TimelineData | null;
  summary: SummaryCards | null;
  error: string | null;
  pendingFetches: number;
}

export function summaryFromMetrics(metrics: PTMetrics[], date: string): SummaryCards | null {
  const forDate = metrics.find((m) => m.date === date);
  if (!forDate) return null;
  const intervals = forDate.inter_puff_intervals_s;
  return {
    puffCount: forDate.puff_count,
    totalPuffDurationS: forDate.total_puff_duration_s,
    meanInterPuffIntervalS: intervals.length
      ? intervals.reduce((a, b) => a + b, 0) / intervals.length
      : null,
  };
}

/** Drives the timeline pane: owns control state, queries the API whenever it
 * changes, dedupes identical in-flight requests, and keeps the last good view
 * on failure. */
export class TimelineController {
  readonly state: TimelineViewState = {
    sessionId: null,
    dates: [],
    selectedDate: null,
    controls: { ...DEFAULT_CONTROLS },
    timeline: null,
    summary: null,
    error: null,
    pendingFetches: 0,
  };

  private inflight = new Map<string, Promise<void>>();
  private listeners: Array<(state: TimelineViewState) => void> = [];

  constructor(private readonly api: ApiClient) {}

  onChange(listener: (state: TimelineViewState) => void): void {
    this.listeners.push(listener);
  }

  private notify(): void {
    for (const listener of this.listeners) listener(this.state);
  }

  private queryKey(): string {
    const { sessionId, selectedDate, controls } = this.state;
    return [sessionId, selectedDate, controls.minPuffSeconds, controls.useThermistor].join("|");
  }

  async selectSession(sessionId: string): Promise<void> {
    this.state.sessionId = sessionId;
    this.state.selectedDate = null;
    this.state.timeline = null;
    this.state.summary = null;
    await this.refresh();
  }

  async selectDate(date: string): Promise<void> {
    this.state.selectedDate = date;
    await this.refresh();
  }

  async setThreshold(seconds: number): Promise<void> {
    this.state.controls.minPuffSeconds = seconds;
    await this.refresh();
  }

  async setThermistor(enabled: boolean): Promise<void> {
    this.state.controls.useThermistor = enabled;
    await this.refresh();
  }

  setTrackVisibility(track: "puffs" | "touches" | "temperatures", visible: boolean): void {
    if (track === "puffs") this.state.controls.showPuffs = visible;
    else if (track === "touches") this.state.controls.showTouches = visible;
    else this.state.controls.showTemperatures = visible;
    this.notify(); // purely presentational; no re-query
  }

  /** Re-query metrics and timeline for the current control state; identical
   * control states share one in-flight request. */
  refresh(): Promise<void> {
    if (!this.state.sessionId) return Promise.resolve();
    const key = this.queryKey();
    const existing = this.inflight.get(key);
    if (existing) return existing;
    const request = this.fetchCurrent().finally(() => {
      this.inflight.delete(key);
    });
    this.inflight.set(key, request);
    return request;
  }

  /** True while the state the fetch was started under is still current. */
  private matches(sessionId: string, minPuff: number, thermistor: boolean): boolean {
    return (
      this.state.sessionId === sessionId &&
      this.state.controls.minPuffSeconds === minPuff &&
      this.state.controls.useThermistor === thermistor
    );
  }

  private async fetchCurrent(): Promise<void> {
    const sessionId = this.state.sessionId;
    if (!sessionId) return;
    const minPuff = this.state.controls.minPuffSeconds;
    const thermistor = this.state.controls.useThermistor;
    this.state.pendingFetches += 1;
    this.notify();
    try {
      const metrics = await this.api.metrics(sessionId, minPuff, thermistor);
      if (!this.matches(sessionId, minPuff, thermistor)) return;
      this.state.dates = metrics.map((m) => m.date);
      if (!this.state.selectedDate || !this.state.dates.includes(this.state.selectedDate)) {
        this.state.selectedDate = this.state.dates[0] ?? null;
      }
      const date = this.state.selectedDate;
      if (!date) {
        this.state.timeline = null;
        this.state.summary = null;
        this.state.error = null;
        return;
      }
      const timeline = await this.api.timeline(sessionId, date, minPuff, thermistor);
      if (this.matches(sessionId, minPuff, thermistor) && this.state.selectedDate === date) {
        this.state.timeline = timeline;
        this.state.summary = summaryFromMetrics(metrics, date);
        this.state.error = null;
      }
    } catch (err) {
      // Keep the stale view; surface a banner.
      this.state.error = err instanceof Error ? err.message : String(err);
    } finally {
      this.state.pendingFetches -= 1;
      this.notify();
    }
  }
}
