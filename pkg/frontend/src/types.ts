/** Shapes of the JSON API responses (field names match the service types). */

export interface PortDescriptor {
  system_name: string;
  human_label: string;
}

export interface SessionSummary {
  id: string;
  record_count: number;
}

export interface PTMetrics {
  date: string;
  puff_count: number;
  total_puff_duration_s: number;
  inter_puff_intervals_s: number[];
  touch_count: number;
  total_touch_duration_s: number;
}

export interface TimelinePuff {
  start_s: number;
  end_s: number;
  duration_ms: number;
  confidence: "HIGH" | "STANDARD" | null;
}

export interface TimelineTouch {
  start_s: number;
  end_s: number;
  duration_ms: number;
}

export interface TemperatureSample {
  time_s: number;
  raw_value: number;
}

export interface TimelineData {
  date: string;
  puffs: TimelinePuff[];
  touches: TimelineTouch[];
  temperatures: TemperatureSample[];
}

export interface DeviceTime {
  posix_seconds: number;
  fraction_ticks: number;
  unix_seconds: number;
  iso: string;
}

/** Control state driving timeline/metrics queries; filtering is server-side. */
export interface TimelineControls {
  minPuffSeconds: number;
  useThermistor: boolean;
  showPuffs: boolean;
  showTouches: boolean;
  showTemperatures: boolean;
}

export const DEFAULT_CONTROLS: TimelineControls = {
  minPuffSeconds: 0,
  useThermistor: false,
  showPuffs: true,
  showTouches: true,
  showTemperatures: true,
};
