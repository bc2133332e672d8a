import type { TimelineControls, TimelineData } from "./types.js";

export const DAY_SECONDS = 86400;

/** Visible window of the day, for zoom/pan; always inside [0, 86400]. */
export interface ViewWindow {
  start: number;
  end: number;
}

export const FULL_DAY: ViewWindow = { start: 0, end: DAY_SECONDS };

export function zoomWindow(view: ViewWindow, factor: number, pivot?: number): ViewWindow {
  const span = view.end - view.start;
  const target = Math.min(DAY_SECONDS, Math.max(60, span * factor));
  const center = pivot ?? (view.start + view.end) / 2;
  let start = center - ((center - view.start) / span) * target;
  start = Math.max(0, Math.min(start, DAY_SECONDS - target));
  return { start, end: start + target };
}

export function panWindow(view: ViewWindow, deltaSeconds: number): ViewWindow {
  const span = view.end - view.start;
  const start = Math.max(0, Math.min(view.start + deltaSeconds, DAY_SECONDS - span));
  return { start, end: start + span };
}

const WIDTH = 960;
const HEIGHT = 330;
const MARGIN_LEFT = 90;
const MARGIN_RIGHT = 20;
const MARGIN_TOP = 16;
const TRACK_HEIGHT = 70;
const TRACK_GAP = 16;

const TRACKS = [
  { id: "track-puff", label: "Puffs" },
  { id: "track-temperature", label: "Temperature" },
  { id: "track-touch", label: "Touches" },
] as const;

function trackTop(index: number): number {
  return MARGIN_TOP + index * (TRACK_HEIGHT + TRACK_GAP);
}

function xScale(view: ViewWindow): (seconds: number) => number {
  const plotWidth = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
  const span = view.end - view.start;
  return (seconds) => MARGIN_LEFT + ((seconds - view.start) / span) * plotWidth;
}

function formatClock(seconds: number): string {
  const h = Math.floor(seconds / 3600);
  const m = Math.floor((seconds % 3600) / 60);
  return `${String(h).padStart(2, "0")}:${String(m).padStart(2, "0")}`;
}

/** Tick spacing that keeps roughly 6-12 labels regardless of zoom. */
export function tickStep(view: ViewWindow): number {
  const span = view.end - view.start;
  const steps = [30, 60, 300, 600, 1800, 3600, 7200, 14400];
  for (const step of steps) {
    if (span / step <= 12) return step;
  }
  return 14400;
}

function escapeAttr(value: string): string {
  return value.replace(/&/g, "&amp;").replace(/"/g, "&quot;").replace(/</g, "&lt;");
}

/** Pure SVG markup for one day's three-track timeline under the controls. */
export function renderTimelineSvg(
  data: TimelineData,
  controls: TimelineControls,
  view: ViewWindow = FULL_DAY,
): string {
  const x = xScale(view);
  const axisY = trackTop(TRACKS.length);
  const parts: string[] = [
    `<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 ${WIDTH} ${HEIGHT}" ` +
      `width="100%" data-date="${escapeAttr(data.date)}">`,
  ];

  TRACKS.forEach((track, i) => {
    const top = trackTop(i);
    parts.push(
      `<rect class="track-band" x="${MARGIN_LEFT}" y="${top}" ` +
        `width="${WIDTH - MARGIN_LEFT - MARGIN_RIGHT}" height="${TRACK_HEIGHT}"/>`,
      `<text class="track-label" x="8" y="${top + TRACK_HEIGHT / 2 + 4}">${track.label}</text>`,
    );
  });

  const step = tickStep(view);
  const firstTick = Math.ceil(view.start / step) * step;
  for (let t = firstTick; t <= view.end; t += step) {
    const px = x(t);
    parts.push(
      `<line class="gridline" x1="${px.toFixed(1)}" y1="${MARGIN_TOP}" ` +
        `x2="${px.toFixed(1)}" y2="${axisY}"/>`,
      `<text class="axis-label" x="${px.toFixed(1)}" y="${axisY + 16}" ` +
        `text-anchor="middle">${formatClock(t)}</text>`,
    );
  }

  const clip = (value: number) => Math.max(view.start, Math.min(view.end, value));
  const bar = (
    top: number,
    startS: number,
    endS: number,
    classes: string,
    title: string,
  ): string => {
    const x1 = x(clip(startS));
    const width = Math.max(x(clip(endS)) - x1, 1.5);
    return (
      `<rect class="${classes}" x="${x1.toFixed(1)}" y="${top + 12}" ` +
      `width="${width.toFixed(1)}" height="${TRACK_HEIGHT - 24}">` +
      `<title>${escapeAttr(title)}</title></rect>`
    );
  };

  const visible = (startS: number, endS: number) => endS >= view.start && startS <= view.end;

  parts.push(`<g id="track-puff">`);
  if (controls.showPuffs) {
    for (const puff of data.puffs) {
      if (!visible(puff.start_s, puff.end_s)) continue;
      const confidence = (puff.confidence ?? "STANDARD").toLowerCase();
      const title = `${formatClock(puff.start_s)} puff, ${(puff.duration_ms / 1000).toFixed(2)} s (${confidence} confidence)`;
      parts.push(bar(trackTop(0), puff.start_s, puff.end_s, `puff ${confidence}`, title));
    }
  }
  parts.push(`</g>`);

  parts.push(`<g id="track-temperature">`);
  if (controls.showTemperatures) {
    const top = trackTop(1);
    for (const sample of data.temperatures) {
      if (sample.time_s < view.start || sample.time_s > view.end) continue;
      const cy = top + TRACK_HEIGHT - (sample.raw_value / 1024) * TRACK_HEIGHT;
      parts.push(
        `<circle class="temperature-sample" cx="${x(sample.time_s).toFixed(1)}" ` +
          `cy="${cy.toFixed(1)}" r="3"><title>ADC ${sample.raw_value}</title></circle>`,
      );
    }
  }
  parts.push(`</g>`);

  parts.push(`<g id="track-touch">`);
  if (controls.showTouches) {
    for (const touch of data.touches) {
      if (!visible(touch.start_s, touch.end_s)) continue;
      const title = `${formatClock(touch.start_s)} touch, ${(touch.duration_ms / 1000).toFixed(2)} s`;
      parts.push(bar(trackTop(2), touch.start_s, touch.end_s, "touch", title));
    }
  }
  parts.push(`</g>`);

  parts.push(`</svg>`);
  return parts.join("\n");
}

export function countMarks(svg: string, cssClass: string): number {
  return svg.split(`class="${cssClass}`).length - 1;
}
