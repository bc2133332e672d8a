import { ApiClient } from "./api.js";
import { TimelineController } from "./controller.js";
import { DevicePanelController } from "./devicePanel.js";
import { FULL_DAY, panWindow, renderTimelineSvg, zoomWindow, type ViewWindow } from "./timeline.js";

const api = new ApiClient("");
const timeline = new TimelineController(api);
const device = new DevicePanelController(api);

let view: ViewWindow = { ...FULL_DAY };

function el<T extends HTMLElement>(id: string): T {
  const found = document.getElementById(id);
  if (!found) throw new Error(`missing element #${id}`);
  return found as T;
}

async function refreshSessions(selectId?: string): Promise<void> {
  const sessions = await api.listSessions();
  const select = el<HTMLSelectElement>("session-select");
  select.innerHTML = "";
  for (const session of sessions) {
    const option = document.createElement("option");
    option.value = session.id;
    option.textContent = `${session.id} (${session.record_count} records)`;
    select.appendChild(option);
  }
  const target = selectId ?? timeline.state.sessionId ?? sessions[0]?.id;
  if (target) {
    select.value = target;
    await timeline.selectSession(target);
  }
}

function renderTimelinePane(): void {
  const state = timeline.state;
  const banner = el("error-banner");
  banner.hidden = state.error === null;
  banner.textContent = state.error ? `API error: ${state.error} (view may be stale)` : "";
  el("loading").hidden = state.pendingFetches === 0;

  const dateSelect = el<HTMLSelectElement>("date-select");
  if (dateSelect.length !== state.dates.length ||
      state.dates.some((d, i) => dateSelect.options[i]?.value !== d)) {
    dateSelect.innerHTML = "";
    for (const date of state.dates) {
      const option = document.createElement("option");
      option.value = date;
      option.textContent = date;
      dateSelect.appendChild(option);
    }
  }
  if (state.selectedDate) dateSelect.value = state.selectedDate;

  const summary = state.summary;
  el("card-count").textContent = summary ? String(summary.puffCount) : "–";
  el("card-duration").textContent = summary ? `${summary.totalPuffDurationS.toFixed(2)} s` : "–";
  el("card-interval").textContent =
    summary && summary.meanInterPuffIntervalS !== null
      ? `${summary.meanInterPuffIntervalS.toFixed(1)} s`
      : "–";

  el("timeline-host").innerHTML = state.timeline
    ? renderTimelineSvg(state.timeline, state.controls, view)
    : '<p class="placeholder">Pick a session to explore.</p>';
}

function renderDevicePane(): void {
  const state = device.state;
  const portSelect = el<HTMLSelectElement>("port-select");
  portSelect.innerHTML = "";
  for (const port of state.ports) {
    const option = document.createElement("option");
    option.value = port.system_name;
    option.textContent = `${port.system_name} — ${port.human_label}`;
    portSelect.appendChild(option);
  }
  if (state.selectedPort) portSelect.value = state.selectedPort;

  const busy = state.pending !== null;
  for (const id of ["btn-reload", "btn-connect", "btn-set-time", "btn-read-time",
                    "btn-erase", "btn-start", "btn-pull"]) {
    el<HTMLButtonElement>(id).disabled = busy;
  }
  el("device-status").textContent = busy
    ? `busy: ${state.pending}…`
    : state.connected
      ? `connected (${state.selectedPort ?? "?"})`
      : "disconnected";
  el("device-time").textContent = state.lastDeviceTime ?? "–";

  const log = el("device-log");
  log.innerHTML = "";
  for (const entry of state.log.slice(-12).reverse()) {
    const line = document.createElement("li");
    line.className = entry.ok ? "ok" : "failed";
    line.textContent = `${entry.action}: ${entry.message}`;
    log.appendChild(line);
  }
}

function bindControls(): void {
  el<HTMLSelectElement>("session-select").addEventListener("change", (event) => {
    void timeline.selectSession((event.target as HTMLSelectElement).value);
  });
  el<HTMLSelectElement>("date-select").addEventListener("change", (event) => {
    void timeline.selectDate((event.target as HTMLSelectElement).value);
  });

  const slider = el<HTMLInputElement>("threshold-slider");
  const sliderValue = el("threshold-value");
  slider.addEventListener("input", () => {
    sliderValue.textContent = `${Number(slider.value).toFixed(1)} s`;
  });
  slider.addEventListener("change", () => {
    void timeline.setThreshold(Number(slider.value));
  });

  el<HTMLInputElement>("thermistor-toggle").addEventListener("change", (event) => {
    void timeline.setThermistor((event.target as HTMLInputElement).checked);
  });
  for (const track of ["puffs", "touches", "temperatures"] as const) {
    el<HTMLInputElement>(`show-${track}`).addEventListener("change", (event) => {
      timeline.setTrackVisibility(track, (event.target as HTMLInputElement).checked);
    });
  }

  el("btn-zoom-in").addEventListener("click", () => {
    view = zoomWindow(view, 0.5);
    renderTimelinePane();
  });
  el("btn-zoom-out").addEventListener("click", () => {
    view = zoomWindow(view, 2);
    renderTimelinePane();
  });
  el("btn-zoom-reset").addEventListener("click", () => {
    view = { ...FULL_DAY };
    renderTimelinePane();
  });
  el("btn-pan-left").addEventListener("click", () => {
    view = panWindow(view, -(view.end - view.start) / 4);
    renderTimelinePane();
  });
  el("btn-pan-right").addEventListener("click", () => {
    view = panWindow(view, (view.end - view.start) / 4);
    renderTimelinePane();
  });

  el<HTMLSelectElement>("port-select").addEventListener("change", (event) => {
    device.selectPort((event.target as HTMLSelectElement).value);
  });
  el("btn-reload").addEventListener("click", () => void device.reloadPorts());
  el("btn-connect").addEventListener("click", () => void device.connect());
  el("btn-set-time").addEventListener("click", () => void device.setTime());
  el("btn-read-time").addEventListener("click", () => void device.readTime());
  el("btn-erase").addEventListener("click", () => void device.erase());
  el("btn-start").addEventListener("click", () => void device.startCollection());
  el("btn-pull").addEventListener("click", () => void device.pull());
}

timeline.onChange(renderTimelinePane);
device.onChange(renderDevicePane);
device.onSessionPulled = (sessionId) => {
  void refreshSessions(sessionId);
};

bindControls();
void device.reloadPorts();
void refreshSessions();
