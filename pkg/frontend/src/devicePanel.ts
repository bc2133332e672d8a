import { ApiError, type ApiClient } from "./api.js";
import type { PortDescriptor } from "./types.js";

export type DeviceAction =
  | "reload-ports"
  | "connect"
  | "set-time"
  | "read-time"
  | "erase"
  | "start-collection"
  | "pull";

export interface LogEntry {
  action: DeviceAction;
  ok: boolean;
  message: string;
}

export interface DevicePanelState {
  ports: PortDescriptor[];
  selectedPort: string | null;
  connected: boolean;
  lastDeviceTime: string | null;
  pending: DeviceAction | null;
  log: LogEntry[];
}

/** Device panel state machine: one operation in flight at a time; failures
 * land in the log and leave the rest of the state untouched. */
export class DevicePanelController {
  readonly state: DevicePanelState = {
    ports: [],
    selectedPort: null,
    connected: false,
    lastDeviceTime: null,
    pending: null,
    log: [],
  };

  private listeners: Array<(state: DevicePanelState) => void> = [];
  /** Called with the new session id after a successful pull. */
  onSessionPulled: ((sessionId: string) => void) | null = null;

  constructor(private readonly api: ApiClient) {}

  onChange(listener: (state: DevicePanelState) => void): void {
    this.listeners.push(listener);
  }

  private notify(): void {
    for (const listener of this.listeners) listener(this.state);
  }

  selectPort(port: string): void {
    this.state.selectedPort = port;
    this.notify();
  }

  private log(action: DeviceAction, ok: boolean, message: string): void {
    this.state.log.push({ action, ok, message });
    this.notify();
  }

  /** Runs one device operation; rejected locally if another is pending. */
  private async run(action: DeviceAction, work: () => Promise<string>): Promise<boolean> {
    if (this.state.pending !== null) {
      this.log(action, false, `rejected: ${this.state.pending} still pending`);
      return false;
    }
    this.state.pending = action;
    this.notify();
    try {
      const message = await work();
      this.log(action, true, message);
      return true;
    } catch (err) {
      const detail =
        err instanceof ApiError && err.errorName
          ? `${err.errorName}: ${err.message}`
          : err instanceof Error
            ? err.message
            : String(err);
      this.log(action, false, detail);
      return false;
    } finally {
      this.state.pending = null;
      this.notify();
    }
  }

  reloadPorts(): Promise<boolean> {
    return this.run("reload-ports", async () => {
      this.state.ports = await this.api.listPorts();
      if (
        this.state.selectedPort === null ||
        !this.state.ports.some((p) => p.system_name === this.state.selectedPort)
      ) {
        this.state.selectedPort = this.state.ports[0]?.system_name ?? null;
      }
      return `${this.state.ports.length} port(s) found`;
    });
  }

  connect(): Promise<boolean> {
    return this.run("connect", async () => {
      const reply = await this.api.connectDevice(this.state.selectedPort);
      this.state.connected = reply.state === "CONNECTED";
      return `connected to ${reply.port}`;
    });
  }

  setTime(): Promise<boolean> {
    return this.run("set-time", async () => {
      await this.api.setDeviceTime(this.state.selectedPort);
      return "clock synchronized to host time";
    });
  }

  readTime(): Promise<boolean> {
    return this.run("read-time", async () => {
      const reply = await this.api.readDeviceTime();
      this.state.lastDeviceTime = reply.iso;
      return `device clock ${reply.iso}`;
    });
  }

  erase(): Promise<boolean> {
    return this.run("erase", async () => {
      await this.api.eraseDevice(this.state.selectedPort);
      return "flash erased";
    });
  }

  startCollection(): Promise<boolean> {
    return this.run("start-collection", async () => {
      await this.api.startCollection(this.state.selectedPort);
      return "flash erased and clock synchronized";
    });
  }

  pull(): Promise<boolean> {
    return this.run("pull", async () => {
      const reply = await this.api.pullData(this.state.selectedPort);
      this.onSessionPulled?.(reply.session_id);
      return `pulled ${reply.record_count} records into session ${reply.session_id}`;
    });
  }
}
