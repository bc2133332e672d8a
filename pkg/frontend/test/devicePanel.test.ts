import { describe, expect, it, vi } from "vitest";

import { ApiError, type ApiClient } from "../src/api.js";
import { DevicePanelController } from "../src/devicePanel.js";

function stubApi(overrides: Record<string, unknown> = {}) {
  return {
    listPorts: vi.fn(async () => [
      { system_name: "tcp:127.0.0.1:9000", human_label: "emulated puff monitor" },
    ]),
    connectDevice: vi.fn(async () => ({ state: "CONNECTED", port: "tcp:127.0.0.1:9000" })),
    setDeviceTime: vi.fn(async () => ({ acknowledged: true })),
    readDeviceTime: vi.fn(async () => ({
      posix_seconds: 1707754184,
      fraction_ticks: 0,
      unix_seconds: 1707754184,
      iso: "2024-02-12T16:09:44.00+00:00",
    })),
    eraseDevice: vi.fn(async () => ({ acknowledged: true })),
    startCollection: vi.fn(async () => ({ acknowledged: true })),
    pullData: vi.fn(async () => ({ session_id: "pull-1", record_count: 42 })),
    ...overrides,
  } as unknown as ApiClient;
}

describe("DevicePanelController", () => {
  it("reload selects the first discovered port", async () => {
    const panel = new DevicePanelController(stubApi());
    await panel.reloadPorts();
    expect(panel.state.selectedPort).toBe("tcp:127.0.0.1:9000");
    expect(panel.state.log.at(-1)).toMatchObject({ action: "reload-ports", ok: true });
  });

  it("connect flips the status and logs", async () => {
    const panel = new DevicePanelController(stubApi());
    await panel.reloadPorts();
    await panel.connect();
    expect(panel.state.connected).toBe(true);
    expect(panel.state.log.at(-1)?.message).toContain("tcp:127.0.0.1:9000");
  });

  it("read-time records the last device clock", async () => {
    const panel = new DevicePanelController(stubApi());
    await panel.readTime();
    expect(panel.state.lastDeviceTime).toBe("2024-02-12T16:09:44.00+00:00");
  });

  it("rejects an action while another is pending", async () => {
    let release: () => void = () => {};
    const gate = new Promise<void>((resolve) => {
      release = resolve;
    });
    const api = stubApi({
      eraseDevice: vi.fn(() => gate.then(() => ({ acknowledged: true }))),
    });
    const panel = new DevicePanelController(api);
    const slow = panel.erase();
    expect(panel.state.pending).toBe("erase");
    const refused = await panel.setTime();
    expect(refused).toBe(false);
    expect(panel.state.log.at(-1)).toMatchObject({ action: "set-time", ok: false });
    expect(panel.state.log.at(-1)?.message).toContain("pending");
    release();
    await slow;
    expect(panel.state.pending).toBeNull();
  });

  it("failures land in the log and leave state untouched", async () => {
    const api = stubApi({
      connectDevice: vi.fn(async () => {
        throw new ApiError("cannot reach tcp:127.0.0.1:1", 502, "NoHandshake");
      }),
    });
    const panel = new DevicePanelController(api);
    const ok = await panel.connect();
    expect(ok).toBe(false);
    expect(panel.state.connected).toBe(false);
    expect(panel.state.pending).toBeNull();
    expect(panel.state.log.at(-1)?.message).toContain("NoHandshake");
  });

  it("pull hands the new session to the explorer", async () => {
    const panel = new DevicePanelController(stubApi());
    const pulled: string[] = [];
    panel.onSessionPulled = (sessionId) => pulled.push(sessionId);
    await panel.pull();
    expect(pulled).toEqual(["pull-1"]);
    expect(panel.state.log.at(-1)?.message).toContain("42 records");
  });
});
