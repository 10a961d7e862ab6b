// Client-side session state. Holds only protocol-provided data; there is
// deliberately no slot for map geometry or a ground-truth pose.

import {
  EventFrame, HelloFromServer, ResultFrame, ServerMessage, StateFrame,
  parseServerMessage,
} from "./protocol.js";

export type ControlMode = "keyboard" | "sliders";
export type ConnectionStatus = "connecting" | "open" | "closed";

const TRACE_LIMIT = 2000;
export const STALE_AFTER_FRAMES = 2;

export class ViewModel {
  connection: ConnectionStatus = "connecting";
  controlMode: ControlMode = "keyboard";
  hello: HelloFromServer | null = null;
  state: StateFrame | null = null;
  lastStateAtMs: number | null = null;
  trace: Array<{ x: number; y: number }> = [];
  events: EventFrame[] = [];
  result: ResultFrame | null = null;
  errorBanner: string | null = null;
  lastServerError: string | null = null;

  controlPeriodMs(): number {
    return (this.hello ? this.hello.control_period : 0.33) * 1000;
  }

  /** Stale once more than two state frames have been missed. */
  isStale(nowMs: number): boolean {
    if (this.lastStateAtMs === null) return false;
    return nowMs - this.lastStateAtMs > STALE_AFTER_FRAMES * this.controlPeriodMs();
  }

  /** Feed one raw frame. Invalid frames raise the error banner but keep the
   *  last good state so the scene does not blank out. */
  applyRaw(text: string, nowMs: number): void {
    const parsed = parseServerMessage(text);
    if (!parsed.ok) {
      this.errorBanner = parsed.error;
      return;
    }
    this.apply(parsed.msg, nowMs);
  }

  apply(msg: ServerMessage, nowMs: number): void {
    switch (msg.type) {
      case "hello":
        this.hello = msg;
        break;
      case "state":
        this.state = msg;
        this.lastStateAtMs = nowMs;
        this.errorBanner = null;
        this.trace.push({ x: msg.pose.x, y: msg.pose.y });
        if (this.trace.length > TRACE_LIMIT) {
          this.trace.splice(0, this.trace.length - TRACE_LIMIT);
        }
        break;
      case "event":
        this.events.push(msg);
        break;
      case "result":
        this.result = msg;
        break;
      case "error":
        this.lastServerError = `${msg.code}: ${msg.message}`;
        break;
    }
  }

  isDriver(): boolean {
    return this.hello !== null && this.hello.role === "driver";
  }

  finished(): boolean {
    return this.result !== null;
  }
}
