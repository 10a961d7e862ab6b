// Client-side session state. Holds only protocol-provided data; there is
// deliberately no slot for map geometry or a ground-truth pose.
import { parseServerMessage, } from "./protocol.js";
const TRACE_LIMIT = 2000;
export const STALE_AFTER_FRAMES = 2;
export class ViewModel {
    constructor() {
        this.connection = "connecting";
        this.controlMode = "keyboard";
        this.hello = null;
        this.state = null;
        this.lastStateAtMs = null;
        this.trace = [];
        this.events = [];
        this.result = null;
        this.errorBanner = null;
        this.lastServerError = null;
    }
    controlPeriodMs() {
        return (this.hello ? this.hello.control_period : 0.33) * 1000;
    }
    /** Stale once more than two state frames have been missed. */
    isStale(nowMs) {
        if (this.lastStateAtMs === null)
            return false;
        return nowMs - this.lastStateAtMs > STALE_AFTER_FRAMES * this.controlPeriodMs();
    }
    /** Feed one raw frame. Invalid frames raise the error banner but keep the
     *  last good state so the scene does not blank out. */
    applyRaw(text, nowMs) {
        const parsed = parseServerMessage(text);
        if (!parsed.ok) {
            this.errorBanner = parsed.error;
            return;
        }
        this.apply(parsed.msg, nowMs);
    }
    apply(msg, nowMs) {
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
    isDriver() {
        return this.hello !== null && this.hello.role === "driver";
    }
    finished() {
        return this.result !== null;
    }
}
