// Maps keyboard or slider input to normalized velocity commands.
// Keyboard mode ramps while a key is held and decays to zero on release
// (dead-man behavior); commands go out at most once per control period.
const RAMP_PER_S = 1.25; // full forward in 0.8 s of holding
const DECAY_PER_S = 2.5; // back to zero in 0.4 s after release
export class CommandSource {
    constructor() {
        this.mode = "keyboard";
        this.keys = { up: false, down: false, left: false, right: false };
        this.v = 0;
        this.w = 0;
        this.sliderV = 0;
        this.sliderW = 0;
        this.lastSentAtMs = null;
    }
    setKey(key, pressed) {
        this.keys[key] = pressed;
    }
    /** Advance the ramp/decay dynamics by dt milliseconds (keyboard mode). */
    tick(dtMs) {
        if (this.mode !== "keyboard")
            return;
        const dt = dtMs / 1000;
        if (this.keys.up && !this.keys.down) {
            this.v = Math.min(1, this.v + RAMP_PER_S * dt);
        }
        else if (this.keys.down && !this.keys.up) {
            this.v = Math.max(0, this.v - RAMP_PER_S * dt);
        }
        else {
            this.v = Math.max(0, this.v - DECAY_PER_S * dt);
        }
        // positive w turns counterclockwise
        if (this.keys.left && !this.keys.right) {
            this.w = Math.min(1, this.w + RAMP_PER_S * dt);
        }
        else if (this.keys.right && !this.keys.left) {
            this.w = Math.max(-1, this.w - RAMP_PER_S * dt);
        }
        else if (this.w > 0) {
            this.w = Math.max(0, this.w - DECAY_PER_S * dt);
        }
        else if (this.w < 0) {
            this.w = Math.min(0, this.w + DECAY_PER_S * dt);
        }
    }
    current() {
        if (this.mode === "sliders") {
            return {
                v: Math.min(1, Math.max(0, this.sliderV)),
                w: Math.min(1, Math.max(-1, this.sliderW)),
            };
        }
        return { v: this.v, w: this.w };
    }
    /** The command to send now, or null when rate-limited to the control
     *  period. */
    maybeEmit(nowMs, periodMs) {
        if (this.lastSentAtMs !== null && nowMs - this.lastSentAtMs < periodMs) {
            return null;
        }
        this.lastSentAtMs = nowMs;
        return this.current();
    }
}
