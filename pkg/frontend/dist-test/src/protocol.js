// Wire protocol for the teleoperation WebSocket endpoint /session/{id}.
// State frames carry exactly the information the autonomous planner sees:
// 60 pooled sector ranges, the UWB-estimated pose, and goal polar
// coordinates. Anything else in a state frame is a protocol violation.
export const PROTOCOL_VERSION = 1;
export const N_SECTORS = 60;
const STATE_FIELDS = new Set([
    "type", "seq", "t", "sectors", "pose", "goal", "waypoint", "stamp",
]);
const POSE_FIELDS = new Set(["x", "y", "theta"]);
const GOAL_FIELDS = new Set(["distance", "heading"]);
/** Schema problems in a state frame; an empty list means valid.
 *  Extra fields are rejected outright so map geometry or a true pose can
 *  never slip through and get rendered. */
export function validateStateFrame(msg) {
    const problems = [];
    if (msg["type"] !== "state")
        problems.push("type must be 'state'");
    for (const key of Object.keys(msg)) {
        if (!STATE_FIELDS.has(key))
            problems.push(`forbidden field: ${key}`);
    }
    for (const key of STATE_FIELDS) {
        if (!(key in msg))
            problems.push(`missing field: ${key}`);
    }
    const sectors = msg["sectors"];
    if (Array.isArray(sectors)) {
        if (sectors.length !== N_SECTORS) {
            problems.push(`sectors must have ${N_SECTORS} entries`);
        }
        if (!sectors.every((r) => typeof r === "number" && isFinite(r))) {
            problems.push("sectors must be finite numbers");
        }
    }
    else if ("sectors" in msg) {
        problems.push("sectors must be an array");
    }
    const pose = msg["pose"];
    if (pose && typeof pose === "object") {
        const keys = Object.keys(pose);
        if (keys.length !== POSE_FIELDS.size || keys.some((k) => !POSE_FIELDS.has(k))) {
            problems.push("pose must have exactly x, y, theta");
        }
    }
    const goal = msg["goal"];
    if (goal && typeof goal === "object") {
        const keys = Object.keys(goal);
        if (keys.length !== GOAL_FIELDS.size || keys.some((k) => !GOAL_FIELDS.has(k))) {
            problems.push("goal must have exactly distance, heading");
        }
    }
    return problems;
}
export function parseServerMessage(text) {
    let data;
    try {
        data = JSON.parse(text);
    }
    catch (e) {
        return { ok: false, error: `not JSON: ${e}` };
    }
    if (typeof data !== "object" || data === null || Array.isArray(data)) {
        return { ok: false, error: "frame must be an object" };
    }
    const msg = data;
    switch (msg["type"]) {
        case "state": {
            const problems = validateStateFrame(msg);
            if (problems.length)
                return { ok: false, error: problems.join("; ") };
            return { ok: true, msg: msg };
        }
        case "hello":
        case "event":
        case "result":
        case "error":
            return { ok: true, msg: msg };
        default:
            return { ok: false, error: `unknown type ${String(msg["type"])}` };
    }
}
export function makeHello(role, name) {
    const hello = { type: "hello", role, name, protocol: PROTOCOL_VERSION };
    return JSON.stringify(hello);
}
export function makeCommand(v, w) {
    const cmd = { type: "command", v, w };
    return JSON.stringify(cmd);
}
