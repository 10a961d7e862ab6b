import assert from "node:assert/strict";
import { test } from "node:test";
import { ViewModel } from "../src/viewmodel.js";
const HELLO = JSON.stringify({
    type: "hello", protocol: 1, session: "s", role: "driver",
    control_period: 0.33, n_sectors: 60, max_range: 3.5, goal_radius: 0.2,
    waypoints_total: 1,
});
function stateJson(seq, x = 0) {
    return JSON.stringify({
        type: "state", seq, t: seq * 0.33,
        sectors: new Array(60).fill(2.0),
        pose: { x, y: 0, theta: 0 },
        goal: { distance: 1, heading: 0 },
        waypoint: 0, stamp: seq,
    });
}
test("hello then state populates the model", () => {
    const vm = new ViewModel();
    vm.applyRaw(HELLO, 0);
    assert.ok(vm.isDriver());
    vm.applyRaw(stateJson(1), 10);
    assert.equal(vm.state?.seq, 1);
    assert.equal(vm.trace.length, 1);
});
test("stale indicator after two missed frames", () => {
    const vm = new ViewModel();
    vm.applyRaw(HELLO, 0);
    vm.applyRaw(stateJson(1), 1000);
    // 0.66 s = 2 control periods; just under is fresh, just over is stale
    assert.equal(vm.isStale(1000 + 650), false);
    assert.equal(vm.isStale(1000 + 670), true);
});
test("no stale flag before any state", () => {
    const vm = new ViewModel();
    assert.equal(vm.isStale(99999), false);
});
test("invalid frame keeps last good state and raises banner", () => {
    const vm = new ViewModel();
    vm.applyRaw(HELLO, 0);
    vm.applyRaw(stateJson(1, 5), 10);
    vm.applyRaw(JSON.stringify({ type: "state", seq: 2, walls: [] }), 20);
    assert.equal(vm.state?.seq, 1);
    assert.equal(vm.state?.pose.x, 5);
    assert.ok(vm.errorBanner !== null);
    // a following valid frame clears the banner
    vm.applyRaw(stateJson(3, 6), 30);
    assert.equal(vm.errorBanner, null);
    assert.equal(vm.state?.seq, 3);
});
test("trace accumulates estimated positions in order", () => {
    const vm = new ViewModel();
    vm.applyRaw(HELLO, 0);
    for (let i = 1; i <= 5; i++)
        vm.applyRaw(stateJson(i, i * 0.1), i * 330);
    assert.equal(vm.trace.length, 5);
    assert.ok(Math.abs(vm.trace[4].x - 0.5) < 1e-12);
});
test("result marks the session finished", () => {
    const vm = new ViewModel();
    vm.applyRaw(HELLO, 0);
    assert.equal(vm.finished(), false);
    vm.applyRaw(JSON.stringify({ type: "result", outcome: "goal", t: 12.3 }), 50);
    assert.equal(vm.finished(), true);
    assert.equal(vm.result?.outcome, "goal");
});
test("server error frames are surfaced separately", () => {
    const vm = new ViewModel();
    vm.applyRaw(JSON.stringify({ type: "error", code: "clipped",
        message: "w clipped" }), 0);
    assert.ok(vm.lastServerError?.includes("clipped"));
});
