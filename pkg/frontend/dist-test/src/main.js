// Browser wiring: WebSocket, canvas loop, keyboard and slider controls.
import { CommandSource } from "./input.js";
import { makeCommand, makeHello } from "./protocol.js";
import { drawScene } from "./render.js";
import { ViewModel } from "./viewmodel.js";
function el(id) {
    const node = document.getElementById(id);
    if (!node)
        throw new Error(`missing element #${id}`);
    return node;
}
function setup() {
    const canvas = el("scene");
    const ctx = canvas.getContext("2d");
    const vm = new ViewModel();
    const source = new CommandSource();
    let socket = null;
    const statusEl = el("status");
    const readoutEl = el("readout");
    const bannerEl = el("banner");
    function connect() {
        const url = (el("url")).value;
        const role = (el("role")).value;
        const name = (el("name")).value || "anonymous";
        socket = new WebSocket(url);
        vm.connection = "connecting";
        socket.onopen = () => {
            vm.connection = "open";
            socket.send(makeHello(role, name));
        };
        socket.onmessage = (ev) => {
            vm.applyRaw(String(ev.data), performance.now());
        };
        socket.onclose = () => {
            vm.connection = "closed";
        };
        socket.onerror = () => {
            vm.errorBanner = "websocket error";
        };
    }
    el("connect").onclick = connect;
    const keyMap = {
        ArrowUp: "up", ArrowDown: "down", ArrowLeft: "left", ArrowRight: "right",
    };
    window.addEventListener("keydown", (ev) => {
        const key = keyMap[ev.key];
        if (key) {
            source.setKey(key, true);
            ev.preventDefault();
        }
    });
    window.addEventListener("keyup", (ev) => {
        const key = keyMap[ev.key];
        if (key)
            source.setKey(key, false);
    });
    const vSlider = el("slider-v");
    const wSlider = el("slider-w");
    el("mode").onchange = (ev) => {
        source.mode = ev.target.value;
        vm.controlMode = source.mode;
    };
    vSlider.oninput = () => { source.sliderV = Number(vSlider.value); };
    wSlider.oninput = () => { source.sliderW = Number(wSlider.value); };
    let lastFrame = performance.now();
    function loop(now) {
        source.tick(now - lastFrame);
        lastFrame = now;
        if (socket && socket.readyState === WebSocket.OPEN && vm.isDriver()
            && !vm.finished()) {
            const cmd = source.maybeEmit(now, vm.controlPeriodMs());
            if (cmd)
                socket.send(makeCommand(cmd.v, cmd.w));
        }
        const stale = vm.isStale(now);
        if (vm.state && vm.hello) {
            drawScene(ctx, vm.state, vm.hello.max_range, vm.trace, { radiusPx: 220, pxPerMeter: 220 / vm.hello.max_range }, stale);
            const g = vm.state.goal;
            readoutEl.textContent =
                `t=${vm.state.t.toFixed(1)}s  goal ${g.distance.toFixed(2)} m @ ` +
                    `${(g.heading * 180 / Math.PI).toFixed(0)} deg  ` +
                    `waypoint ${vm.state.waypoint + 1}/${vm.hello.waypoints_total}`;
        }
        statusEl.textContent = vm.finished()
            ? `finished: ${vm.result.outcome}`
            : stale ? "STALE" : vm.connection;
        bannerEl.textContent = vm.errorBanner ?? vm.lastServerError ?? "";
        requestAnimationFrame(loop);
    }
    requestAnimationFrame(loop);
}
window.addEventListener("DOMContentLoaded", setup);
