// DOM wiring: pointer events feed the draft, toolbar buttons emit
// protocol messages, every server message schedules a redraw.

import { GatewayClient } from "./net.js";
import { renderView } from "./render.js";
import { ViewState } from "./state.js";

const canvas = document.getElementById("arena") as HTMLCanvasElement | null;
if (!canvas) throw new Error("canvas #arena not found");
const ctx = canvas.getContext("2d");
if (!ctx) throw new Error("2d context unavailable");

const statusLine = document.getElementById("status") as HTMLSpanElement;
const robotSelect = document.getElementById("robot") as HTMLSelectElement;
const rateInput = document.getElementById("rate") as HTMLInputElement;
const ghostToggle = document.getElementById("ghost") as HTMLInputElement;
const buttons = {
  path: document.getElementById("mode-path") as HTMLButtonElement,
  boundary: document.getElementById("mode-boundary") as HTMLButtonElement,
  commit: document.getElementById("commit") as HTMLButtonElement,
  clear: document.getElementById("clear") as HTMLButtonElement,
  start: document.getElementById("start") as HTMLButtonElement,
  pause: document.getElementById("pause") as HTMLButtonElement,
  reset: document.getElementById("reset") as HTMLButtonElement,
};

const view = new ViewState();
let lastError = "";

const url = `ws://${location.hostname || "127.0.0.1"}:8713`;
const client = new GatewayClient(url, {
  onOpen() {
    view.onOpen();
    scheduleRedraw();
  },
  onClose() {
    view.onClose();
    scheduleRedraw();
  },
  onHello(hello) {
    view.onHello(hello);
    canvas!.width = hello.width;
    canvas!.height = hello.height;
    robotSelect.innerHTML = "";
    for (const id of hello.robots) {
      const opt = document.createElement("option");
      opt.value = String(id);
      opt.textContent = `robot ${id}`;
      robotSelect.appendChild(opt);
    }
    client.send(view.subscribeMessage(Number(rateInput.value) || 10));
    scheduleRedraw();
  },
  onSnapshot(snapshot) {
    view.onSnapshot(snapshot);
    scheduleRedraw();
  },
  onReply(reply) {
    view.onReply(reply);
    lastError = reply.ok ? "" : `${reply.code}: ${reply.detail ?? ""}`;
    scheduleRedraw();
  },
});

canvas.addEventListener("click", (ev) => {
  const rect = canvas.getBoundingClientRect();
  const px = ((ev.clientX - rect.left) * canvas.width) / rect.width;
  const py = ((ev.clientY - rect.top) * canvas.height) / rect.height;
  view.addPointerPoint([px, py]);
  scheduleRedraw();
});

buttons.path.addEventListener("click", () => {
  view.setDrawMode(view.drawMode === "path" ? "none" : "path");
  scheduleRedraw();
});
buttons.boundary.addEventListener("click", () => {
  view.setDrawMode(view.drawMode === "boundary" ? "none" : "boundary");
  scheduleRedraw();
});
buttons.clear.addEventListener("click", () => {
  view.draft = [];
  scheduleRedraw();
});
buttons.commit.addEventListener("click", () => {
  const msg = view.commitDrawing();
  if (msg) client.send(msg);
  scheduleRedraw();
});
for (const kind of ["start", "pause", "reset"] as const) {
  buttons[kind].addEventListener("click", () => {
    const msg = view.controlMessage(kind);
    if (msg) client.send(msg);
    scheduleRedraw();
  });
}
robotSelect.addEventListener("change", () => {
  view.selectRobot(Number(robotSelect.value));
});
rateInput.addEventListener("change", () => {
  const rate = Number(rateInput.value);
  if (rate >= 1 && rate <= 30) client.send(view.subscribeMessage(rate));
});
ghostToggle.addEventListener("change", () => {
  view.showGhost = ghostToggle.checked;
  scheduleRedraw();
});

let redrawQueued = false;
function scheduleRedraw(): void {
  if (redrawQueued) return;
  redrawQueued = true;
  requestAnimationFrame(() => {
    redrawQueued = false;
    renderView(ctx!, view, canvas!.width, canvas!.height);
    buttons.commit.disabled = !view.canCommit();
    buttons.path.classList.toggle("active", view.drawMode === "path");
    buttons.boundary.classList.toggle("active", view.drawMode === "boundary");
    statusLine.textContent =
      `${view.connection} | ${view.runState}` + (lastError ? ` | ${lastError}` : "");
  });
}

scheduleRedraw();
