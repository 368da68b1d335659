import init, { Demo, departure_histogram, queue_rewards } from "./pkg/sigctl_demo.js";

const $ = (id) => document.getElementById(id);

function drawIntersection(ctx, snap) {
  const { width: w, height: h } = ctx.canvas;
  const c = w / 2, box = 40;
  ctx.clearRect(0, 0, w, h);
  ctx.fillStyle = "#eee";
  ctx.fillRect(c - box, c - box, 2 * box, 2 * box);
  // Approaches drawn from north, east, south, west toward the box.
  const dirs = [[0, -1], [1, 0], [0, 1], [-1, 0]];
  snap.lanes.forEach((lane, i) => {
    const [dx, dy] = dirs[i % 4];
    const scale = (c - box) / lane.length;
    const off = 12 * (Math.floor(i / 4) + 1);
    const px = -dy * off, py = dx * off;
    ctx.strokeStyle = "#bbb";
    ctx.beginPath();
    ctx.moveTo(c + dx * box + px, c + dy * box + py);
    ctx.lineTo(c + dx * (c - 2) + px, c + dy * (c - 2) + py);
    ctx.stroke();
    ctx.fillStyle = lane.green ? "#2a2" : "#c22";
    ctx.fillRect(c + dx * box + px - 4, c + dy * box + py - 4, 8, 8);
    for (const [pos, speed] of lane.vehicles) {
      const r = box + pos * scale;
      ctx.fillStyle = speed < 0.1 ? "#d33" : "#36c";
      ctx.fillRect(c + dx * r + px - 3, c + dy * r + py - 3, 6, 6);
    }
  });
}

let demo = null, timer = null;

function resetSim() {
  demo = new Demo(BigInt($("sim-seed").value), Number($("sim-vehicles").value), $("sim-controller").value);
  render(JSON.parse(demo.snapshot()));
}

function render(snap) {
  drawIntersection($("sim-canvas").getContext("2d"), snap);
  $("sim-stats").textContent =
    `t=${snap.time.toFixed(0)} s  standing=${snap.standing}  queue=${snap.queue.toFixed(1)}  ` +
    `arrived=${snap.arrived}/${snap.total}  travel=${snap.travel_time.toFixed(1)} s`;
}

function toggleRun() {
  if (timer) { clearInterval(timer); timer = null; return; }
  timer = setInterval(() => {
    if (demo.finished()) { clearInterval(timer); timer = null; return; }
    render(JSON.parse(demo.tick()));
  }, 60);
}

function drawQueue() {
  const n = Number($("q-count").value), off = Number($("q-offset").value);
  const [p, e, len] = queue_rewards(n, off, 7.5);
  const ctx = $("q-canvas").getContext("2d");
  const { width: w, height: h } = ctx.canvas;
  ctx.clearRect(0, 0, w, h);
  ctx.fillStyle = "#c22";
  ctx.fillRect(w - 6, 10, 4, h - 20);
  ctx.fillStyle = "#d33";
  for (let i = 0; i < n; i++) {
    const pos = off + 7.5 * i;
    if (pos > len) break;
    ctx.fillRect(w - 10 - (pos / len) * (w - 20) - 8, h / 2 - 6, 8, 12);
  }
  $("q-stats").textContent = `pressure = ${p.toFixed(3)}   log-energy = ${e.toFixed(3)}`;
}

function drawHistogram() {
  const bins = 36;
  const hist = departure_histogram(Number($("b-alpha").value), Number($("b-beta").value), 3600, 10000, bins, 7n);
  const ctx = $("b-canvas").getContext("2d");
  const { width: w, height: h } = ctx.canvas;
  const max = Math.max(...hist, 1);
  ctx.clearRect(0, 0, w, h);
  ctx.fillStyle = "#36c";
  hist.forEach((v, i) => {
    const bh = (v / max) * (h - 10);
    ctx.fillRect((i * w) / bins + 1, h - bh, w / bins - 2, bh);
  });
}

await init();
$("sim-reset").onclick = resetSim;
$("sim-run").onclick = toggleRun;
$("sim-controller").onchange = () => demo && demo.set_controller($("sim-controller").value);
$("q-count").oninput = $("q-offset").oninput = drawQueue;
$("b-draw").onclick = drawHistogram;
resetSim();
drawQueue();
drawHistogram();
