import init, { trajectory, volume_factor, DensityDemo } from "./pkg/conkin_web.js";

const $ = (id) => document.getElementById(id);
const num = (id) => parseFloat($(id).value);

function plot(canvas, xs, ys, color) {
  const g = canvas.getContext("2d");
  const w = canvas.width, h = canvas.height, pad = 20;
  const lo = (a) => Math.min(...a), hi = (a) => Math.max(...a);
  const [x0, x1, y0, y1] = [lo(xs), hi(xs), lo(ys), hi(ys)];
  const sx = (x) => pad + ((x - x0) / (x1 - x0 || 1)) * (w - 2 * pad);
  const sy = (y) => h - pad - ((y - y0) / (y1 - y0 || 1)) * (h - 2 * pad);
  g.clearRect(0, 0, w, h);
  g.strokeStyle = color;
  g.beginPath();
  xs.forEach((x, i) => (i ? g.lineTo(sx(x), sy(ys[i])) : g.moveTo(sx(x), sy(ys[i]))));
  g.stroke();
  g.fillStyle = "#333";
  g.fillText(`[${y0.toPrecision(3)}, ${y1.toPrecision(3)}]`, pad, 12);
}

function runTrajectory() {
  const dt = 1e-2;
  try {
    const flat = trajectory($("tr-model").value, num("tr-c"), num("tr-q"), num("tr-p"), num("tr-t"), dt);
    const q = [], p = [], e = [], t = [];
    for (let i = 0; i < flat.length; i += 3) {
      q.push(flat[i]); p.push(flat[i + 1]); e.push(flat[i + 2]); t.push((i / 3) * dt);
    }
    plot($("tr-phase"), q, p, "#1f5fa8");
    plot($("tr-energy"), t, e, "#b03a2e");
    $("tr-out").textContent = `energy ${e[0].toFixed(6)} -> ${e[e.length - 1].toFixed(6)} over ${t.length - 1} steps`;
  } catch (err) {
    $("tr-out").textContent = String(err);
  }
}

let demo = null;
let playing = false;

function resetDensity() {
  try {
    demo = new DensityDemo(Math.max(16, num("d-cells") | 0), 5, num("d-c"), 1.5, 0);
    drawDensity();
  } catch (err) {
    $("d-out").textContent = String(err);
  }
}

function drawDensity() {
  const n = demo.cells();
  const v = demo.values();
  const canvas = $("d-canvas");
  const g = canvas.getContext("2d");
  const img = g.createImageData(n, n);
  let max = 0;
  for (const x of v) max = Math.max(max, Math.abs(x));
  for (let i = 0; i < n; i++) {
    for (let j = 0; j < n; j++) {
      // q to the right, p upward
      const s = Math.max(0, v[i * n + j]) / (max || 1);
      const k = 4 * ((n - 1 - j) * n + i);
      img.data[k] = 255 * Math.sqrt(s);
      img.data[k + 1] = 255 * s * s;
      img.data[k + 2] = 80 * (1 - s);
      img.data[k + 3] = 255;
    }
  }
  const tmp = document.createElement("canvas");
  tmp.width = tmp.height = n;
  tmp.getContext("2d").putImageData(img, 0, 0);
  g.imageSmoothingEnabled = false;
  g.drawImage(tmp, 0, 0, canvas.width, canvas.height);
  $("d-out").textContent = `t = ${demo.time().toFixed(3)}  mass / mass0 = ${demo.mass_ratio().toFixed(8)}`;
}

function tick() {
  if (!playing || !demo) return;
  try {
    demo.step(4);
    drawDensity();
    requestAnimationFrame(tick);
  } catch (err) {
    playing = false;
    $("d-out").textContent = String(err);
  }
}

function runVolume() {
  const c = num("v-c"), t = num("v-t");
  try {
    const v = volume_factor(c, t, 1e-3);
    const exact = Math.exp(c * t);
    $("v-out").textContent = `det = ${v.toPrecision(12)}  exp(cT) = ${exact.toPrecision(12)}  rel. diff = ${Math.abs(v / exact - 1).toExponential(2)}`;
  } catch (err) {
    $("v-out").textContent = String(err);
  }
}

await init();
$("tr-run").onclick = runTrajectory;
$("d-reset").onclick = () => { playing = false; $("d-play").textContent = "play"; resetDensity(); };
$("d-play").onclick = () => {
  playing = !playing;
  $("d-play").textContent = playing ? "pause" : "play";
  tick();
};
$("v-run").onclick = runVolume;
runTrajectory();
resetDensity();
runVolume();
