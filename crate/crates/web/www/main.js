import init, { curvatureProfile, evolve, ricciBound } from "./pkg/powerflow_web.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);
const status = (msg, bad = false) => {
  $("status").textContent = msg;
  $("status").className = bad ? "error" : "";
};

function plot(series) {
  const cv = $("plot");
  const ctx = cv.getContext("2d");
  ctx.clearRect(0, 0, cv.width, cv.height);
  const pad = 40;
  let [x0, x1, y0, y1] = [Infinity, -Infinity, Infinity, -Infinity];
  for (const s of series) {
    for (let i = 0; i < s.x.length; i++) {
      x0 = Math.min(x0, s.x[i]); x1 = Math.max(x1, s.x[i]);
      y0 = Math.min(y0, s.y[i]); y1 = Math.max(y1, s.y[i]);
    }
  }
  if (y1 - y0 < 1e-9) { y0 -= 0.5; y1 += 0.5; }
  const sx = (x) => pad + (x - x0) / (x1 - x0) * (cv.width - 2 * pad);
  const sy = (y) => cv.height - pad - (y - y0) / (y1 - y0) * (cv.height - 2 * pad);
  ctx.fillStyle = "#333";
  ctx.fillText(y1.toPrecision(4), 2, pad);
  ctx.fillText(y0.toPrecision(4), 2, cv.height - pad);
  for (const s of series) {
    ctx.strokeStyle = s.color;
    ctx.beginPath();
    s.x.forEach((x, i) => (i ? ctx.lineTo(sx(x), sy(s.y[i])) : ctx.moveTo(sx(x), sy(s.y[i]))));
    ctx.stroke();
  }
}

function guard(fn) {
  return () => {
    try { fn(); } catch (e) { status(String(e.message ?? e), true); }
  };
}

const grid = (n) => Array.from({ length: n }, (_, k) => (2 * Math.PI * k) / n);

$("profile").onclick = guard(() => {
  const rows = curvatureProfile($("scale").value, num("offset"), num("amplitude"), num("mode"), num("nodes"));
  const pick = (c) => Array.from({ length: rows.length / 4 }, (_, k) => rows[4 * k + c]);
  const x = pick(0);
  plot([
    { x, y: pick(1), color: "#888" },
    { x, y: pick(2), color: "#c33" },
    { x, y: pick(3), color: "#36c" },
  ]);
  status("grey: height, red: mean curvature, blue: tilt");
});

$("evolve").onclick = guard(() => {
  const n = num("nodes");
  const t0 = performance.now();
  const data = evolve($("scale").value, num("p"), num("tau"), num("offset"), num("amplitude"),
    num("mode"), n, num("tmax"), num("frames"));
  const x = grid(n);
  const frames = [];
  for (let i = 0; i < data.length; i += n + 1) frames.push({ t: data[i], u: data.slice(i + 1, i + 1 + n) });
  plot(frames.map((f, i) => ({
    x, y: Array.from(f.u),
    color: `hsl(${220 - 200 * i / Math.max(1, frames.length - 1)}, 70%, 45%)`,
  })));
  const last = frames[frames.length - 1];
  status(`${frames.length} frames up to t = ${last.t.toFixed(3)} (${(performance.now() - t0).toFixed(0)} ms)`);
});

$("ricci").onclick = guard(() => {
  const lam = ricciBound($("scale").value, num("lo"), num("hi"));
  status(`Ricci lower bound on [${num("lo")}, ${num("hi")}]: ${lam.toPrecision(6)}`);
});

init().then(() => status("ready")).catch((e) => status(`failed to load module: ${e}`, true));
