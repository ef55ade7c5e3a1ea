import init, { scaleDemo, runSinusoid, compareModes } from "./pkg/teleop_wasm.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);
const fmt = (v, d = 2) => (v == null ? "n/a" : v.toFixed(d));

const COLORS = ["#fff", "#ddd", "#38c", "#d33"];

function drawCloud(res) {
  const c = $("cloud");
  const ctx = c.getContext("2d");
  const sx = c.width / res.width;
  const sy = c.height / res.height;
  ctx.clearRect(0, 0, c.width, c.height);
  res.pixels.forEach((p, i) => {
    ctx.fillStyle = COLORS[p];
    ctx.fillRect((i % res.width) * sx, Math.floor(i / res.width) * sy, Math.ceil(sx), Math.ceil(sy));
  });
}

function doScale() {
  const res = JSON.parse(scaleDemo(80, 60, num("bw"), num("trt"), num("scale-seed")));
  drawCloud(res);
  $("scale-out").textContent =
    `N_max ${res.n_max}   raw ${res.raw_points}   edge ${res.n_e}   interior ${res.n_in}\n` +
    `r = ${res.r.toFixed(4)}   kept ${res.kept}` +
    (res.over_budget ? "   (edge points alone exceed the budget)" : "");
}

function plot(canvas, t, series) {
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  ctx.clearRect(0, 0, w, h);
  const all = series.flatMap((s) => s.y);
  const lo = Math.min(...all);
  const hi = Math.max(...all);
  const t0 = t[0];
  const t1 = t[t.length - 1];
  const X = (x) => ((x - t0) / (t1 - t0 || 1)) * (w - 20) + 10;
  const Y = (y) => h - 10 - ((y - lo) / (hi - lo || 1)) * (h - 20);
  for (const s of series) {
    ctx.strokeStyle = s.color;
    ctx.beginPath();
    s.y.forEach((y, i) => (i ? ctx.lineTo(X(t[i]), Y(y)) : ctx.moveTo(X(t[i]), Y(y))));
    ctx.stroke();
  }
}

function doRun() {
  const res = JSON.parse(runSinusoid($("mode").value, num("lat"), num("jit"), num("drop"), num("run-seed")));
  plot($("trace"), res.t, [
    { y: res.user_x, color: "#999" },
    { y: res.robot_x, color: "#d33" },
  ]);
  $("run-out").textContent =
    `grey: hand x   red: robot x as drawn\n` +
    `mean error ${fmt(res.mean_error_mm)} mm   ` +
    `M2M reconstructed ${fmt(res.m2m_reconstructed_ms, 1)} ms   actual ${fmt(res.m2m_actual_ms, 1)} ms\n` +
    `${fmt(res.frame_rate, 1)} fps, drawn pose changes ${fmt(res.pose_update_rate, 1)}/s`;
}

function doCompare() {
  $("cmp-out").textContent = "running…";
  // let the label paint before the blocking call
  setTimeout(() => {
    const rows = JSON.parse(compareModes(num("lat"), num("jit"), num("drop"), num("seeds")));
    const wins = rows.filter((r) => r.telexr_mm < r.baseline_mm).length;
    const lines = rows.map(
      (r) => `seed ${String(r.seed).padStart(3)}   telexr ${fmt(r.telexr_mm)} mm   baseline ${fmt(r.baseline_mm)} mm`,
    );
    lines.push(`telexr lower in ${wins}/${rows.length}`);
    $("cmp-out").textContent = lines.join("\n");
  }, 10);
}

function guard(f, out) {
  return () => {
    try {
      f();
    } catch (e) {
      $(out).textContent = `error: ${e}`;
    }
  };
}

await init();
$("status").textContent = "ready";
$("scale-go").onclick = guard(doScale, "scale-out");
$("run-go").onclick = guard(doRun, "run-out");
$("cmp-go").onclick = guard(doCompare, "cmp-out");
doScale();
