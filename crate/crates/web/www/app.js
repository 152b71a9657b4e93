import init, { familyCurves, ensembleSummary, embeddingProfile } from "./pkg/polyset_web.js";

const COLORS = { lognormal: "#1f77b4", "schulz-zimm": "#d62728", weibull: "#2ca02c" };
const $ = (id) => document.getElementById(id);
const fmt = (v) => v.toExponential(4);

function frame(canvas, xr, yr) {
  const ctx = canvas.getContext("2d");
  const pad = { l: 50, r: 10, t: 10, b: 28 };
  const w = canvas.width - pad.l - pad.r, h = canvas.height - pad.t - pad.b;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const sx = (x) => pad.l + ((x - xr[0]) / (xr[1] - xr[0])) * w;
  const sy = (y) => pad.t + h - ((y - yr[0]) / (yr[1] - yr[0] || 1)) * h;
  ctx.strokeStyle = "#999";
  ctx.strokeRect(pad.l, pad.t, w, h);
  ctx.fillStyle = "#444";
  ctx.font = "11px sans-serif";
  for (let x = Math.ceil(xr[0]); x <= xr[1]; x++) {
    ctx.fillText(String(x), sx(x) - 4, pad.t + h + 14);
  }
  ctx.fillText("log10 M (g/mol)", pad.l + w / 2 - 40, canvas.height - 2);
  ctx.fillText(yr[1].toPrecision(2), 2, pad.t + 10);
  return { ctx, sx, sy };
}

function line(p, xs, ys, color) {
  p.ctx.strokeStyle = color;
  p.ctx.lineWidth = 1.6;
  p.ctx.beginPath();
  xs.forEach((x, i) => (i ? p.ctx.lineTo(p.sx(x), p.sy(ys[i])) : p.ctx.moveTo(p.sx(x), p.sy(ys[i]))));
  p.ctx.stroke();
}

function table(el, header, rows) {
  el.innerHTML =
    "<tr>" + header.map((h) => `<th>${h}</th>`).join("") + "</tr>" +
    rows.map((r) => "<tr>" + r.map((c) => `<td>${c}</td>`).join("") + "</tr>").join("");
}

function nominal() {
  return { mn: 10 ** parseFloat($("logmn").value), disp: parseFloat($("disp").value) };
}

function drawCurves() {
  const { mn, disp } = nominal();
  const c = JSON.parse(familyCurves(mn, disp, 400));
  const ymax = Math.max(...c.families.flatMap((f) => f.weight_density));
  const p = frame($("curves"), [c.log10_m[0], c.log10_m[c.log10_m.length - 1]], [0, ymax * 1.05]);
  c.families.forEach((f) => line(p, c.log10_m, f.weight_density, COLORS[f.family]));
  $("key").innerHTML = c.families.map((f) => `<span style="color:${COLORS[f.family]}">■ ${f.family}</span>`).join("");
  table($("curve-moments"), ["family", "Mn", "Mw", "Mz", "Mz+1"],
    c.families.map((f) => [f.family, fmt(f.moments.mn), fmt(f.moments.mw), fmt(f.moments.mz), fmt(f.moments.mz_plus_1)]));
}

function drawEnsemble() {
  const { mn, disp } = nominal();
  const n = 2 ** parseInt($("chains").value, 10);
  const s = JSON.parse(ensembleSummary($("family").value, mn, disp, n, parseFloat($("span").value)));
  const wmax = Math.max(...s.weights);
  const p = frame($("ensemble"), [2.5, 8.5], [0, wmax * 1.05]);
  p.ctx.strokeStyle = COLORS[s.family];
  s.log10_m.forEach((x, i) => {
    p.ctx.beginPath();
    p.ctx.moveTo(p.sx(x), p.sy(0));
    p.ctx.lineTo(p.sx(x), p.sy(s.weights[i]));
    p.ctx.stroke();
  });
  const names = ["Mn", "Mw", "Mz", "Mz+1"];
  const keys = ["mn", "mw", "mz", "mz_plus_1"];
  table($("ensemble-moments"), ["", "analytic", `ensemble (${s.n} chains)`, "rel. error"],
    keys.map((k, i) => [names[i], fmt(s.analytic[k]), fmt(s.empirical[k]), s.relative_errors[i].toExponential(2)]));
}

function drawProfile() {
  const { mn, disp } = nominal();
  const n = 2 ** parseInt($("chains").value, 10);
  const pr = JSON.parse(embeddingProfile(mn, disp, n, parseFloat($("span").value)));
  const ymax = Math.max(...pr.rbf.flatMap(([, v]) => v));
  const p = frame($("profile"), [pr.centers[0], pr.centers[pr.centers.length - 1]], [0, ymax * 1.05]);
  pr.rbf.forEach(([family, v]) => line(p, pr.centers, v, COLORS[family]));
  const means = pr.mean_log10_m.map(([f, m]) => `${f} ${m.toFixed(3)}`).join(", ");
  $("baseline").textContent = `baseline [one-hot, log10 Mn, Đ] = [${pr.baseline.map((v) => v.toFixed(3)).join(", ")}]; mean log10 M: ${means}`;
}

function refresh() {
  $("logmn-out").textContent = `Mn ${fmt(nominal().mn)}`;
  $("disp-out").textContent = $("disp").value;
  $("chains-out").textContent = String(2 ** parseInt($("chains").value, 10));
  $("span-out").textContent = $("span").value;
  try {
    drawCurves();
    drawEnsemble();
    drawProfile();
    $("status").textContent = "";
  } catch (e) {
    $("status").textContent = String(e.message ?? e);
  }
}

await init();
for (const id of ["logmn", "disp", "chains", "span", "family"]) {
  $(id).addEventListener("input", refresh);
}
refresh();
