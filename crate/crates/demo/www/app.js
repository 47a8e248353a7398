import init, { decompose, labelHistogram, DemoTrainer } from "./pkg/capnet_demo.js";

const $ = (id) => document.getElementById(id);

function parseClasses(text) {
  const parts = text.trim().split(/[\s,]+/).filter((s) => s.length > 0);
  const nums = parts.map(Number);
  if (nums.some((n) => !Number.isInteger(n) || n < 0 || n > 9)) {
    throw new Error("classes must be integers 0-9");
  }
  return new Uint8Array(nums);
}

function showError(el, e) {
  el.innerHTML = `<p class="err">${e.message ?? e}</p>`;
}

function table(header, rows) {
  const head = `<tr>${header.map((h) => `<th>${h}</th>`).join("")}</tr>`;
  const body = rows.map((r) => `<tr>${r.map((c) => `<td>${c}</td>`).join("")}</tr>`).join("");
  return `<table>${head}${body}</table>`;
}

function runDecompose() {
  const out = $("dec-out");
  try {
    const classes = parseClasses($("dec-classes").value);
    const d = JSON.parse(decompose($("dec-task").value, classes));
    const rows = Array.from(classes, (c, i) => [i + 1, c, d.added[i]]);
    const pairs = d.pairs.length ? `<p>Synergy pairs: ${d.pairs.map((p) => `(${p})`).join(" ")}</p>` : "";
    out.innerHTML = `<p>Label ${d.label}; the added values sum to it.</p>${pairs}` +
      table(["step", "class", "added value"], rows);
  } catch (e) {
    showError(out, e);
  }
}

function runHistogram() {
  const out = $("hist-out");
  const bars = $("hist-bars");
  try {
    const h = JSON.parse(labelHistogram(
      $("hist-task").value, Number($("hist-size").value), Number($("hist-bags").value), 1n));
    out.innerHTML = `<p>mean ${h.mean.toFixed(3)}, stdev ${h.stdev.toFixed(3)}, labels ${h.labels[0]}-${h.labels[h.labels.length - 1]}</p>`;
    const max = Math.max(...h.counts);
    bars.innerHTML = h.counts
      .map((c, i) => `<div title="label ${h.labels[i]}: ${c}" style="height:${(100 * c) / max}%"></div>`)
      .join("");
  } catch (e) {
    bars.innerHTML = "";
    showError(out, e);
  }
}

let trainer = null;
let curve = [];

function drawCurve(baseline) {
  const cv = $("tr-curve");
  const ctx = cv.getContext("2d");
  ctx.clearRect(0, 0, cv.width, cv.height);
  if (curve.length === 0) return;
  const top = Math.max(baseline, ...curve);
  const x = (i) => 10 + (i * (cv.width - 20)) / Math.max(1, curve.length - 1);
  const y = (v) => cv.height - 10 - (v / top) * (cv.height - 20);
  ctx.strokeStyle = "#bbb";
  ctx.beginPath();
  ctx.moveTo(10, y(baseline));
  ctx.lineTo(cv.width - 10, y(baseline));
  ctx.stroke();
  ctx.strokeStyle = "#4a7bd0";
  ctx.beginPath();
  curve.forEach((v, i) => (i === 0 ? ctx.moveTo(x(i), y(v)) : ctx.lineTo(x(i), y(v))));
  ctx.stroke();
}

function newModel() {
  const out = $("tr-out");
  try {
    const [family, cap] = $("tr-model").value.split(":");
    trainer?.free();
    trainer = new DemoTrainer($("tr-task").value, family, cap === "1", 0n);
    curve = [];
    drawCurve(trainer.baselineMse());
    out.innerHTML = `<p>Fresh model on 2000 bags of size 5. Predicting the mean scores ${trainer.baselineMse().toFixed(3)} (grey line).</p>`;
    $("tr-run").disabled = false;
    $("ex-go").disabled = false;
  } catch (e) {
    showError(out, e);
  }
}

async function trainSome() {
  const out = $("tr-out");
  $("tr-run").disabled = true;
  try {
    for (let i = 0; i < 5; i++) {
      const mse = trainer.epoch();
      curve.push(mse);
      drawCurve(trainer.baselineMse());
      out.innerHTML = `<p>epoch ${trainer.epochsDone()}: validation MSE ${mse.toFixed(4)}</p>`;
      await new Promise((r) => setTimeout(r, 0));
    }
  } catch (e) {
    showError(out, e);
  }
  $("tr-run").disabled = false;
}

function explain() {
  const out = $("ex-out");
  try {
    const e = JSON.parse(trainer.explain(parseClasses($("ex-classes").value)));
    const kind = e.pseudo ? "prefix difference (no capacity head)" : "model intermediate";
    const rows = e.expected.map((v, i) => [i + 1, v, e.predicted[i].toFixed(3)]);
    out.innerHTML = `<p>label ${e.label}, prediction ${e.prediction.toFixed(3)}</p>` +
      table(["step", "true added value", kind], rows);
  } catch (err) {
    showError(out, err);
  }
}

await init();
$("status").textContent = "Ready.";
$("dec-go").onclick = runDecompose;
$("hist-go").onclick = runHistogram;
$("tr-new").onclick = newModel;
$("tr-run").onclick = trainSome;
$("ex-go").onclick = explain;
runDecompose();
