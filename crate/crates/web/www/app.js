import init, { survival, variants, experiment } from "./pkg/phasekit_web.js";

const $ = (id) => document.getElementById(id);
const fmt = (x, d = 4) => (Number.isFinite(x) ? Number(x).toPrecision(d) : String(x));
let lastCurve = null;

function guard(errBox, fn) {
  errBox.textContent = "";
  try {
    fn();
  } catch (e) {
    errBox.textContent = e.message ?? String(e);
  }
}

function plotLines(canvas, xs, series) {
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  const pad = 40;
  ctx.clearRect(0, 0, w, h);
  const all = series.flatMap((s) => s.ys);
  const ymax = Math.max(...all, 1e-12);
  const xmax = xs[xs.length - 1];
  const px = (x) => pad + ((w - 2 * pad) * x) / xmax;
  const py = (y) => h - pad - ((h - 2 * pad) * y) / ymax;
  ctx.strokeStyle = "#888";
  ctx.beginPath();
  ctx.moveTo(pad, pad);
  ctx.lineTo(pad, h - pad);
  ctx.lineTo(w - pad, h - pad);
  ctx.stroke();
  ctx.fillStyle = "#444";
  ctx.font = "12px sans-serif";
  ctx.fillText("0", pad - 12, h - pad + 14);
  ctx.fillText(fmt(xmax, 3), w - pad - 20, h - pad + 14);
  ctx.fillText(fmt(ymax, 3), 2, pad + 4);
  series.forEach((s, k) => {
    ctx.strokeStyle = s.color;
    ctx.beginPath();
    s.ys.forEach((y, i) => (i ? ctx.lineTo(px(xs[i]), py(y)) : ctx.moveTo(px(xs[i]), py(y))));
    ctx.stroke();
    ctx.fillStyle = s.color;
    ctx.fillText(s.name, w - pad - 60, pad + 14 * k);
  });
}

function table(head, rows, rowClass = () => "") {
  const th = head.map((h) => `<th>${h}</th>`).join("");
  const tr = rows.map((r, i) => `<tr class="${rowClass(i)}">${r.map((c) => `<td>${c}</td>`).join("")}</tr>`).join("");
  return `<table><tr>${th}</tr>${tr}</table>`;
}

function runCurve() {
  guard($("c-err"), () => {
    const c = JSON.parse(survival($("c-model").value, $("c-rates").value, 300));
    lastCurve = c;
    plotLines($("c-plot"), c.t, [
      { name: "S(t)", ys: c.S, color: "#1f5fbf" },
      { name: "f(t)", ys: c.f, color: "#c0392b" },
    ]);
    const rows = c.lambda.map((l, i) => [i + 1, fmt(l, 8), fmt(c.A[i], 8)]);
    $("c-params").innerHTML = table(["i", "λ", "A"], rows) + `<p>mean time ${fmt(c.mean_time, 8)}</p>`;
  });
}

function runVariants() {
  guard($("v-err"), () => {
    const r = JSON.parse(variants($("v-lambda").value, $("v-a").value, $("v-moments").value));
    const rows = r.variants.map((v) => {
      const s = v.solution;
      const m = v.markers;
      return [
        s.model,
        s.branch.roots.join(" ") || "-",
        s.rates.map((x) => fmt(x)).join(", "),
        m ? m.T.map((x) => fmt(x)).join(", ") : "",
        m ? m.p.map((x) => fmt(x)).join(", ") : "",
        v.valid ? "yes" : "no",
      ];
    });
    let html = table(["model", "root", "rates", "T", "p", "valid"], rows, (i) => (r.variants[i].valid ? "" : "invalid"));
    html += `<p>Δp = (${r.delta_p.map((x) => fmt(x)).join(", ")}), Δlog10 T = (${r.delta_log10_t
      .map((x) => fmt(x))
      .join(", ")})</p>`;
    if (r.diagnostics.length) {
      html += "<p>" + r.diagnostics.map(([m, d]) => `${m}: ${d}`).join("<br>") + "</p>";
    }
    $("v-out").innerHTML = html;
  });
}

function drawHistogram(h) {
  const canvas = document.createElement("canvas");
  canvas.width = 230;
  canvas.height = 150;
  const ctx = canvas.getContext("2d");
  const max = Math.max(...h.counts, 1);
  const bw = (canvas.width - 10) / h.counts.length;
  ctx.fillStyle = "#1f5fbf";
  h.counts.forEach((c, i) => {
    const bh = ((canvas.height - 30) * c) / max;
    ctx.fillRect(5 + i * bw, canvas.height - 15 - bh, Math.max(bw - 1, 1), bh);
  });
  ctx.fillStyle = "#222";
  ctx.font = "12px sans-serif";
  ctx.fillText(`Δ ${h.marker}`, 6, 12);
  ctx.fillText(`0 … ${fmt(h.edges[h.edges.length - 1], 3)}`, 6, canvas.height - 2);
  return canvas;
}

function runExperiment() {
  guard($("e-err"), () => {
    const r = JSON.parse(experiment(Number($("e-n").value), BigInt($("e-seed").value), $("e-strict").checked));
    const z = r.zero_discrimination.map((x) => fmt(x, 3));
    $("e-summary").innerHTML =
      `<p>retained ${r.n_retained} of ${r.n_samples} (${fmt(r.retained_fraction, 4)}); ` +
      `no discrimination by p1 ${z[0]}, T1 ${z[1]}, T2 ${z[2]}</p>`;
    const box = $("e-hists");
    box.replaceChildren(...r.histograms.map(drawHistogram));
  });
}

await init();
$("c-run").onclick = runCurve;
$("v-run").onclick = runVariants;
$("v-from-curve").onclick = () => {
  if (!lastCurve) return;
  $("v-moments").value = "";
  $("v-lambda").value = lastCurve.lambda.join(",");
  $("v-a").value = lastCurve.A.join(",");
  runVariants();
};
$("e-run").onclick = runExperiment;
runCurve();
runVariants();
