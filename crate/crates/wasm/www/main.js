import init, { sweep, curves, dini } from "./pkg/parabolic_obstacle_wasm.js";

const $ = (id) => document.getElementById(id);
const num = (id) => parseFloat($(id).value);

const DEFAULT_PARAMS = {
  "traveling-wave": '{"a": 0.3}',
  "hoelder-rhs": '{"beta": 0.5}',
  "pstar": '{"kappa": 1}',
};

function show(id, text, failed) {
  $(id).textContent = text;
  $(id).className = failed ? "err" : "";
}

function guard(out, fn) {
  try {
    fn();
  } catch (e) {
    show(out, String(e.message ?? e), true);
  }
}

function axes(ctx, xr, yr, xlabel, ylabel, logx) {
  const { width: w, height: h } = ctx.canvas;
  const pad = 40;
  ctx.clearRect(0, 0, w, h);
  ctx.strokeStyle = "#888";
  ctx.strokeRect(pad, 10, w - pad - 10, h - pad - 10);
  ctx.fillStyle = "#444";
  ctx.fillText(xlabel, w / 2, h - 8);
  ctx.fillText(ylabel, 4, 20);
  ctx.fillText(xr[0].toPrecision(2), pad, h - pad + 14);
  ctx.fillText(xr[1].toPrecision(2), w - 40, h - pad + 14);
  ctx.fillText(yr[0].toPrecision(2), 2, h - pad);
  ctx.fillText(yr[1].toPrecision(2), 2, 30);
  const fx = logx ? Math.log : (v) => v;
  return (x, y) => [
    pad + ((fx(x) - fx(xr[0])) / (fx(xr[1]) - fx(xr[0]))) * (w - pad - 10),
    h - pad - ((y - yr[0]) / (yr[1] - yr[0])) * (h - pad - 20),
  ];
}

function plotSweep(s) {
  const ctx = $("sweep-plot").getContext("2d");
  const at = axes(ctx, [-1, 1], [-1, 0], "x", "t", false);
  s.x.forEach((x, i) => {
    const [px, py] = at(x, s.t[i]);
    ctx.fillStyle = s.regular[i] ? "#1565c0" : "#e65100";
    ctx.fillRect(px - 1.5, py - 1.5, 3, 3);
  });
}

const COLOURS = { sigma: "#2e7d32", n_tilde: "#6a1b9a", n_reg: "#1565c0", m_reg: "#c62828" };

function plotCurves(c) {
  const ctx = $("curves-plot").getContext("2d");
  const top = Math.max(1e-12, ...Object.keys(COLOURS).flatMap((k) => c[k]));
  const at = axes(ctx, [c.radii[0], c.radii[c.radii.length - 1]], [0, top], "r (log)", "value", true);
  let y = 30;
  for (const [key, colour] of Object.entries(COLOURS)) {
    ctx.strokeStyle = colour;
    ctx.beginPath();
    c[key].forEach((v, i) => {
      const [px, py] = at(c.radii[i], v);
      i ? ctx.lineTo(px, py) : ctx.moveTo(px, py);
    });
    ctx.stroke();
    ctx.fillStyle = colour;
    ctx.fillText(key, ctx.canvas.width - 70, (y += 14));
  }
}

await init();

$("case").addEventListener("change", () => {
  $("params").value = DEFAULT_PARAMS[$("case").value] ?? "";
});

$("run-sweep").addEventListener("click", () =>
  guard("sweep-out", () => {
    const s = JSON.parse(sweep($("case").value, $("params").value, num("h"), $("solve").checked));
    plotSweep(s);
    const regular = s.regular.filter(Boolean).length;
    let text = `${s.t.length} interface points, ${regular} classified regular (blue)`;
    if (s.lcp_residual !== null) text += `\nmax complementarity residual ${s.lcp_residual.toExponential(2)}`;
    show("sweep-out", text, false);
  }),
);

$("run-curves").addEventListener("click", () =>
  guard("curves-out", () => {
    const c = JSON.parse(curves($("case").value, $("params").value, num("h"), num("cx"), num("ct")));
    plotCurves(c);
    const d = c.dini_sigma;
    show(
      "curves-out",
      `κ = f(x, t) = ${c.kappa}\n∫ σ(s)/s ds up to r = ${c.radii.at(-1).toPrecision(3)}: ` +
        `${d.value.toPrecision(4)}${d.non_dini ? " (tail looks non-Dini)" : ""}`,
      false,
    );
  }),
);

$("run-dini").addEventListener("click", () =>
  guard("dini-out", () => show("dini-out", JSON.stringify(JSON.parse(dini($("radii").value, $("values").value)), null, 2), false)),
);
