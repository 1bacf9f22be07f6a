import init, { scenarios, solve, compare, fracture } from "./pkg/imitation_web.js";

const $ = (id) => document.getElementById(id);
const CLASSES = { "#": "wall", X: "goal", S: "start", R: "river", "*": "penalty" };

function status(msg) {
  $("status").textContent = msg || "";
}

function call(fn) {
  try {
    status("");
    return JSON.parse(fn());
  } catch (e) {
    status(String(e));
    return null;
  }
}

function drawGrid(grid, label, mark) {
  const table = document.createElement("table");
  table.className = "grid";
  grid.rows.forEach((row, y) => {
    const tr = table.insertRow();
    [...row].forEach((sym, x) => {
      const td = tr.insertCell();
      const s = y * grid.width + x;
      if (CLASSES[sym]) td.classList.add(CLASSES[sym]);
      if (mark && mark.has(s)) td.classList.add("disputed");
      td.textContent = label ? label(s, sym) : sym === "." ? "" : sym;
    });
  });
  return table;
}

function onSolve() {
  const r = call(() => solve($("scenario").value));
  if (!r) return;
  const out = $("solve-out");
  out.replaceChildren(
    drawGrid(r.grid, (s, sym) => ("#X*".includes(sym) ? sym : r.policy[s])),
    Object.assign(document.createElement("p"), {
      textContent: `start value ${r.start_value.toFixed(4)}, ${r.goals_per_1000.toFixed(2)} goals per 1000 steps`,
    }),
  );
}

function plot(r) {
  const c = $("chart");
  const g = c.getContext("2d");
  g.clearRect(0, 0, c.width, c.height);
  const all = [...r.observer, ...r.control, r.summary.optimal_rate];
  const top = Math.max(1, ...all) * 1.1;
  const n = r.observer.length;
  const line = (ys, color) => {
    g.strokeStyle = color;
    g.beginPath();
    ys.forEach((y, i) => {
      const px = (i / Math.max(1, n - 1)) * (c.width - 20) + 10;
      const py = c.height - 10 - (y / top) * (c.height - 20);
      i ? g.lineTo(px, py) : g.moveTo(px, py);
    });
    g.stroke();
  };
  line(new Array(n).fill(r.summary.optimal_rate), "#bbb");
  line(r.control, "#c33");
  line(r.observer, "#36c");
}

function onCompare() {
  status("running...");
  setTimeout(() => {
    const r = call(() =>
      compare($("scenario").value, +$("runs").value, +$("steps").value, +$("seed").value, $("imitation").checked),
    );
    if (!r) return;
    plot(r);
    const s = r.summary;
    $("compare-out").textContent =
      `blue observer, red control, grey optimal (goals per window)\n` +
      `optimal ${s.optimal_rate.toFixed(2)}\n` +
      `observer converged at ${s.obs_convergence ?? "never"}, final ${s.obs_final.toFixed(2)}\n` +
      `control converged at ${s.ctrl_convergence ?? "never"}, final ${s.ctrl_final.toFixed(2)}`;
  }, 10);
}

function onFracture() {
  const r = call(() => fracture($("scenario").value));
  if (!r) return;
  const parts = [];
  r.mentors.forEach((m, i) => {
    parts.push(Object.assign(document.createElement("p"), {
      textContent: `mentor ${i}: phi ${m.phi.toFixed(3)}, ${m.disputed.length} disputed states (outlined)`,
    }));
    parts.push(drawGrid(r.observer, null, new Set(m.disputed)));
  });
  if (!r.mentors.length) parts.push(document.createTextNode("no mentors"));
  $("fracture-out").replaceChildren(...parts);
}

await init();
for (const name of JSON.parse(scenarios())) {
  $("scenario").add(new Option(name, name));
}
$("solve").onclick = onSolve;
$("compare").onclick = onCompare;
$("fracture").onclick = onFracture;
