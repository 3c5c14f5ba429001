import init, { hazardMap, landingPath, decisionTree } from "./pkg/halo_wasm.js";

const EXTENT = 80;
const COLORS = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"];
const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

let view = null;   // last hazard map
let overlay = [];  // paths drawn over the map: { positions, color }

function status(text) {
  $("status").textContent = text;
}

function timed(label, f) {
  const t0 = performance.now();
  try {
    const out = JSON.parse(f());
    return [out, `${label} in ${(performance.now() - t0).toFixed(0)} ms`];
  } catch (e) {
    status(`${label} failed: ${e.message ?? e}`);
    return [null, ""];
  }
}

// World (x, y) to map-canvas pixels; north is up.
function toMap(x, y) {
  const c = $("map");
  const s = c.width / EXTENT;
  return [(x + EXTENT / 2) * s, c.height - (y + EXTENT / 2) * s];
}

function drawMap() {
  const c = $("map");
  const g = c.getContext("2d");
  g.clearRect(0, 0, c.width, c.height);
  if (!view) return;
  const finite = view.heights.filter((h) => h !== null);
  const lo = Math.min(...finite), hi = Math.max(...finite);
  const px = (c.width / view.cols);
  for (let r = 0; r < view.rows; r++) {
    for (let q = 0; q < view.cols; q++) {
      const i = r * view.cols + q;
      const h = view.heights[i];
      const shade = h === null ? 0.3 : 0.55 + 0.45 * (h - lo) / Math.max(hi - lo, 1e-9);
      g.fillStyle = view.safe[i]
        ? `rgb(${60 * shade | 0},${200 * shade | 0},${90 * shade | 0})`
        : `rgb(${220 * shade | 0},${60 * shade | 0},${50 * shade | 0})`;
      g.fillRect(q * px, c.height - (r + 1) * px, px + 0.5, px + 0.5);
    }
  }
  g.lineWidth = 2;
  view.sites.forEach((s, k) => {
    const [u, v] = toMap(s.center[0], s.center[1]);
    g.strokeStyle = "#fff";
    g.beginPath();
    g.arc(u, v, s.radius * c.width / EXTENT, 0, 2 * Math.PI);
    g.stroke();
    g.fillStyle = "#fff";
    g.fillText(String(k), u - 3, v + 4);
  });
  for (const p of overlay) {
    g.strokeStyle = p.color;
    g.beginPath();
    p.positions.forEach(([x, y], k) => {
      const [u, v] = toMap(x, y);
      k ? g.lineTo(u, v) : g.moveTo(u, v);
    });
    g.stroke();
  }
}

// Altitude against horizontal distance from the start point.
function drawProfile(paths) {
  const c = $("profile");
  const g = c.getContext("2d");
  g.clearRect(0, 0, c.width, c.height);
  if (!paths.length) return;
  const pad = 36;
  const range = (p) => Math.hypot(p[0] - paths[0].positions[0][0], p[1] - paths[0].positions[0][1]);
  const maxR = Math.max(1, ...paths.flatMap((p) => p.positions.map(range)));
  const maxZ = Math.max(1, ...paths.flatMap((p) => p.positions.map((q) => q[2])));
  const u = (r) => pad + (c.width - 2 * pad) * r / maxR;
  const v = (z) => c.height - pad - (c.height - 2 * pad) * z / maxZ;
  g.strokeStyle = "#999";
  g.strokeRect(pad, pad, c.width - 2 * pad, c.height - 2 * pad);
  g.fillStyle = "#444";
  g.fillText(`${maxZ.toFixed(0)} m`, 2, pad + 4);
  g.fillText(`${maxR.toFixed(0)} m`, c.width - pad - 10, c.height - pad + 14);
  g.lineWidth = 2;
  for (const p of paths) {
    g.strokeStyle = p.color;
    g.beginPath();
    p.positions.forEach((q, k) => (k ? g.lineTo(u(range(q)), v(q[2])) : g.moveTo(u(range(q)), v(q[2]))));
    g.stroke();
  }
}

function scan() {
  const [out, note] = timed("hazard map", () =>
    hazardMap(num("seed"), num("rocks"), EXTENT, 90, num("alpha"), num("nsites")));
  if (!out) return;
  view = out;
  overlay = [];
  drawMap();
  drawProfile([]);
  $("tree-btn").disabled = view.sites.length < 2;
  const safe = view.safe.filter(Boolean).length;
  status(`${note}: ${view.points} LiDAR returns, ${safe} of ${view.safe.length} cells safe, ${view.sites.length} sites\n` +
    view.sites.map((s, k) => `  site ${k}: (${s.center[0].toFixed(1)}, ${s.center[1].toFixed(1)}) r = ${s.radius.toFixed(1)} m`).join("\n"));
}

function descend(ev) {
  const c = $("map");
  const rect = c.getBoundingClientRect();
  const x = (ev.clientX - rect.left) / c.width * EXTENT - EXTENT / 2;
  const y = EXTENT / 2 - (ev.clientY - rect.top) / c.height * EXTENT;
  $("target").textContent = `(${x.toFixed(1)}, ${y.toFixed(1)})`;
  const [out, note] = timed("descent", () => landingPath(0, 0, num("alt"), x, y));
  if (!out) return;
  const path = { positions: out.positions, color: "#111" };
  overlay = [path];
  drawMap();
  drawProfile([path]);
  const tmin = Math.min(...out.thrust), tmax = Math.max(...out.thrust);
  status(`${note}: ${out.nodes} steps, ${out.time_of_flight} s, effort ${out.cost.toFixed(2)} N s, thrust ${tmin.toFixed(2)}..${tmax.toFixed(2)} N`);
}

function tree() {
  const n = Math.min(num("ntree"), view.sites.length);
  // Largest sites first in the list; reject the smallest first.
  const chosen = view.sites.slice(0, n).reverse();
  const targets = chosen.flatMap((s) => [s.center[0], s.center[1]]);
  const [out, note] = timed("decision tree", () => decisionTree(0, 0, num("alt"), Float64Array.from(targets), num("eps")));
  if (!out) return;
  const paths = out.paths.map((p, j) => ({ positions: p.positions, color: COLORS[j % COLORS.length] }));
  overlay = paths;
  drawMap();
  drawProfile(paths);
  const lines = chosen.map((s, j) => {
    const k = out.rejection_order.indexOf(j);
    const when = k < 0 ? "survivor" : `leaves trunk at ${out.branch_times[k + 1].toFixed(1)} s`;
    return `  target ${j} (site ${view.sites.indexOf(s)}): cost ${out.target_costs[j].toFixed(2)} / optimum ${out.optimal_costs[j].toFixed(2)} N s, ${when}`;
  });
  status(`${note}\n${lines.join("\n")}`);
}

await init();
$("map-btn").addEventListener("click", scan);
$("map").addEventListener("click", (ev) => view && descend(ev));
$("tree-btn").addEventListener("click", tree);
scan();
