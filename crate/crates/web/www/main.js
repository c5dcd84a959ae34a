import init, { schedule, pool, window_weights } from "./pkg/stgridpool_web.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function fail(target, err) {
  target.innerHTML = `<span class="err">${err.message ?? err}</span>`;
}

function drawSchedule() {
  const out = $("timeline");
  try {
    const s = JSON.parse(schedule(num("s-frames"), num("s-base"), num("s-levels"), num("s-m"), num("s-n")));
    const n = s.schedule.n_frames;
    out.innerHTML = "";
    for (const level of s.schedule.levels) {
      level.segments.forEach((seg, j) => {
        const row = document.createElement("div");
        row.className = "row";
        row.innerHTML = `<span class="name">L${level.level} #${j}</span>`;
        const cells = document.createElement("div");
        cells.className = "cells";
        for (let f = 0; f < n; f++) {
          const c = document.createElement("div");
          c.className = "cell";
          if (seg.sample_indices.includes(f)) c.classList.add("sample");
          if (f === seg.update_index) c.classList.add("update");
          c.title = `frame ${f}`;
          cells.appendChild(c);
        }
        row.appendChild(cells);
        out.appendChild(row);
      });
    }
    $("s-summary").textContent =
      `${s.summaries} summaries; frames rewritten: ${s.update_indices.join(", ")}`;
  } catch (e) {
    fail(out, e);
    $("s-summary").textContent = "";
  }
}

function heatmap(canvas, values, h, w, lo, hi) {
  const ctx = canvas.getContext("2d");
  const img = ctx.createImageData(w, h);
  for (let i = 0; i < values.length; i++) {
    const t = hi > lo ? (values[i] - lo) / (hi - lo) : 0;
    img.data[4 * i] = 255 * Math.min(1, 2 * t);
    img.data[4 * i + 1] = 255 * Math.max(0, 2 * t - 1);
    img.data[4 * i + 2] = 80 * (1 - t);
    img.data[4 * i + 3] = 255;
  }
  const tmp = new OffscreenCanvas(w, h);
  tmp.getContext("2d").putImageData(img, 0, 0);
  ctx.imageSmoothingEnabled = false;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.drawImage(tmp, 0, 0, canvas.width, canvas.height);
}

function drawPool() {
  $("p-beta-v").textContent = $("p-beta").value;
  try {
    const r = JSON.parse(pool(48, 32, num("p-seed"), num("p-beta"), num("p-order"), num("p-kernel")));
    const all = [...r.input_norms, ...r.weighted_norms, ...r.average_norms];
    const lo = Math.min(...all);
    const hi = Math.max(...all);
    heatmap($("c-in"), r.input_norms, r.in_size, r.in_size, lo, hi);
    heatmap($("c-w"), r.weighted_norms, r.out_h, r.out_w, lo, hi);
    heatmap($("c-a"), r.average_norms, r.out_h, r.out_w, lo, hi);
    const mean = (v) => v.reduce((a, b) => a + b, 0) / v.length;
    $("p-summary").textContent =
      `${r.in_size}x${r.in_size} -> ${r.out_h}x${r.out_w} tokens (ratio ${r.ratio.toFixed(4)}); ` +
      `mean output norm: weighted ${mean(r.weighted_norms).toFixed(3)}, average ${mean(r.average_norms).toFixed(3)}`;
  } catch (e) {
    fail($("p-summary"), e);
  }
}

function drawWeights() {
  $("w-beta-v").textContent = $("w-beta").value;
  const norms = $("w-norms").value.split(/[ ,]+/).filter(Boolean).map(Number);
  try {
    const w = window_weights(Float64Array.from(norms), num("w-beta"));
    $("w-table").innerHTML =
      "<tr><td>norm</td>" + norms.map((n) => `<td>${n}</td>`).join("") + "</tr>" +
      "<tr><td>weight</td>" + Array.from(w).map((x) => `<td>${x.toFixed(4)}</td>`).join("") + "</tr>";
  } catch (e) {
    fail($("w-table"), e);
  }
}

await init();
for (const id of ["s-frames", "s-base", "s-levels", "s-m", "s-n"]) $(id).addEventListener("input", drawSchedule);
for (const id of ["p-beta", "p-order", "p-kernel", "p-seed"]) $(id).addEventListener("input", drawPool);
for (const id of ["w-norms", "w-beta"]) $(id).addEventListener("input", drawWeights);
drawSchedule();
drawPool();
drawWeights();
