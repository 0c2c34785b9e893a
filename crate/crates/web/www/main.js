import init, { Demo } from "./pkg/uvsplat_web.js";

const RENDER_RES = 256;
const $ = (id) => document.getElementById(id);

function draw(canvas, size, bytes) {
  canvas.width = size;
  canvas.height = size;
  const ctx = canvas.getContext("2d");
  ctx.putImageData(new ImageData(new Uint8ClampedArray(bytes), size, size), 0, 0);
}

function timed(fn) {
  const t = performance.now();
  const out = fn();
  return [out, performance.now() - t];
}

await init();
const demo = new Demo(64);
const res = demo.uvRes();

function levels() { return Number($("levels").value); }
function tau() { return Number($("tau").value); }

function refreshFused() {
  $("levels-v").textContent = levels();
  $("tau-v").textContent = tau().toFixed(1);
  const [bytes, ms] = timed(() => demo.fuse(levels(), tau(), $("raw").checked));
  draw($("fused"), res, bytes);
  $("fused-stat").textContent =
    `${demo.uncovered()} of ${res * res} texels empty, ${demo.splatCount()} splats, ${ms.toFixed(0)} ms`;
  refreshShare();
  refreshRender();
}

function refreshShare() {
  draw($("share"), res, demo.viewShare(Number($("view").value), levels(), tau()));
}

function refreshRender() {
  const v = (id) => Number($(id).value);
  const [bytes, ms] = timed(() => demo.drive(v("a"), v("b"), v("c"), v("yaw"), RENDER_RES));
  draw($("render"), RENDER_RES, bytes);
  $("render-stat").textContent = `${ms.toFixed(0)} ms`;
}

for (const id of ["levels", "tau", "raw"]) $(id).addEventListener("input", refreshFused);
$("view").addEventListener("change", refreshShare);
for (const id of ["a", "b", "c", "yaw"]) $(id).addEventListener("input", refreshRender);
refreshFused();
