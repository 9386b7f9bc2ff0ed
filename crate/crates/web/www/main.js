// Expects the wasm-bindgen output (`--target web`) in ./pkg.
import init, { fractal_noise_rgba, augment_view_rgba, Stylizer } from "./pkg/promptpainter_web.js";

const RESOLUTION = 64;
const CROP = 32;

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function paint(canvas, rgba, size) {
  canvas.width = size;
  canvas.height = size;
  const data = new ImageData(new Uint8ClampedArray(rgba), size, size);
  canvas.getContext("2d").putImageData(data, 0, 0);
}

function report(err) {
  $("status").textContent = err ? String(err) : "";
}

function drawNoise() {
  try {
    const rgba = fractal_noise_rgba(128, 128, num("n-octaves"), num("n-persistence"), num("n-freq"), BigInt(num("n-seed")));
    paint($("noise"), rgba, 128);
    report();
  } catch (e) {
    report(e);
  }
}

let stylizer = null;
let running = false;
let viewSeed = 0n;

function resetStylizer() {
  try {
    stylizer?.free();
    stylizer = new Stylizer($("s-prompt").value, RESOLUTION, BigInt(num("s-seed")), num("s-lr"), 4);
    showStylizer();
    report();
  } catch (e) {
    stylizer = null;
    report(e);
  }
}

function showStylizer() {
  paint($("stylized"), stylizer.image_rgba(), RESOLUTION);
  $("s-iter").textContent = stylizer.iteration();
  const loss = stylizer.loss();
  $("s-loss").textContent = Number.isNaN(loss) ? "-" : loss.toFixed(5);
}

function tick() {
  if (!running || !stylizer) return;
  try {
    stylizer.step();
    showStylizer();
    requestAnimationFrame(tick);
  } catch (e) {
    running = false;
    $("s-run").textContent = "Run";
    report(e);
  }
}

function drawViews() {
  if (!stylizer) return;
  const source = stylizer.image_rgba();
  const row = $("views");
  row.replaceChildren();
  try {
    for (let i = 0; i < 4; i++) {
      const view = augment_view_rgba(source, RESOLUTION, RESOLUTION, CROP, num("a-persp"), num("a-flip"), num("a-sigma"), viewSeed++);
      const canvas = document.createElement("canvas");
      paint(canvas, view, CROP);
      row.append(canvas);
    }
    report();
  } catch (e) {
    report(e);
  }
}

await init();

for (const id of ["n-octaves", "n-persistence", "n-freq", "n-seed"]) $(id).addEventListener("input", drawNoise);
$("a-draw").addEventListener("click", drawViews);
$("s-reset").addEventListener("click", resetStylizer);
$("s-run").addEventListener("click", () => {
  running = !running;
  $("s-run").textContent = running ? "Pause" : "Run";
  if (running) tick();
});

drawNoise();
resetStylizer();
drawViews();
