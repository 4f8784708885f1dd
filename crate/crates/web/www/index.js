// Built with `wasm-pack build crates/web --target web --out-dir www/pkg`.
import init, { Demo } from "./pkg/evego_web.js";

const $ = (id) => document.getElementById(id);

function paint(canvas, demo, bytes) {
  canvas.width = demo.width();
  canvas.height = demo.height();
  const img = new ImageData(new Uint8ClampedArray(bytes), demo.width(), demo.height());
  canvas.getContext("2d").putImageData(img, 0, 0);
}

await init();
const demo = new Demo(7);
$("status").textContent = `${demo.width()}×${demo.height()} sensor, ${demo.window_count()} windows`;
$("lnes-index").max = demo.window_count() - 1;

function drawFrames() {
  const k = Number($("lnes-index").value);
  const blur = Number($("blur").value);
  const thresh = Number($("thresh").value);
  paint($("lnes"), demo, demo.lnes_rgba(k));
  paint($("mask"), demo, demo.mask_rgba(k, blur, thresh));
  $("stats").textContent = JSON.stringify(JSON.parse(demo.filter_stats(k, blur, thresh)), null, 2);
}

function drawHand() {
  const args = ["curl", "yaw", "depth"].map((id) => Number($(id).value));
  paint($("hand"), demo, demo.hand_rgba(...args));
  $("area").textContent = `${demo.hand_area(...args)} pixels`;
}

for (const id of ["lnes-index", "blur", "thresh"]) $(id).addEventListener("input", drawFrames);
for (const id of ["curl", "yaw", "depth"]) $(id).addEventListener("input", drawHand);
drawFrames();
drawHand();
