import init, { renderStrokes, strokeDistances, synthSample } from "./pkg/brushwork_web.js";

const NAMES = ["x", "y", "h", "w", "theta", "r", "g", "b"];
const $ = (id) => document.getElementById(id);

function sliders(host, values, onChange) {
  NAMES.forEach((name, i) => {
    const label = document.createElement("label");
    const input = Object.assign(document.createElement("input"), {
      type: "range", min: 0, max: 1, step: 0.01, value: values[i],
    });
    input.addEventListener("input", () => { values[i] = Number(input.value); onChange(); });
    label.append(name, input);
    host.append(label, document.createElement("br"));
  });
}

function blit(canvas, rgba, size) {
  canvas.width = canvas.height = size;
  const ctx = canvas.getContext("2d");
  ctx.putImageData(new ImageData(new Uint8ClampedArray(rgba), size, size), 0, 0);
}

function report(el, fn) {
  try { fn(); } catch (e) { el.textContent = String(e); }
}

await init();

const a = [0.5, 0.5, 0.3, 0.6, 0.2, 0.2, 0.4, 0.8];
const b = [0.6, 0.4, 0.25, 0.5, 0.7, 0.9, 0.2, 0.2];

function drawSingle() {
  report($("distances"), () => {
    blit($("single"), renderStrokes(Float64Array.from(a), 128, 1, 1, 1, $("brush").value), 128);
  });
}

function drawPair() {
  report($("distances"), () => {
    const both = Float64Array.from([...a, ...b]);
    blit($("pair"), renderStrokes(both, 128, 1, 1, 1, $("brush").value), 128);
    const [l1, w] = strokeDistances(Float64Array.from(a), Float64Array.from(b));
    $("distances").textContent = `L1 parameter distance  ${l1.toFixed(4)}\nWasserstein distance   ${w.toFixed(4)}`;
  });
}

function redraw() { drawSingle(); drawPair(); }

function synth() {
  report($("labels"), () => {
    const s = synthSample(Number($("seed").value), 64, Number($("count").value), $("brush").value);
    blit($("canvas-img"), s.canvas, s.size);
    blit($("target-img"), s.target, s.size);
    const strokes = s.strokes, labels = s.labels;
    const lines = [];
    for (let i = 0; i < labels.length; i++) {
      const p = Array.from(strokes.slice(i * 8, i * 8 + 8), (v) => v.toFixed(2)).join(" ");
      lines.push(`${labels[i] ? "target " : "buried "} ${p}`);
    }
    $("labels").textContent = lines.join("\n");
    s.free();
  });
}

sliders($("single-controls"), a, redraw);
sliders($("pair-controls"), b, drawPair);
$("brush").addEventListener("change", () => { redraw(); synth(); });
$("synth").addEventListener("click", synth);
redraw();
synth();
