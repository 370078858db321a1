import init, { tokens, parse, segment_iou } from "./pkg/chronoframe_web.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function show(id, f) {
  try {
    $(id).textContent = f();
  } catch (e) {
    $(id).textContent = "error: " + e;
  }
}

function pretty(json) {
  return JSON.stringify(JSON.parse(json), null, 2);
}

function update() {
  show("tokens-out", () => pretty(tokens(num("frames"), num("window"), num("stride"), num("queries"), $("mode").value)));
  show("parse-out", () => pretty(parse($("task").value, $("text").value, num("duration"))));
  show("iou-out", () => segment_iou(num("a0"), num("a1"), num("b0"), num("b1")).toFixed(4));
}

await init();
document.querySelectorAll("input, select, textarea").forEach((el) => el.addEventListener("input", update));
update();
