import init, {
  parse_tactic,
  generate_theorems,
  train_model,
  prove_theorem,
} from "./pkg/tacgen_wasm.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value) >>> 0;

function show(id, fn) {
  const out = $(id);
  out.classList.remove("err");
  try {
    out.textContent = fn();
  } catch (e) {
    out.classList.add("err");
    out.textContent = String(e.message ?? e);
  }
}

async function main() {
  await init();

  $("parse").onclick = () => show("parse-out", () => parse_tactic($("tactic").value));

  $("generate").onclick = () =>
    show("gen-out", () => generate_theorems(num("gen-seed"), num("gen-count"), num("gen-depth")));

  $("train").onclick = () => {
    $("train-out").textContent = "training…";
    // Let the browser paint before the synchronous training call.
    setTimeout(
      () =>
        show("train-out", () =>
          train_model(num("train-seed"), num("train-count"), 4, num("train-epochs"), num("train-dim"))
        ),
      20
    );
  };

  $("prove").onclick = () => {
    $("prove-out").textContent = "searching…";
    setTimeout(
      () =>
        show("prove-out", () =>
          prove_theorem($("theorem").value, num("beam"), num("depth"), num("budget"), 0)
        ),
      20
    );
  };
}

main();
