import init, { simulate, probe, ttest } from "./pkg/planshift_demo.js";

const num = (form, name) => Number(form.elements[name].value);

function show(id, text, isError = false) {
  const el = document.getElementById(id);
  el.textContent = text;
  el.classList.toggle("error", isError);
}

function bind(formId, outId, run) {
  const form = document.getElementById(formId);
  const go = () => {
    try {
      run(form);
    } catch (e) {
      show(outId, String(e), true);
    }
  };
  form.addEventListener("submit", (ev) => {
    ev.preventDefault();
    go();
  });
  go();
}

await init();

bind("sim", "sim-out", (f) => {
  const r = JSON.parse(simulate(
    num(f, "prior_mean"), num(f, "prior_precision"), num(f, "target"),
    num(f, "base_gain"), num(f, "gain_growth"), num(f, "steps"),
    num(f, "emission_sd"), num(f, "seed"),
  ));
  show("sim-out",
    `bias ${r.first_bias.toFixed(3)} -> ${r.final_bias.toFixed(3)}   ` +
    `final planning strength ${r.final_strength.toFixed(4)}   ` +
    `entropy gap (half gain) ${r.entropy_gap.toFixed(4)} nats`);
  document.getElementById("sim-fig").innerHTML = r.svg;
});

bind("probe", "probe-out", (f) => {
  const r = JSON.parse(probe(num(f, "lookahead"), num(f, "noise"), num(f, "alpha"), num(f, "seed")));
  const h = r.recovered_horizon === null ? "none" : `${r.recovered_horizon} tokens`;
  show("probe-out", `R² stays above 0.5 up to offset ${h}`);
  document.getElementById("probe-fig").innerHTML = r.svg;
});

bind("ttest", "ttest-out", (f) => {
  const r = JSON.parse(ttest(f.elements.a.value, f.elements.b.value));
  show("ttest-out",
    `mean A ${r.mean_a.toFixed(3)}, mean B ${r.mean_b.toFixed(3)}\n` +
    `t = ${r.t.toFixed(3)}, df = ${r.df.toFixed(2)}, p = ${r.p.toPrecision(3)} ${r.stars}`);
});
