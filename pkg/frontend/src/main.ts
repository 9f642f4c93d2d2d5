import { ApiClient } from "./api.js";
import {
  renderApiFailure,
  renderCases,
  renderExplanation,
  renderNetworkGraph,
  renderSubscalePopup,
} from "./render.js";
import { WhatIfViewModel } from "./viewModel.js";

function featureInputs(vm: WhatIfViewModel, container: HTMLElement): void {
  for (const spec of vm.model.features) {
    const row = document.createElement("div");
    row.className = "feature-row";
    const label = document.createElement("label");
    label.textContent = spec.name;
    const input = document.createElement("input");
    input.type = "number";
    input.name = spec.name;
    const missing = document.createElement("input");
    missing.type = "checkbox";
    missing.title = "missing";
    input.addEventListener("input", () => {
      missing.checked = false;
      const parsed = input.value === "" ? null : Number(input.value);
      vm.setFeature(spec.name, Number.isNaN(parsed as number) ? null : parsed);
    });
    missing.addEventListener("change", () => {
      if (missing.checked) {
        input.value = "";
        vm.setMissing(spec.name);
      }
    });
    row.append(label, input, missing);
    container.append(row);
  }
}

export async function boot(root: HTMLElement, baseUrl: string): Promise<void> {
  const api = new ApiClient(baseUrl);
  let model;
  try {
    model = await api.getModel();
  } catch (err) {
    root.innerHTML = renderApiFailure(
      err instanceof Error ? err.message : String(err)
    );
    return;
  }
  const vm = new WhatIfViewModel(model, api);

  root.innerHTML =
    `<div class="inputs"></div>` +
    `<div class="graph"></div>` +
    `<div class="popup-slot"></div>` +
    `<button class="explain-button">Explain</button>` +
    `<div class="explanation-slot"></div>` +
    `<div class="cases-slot"></div>` +
    `<div class="error-slot"></div>`;
  const inputs = root.querySelector(".inputs") as HTMLElement;
  const graph = root.querySelector(".graph") as HTMLElement;
  const popup = root.querySelector(".popup-slot") as HTMLElement;
  const explanationSlot = root.querySelector(".explanation-slot") as HTMLElement;
  const casesSlot = root.querySelector(".cases-slot") as HTMLElement;
  const errorSlot = root.querySelector(".error-slot") as HTMLElement;

  featureInputs(vm, inputs);

  vm.subscribe((snapshot) => {
    graph.innerHTML = snapshot.prediction
      ? renderNetworkGraph(snapshot.prediction)
      : "";
    explanationSlot.innerHTML = snapshot.explanation
      ? renderExplanation(snapshot.explanation)
      : "";
    casesSlot.innerHTML = snapshot.cases
      ? renderCases(
          snapshot.cases,
          snapshot.features,
          model.features.map((f) => f.name)
        )
      : "";
    errorSlot.innerHTML = snapshot.error ? renderApiFailure(snapshot.error) : "";
  });

  graph.addEventListener("click", (event) => {
    const node = (event.target as HTMLElement).closest(".subscale-node");
    const snapshot = vm.current();
    if (node && snapshot.prediction) {
      popup.innerHTML = renderSubscalePopup(
        model,
        snapshot.prediction,
        node.getAttribute("data-subscale") ?? "",
        snapshot.features
      );
    }
  });

  (root.querySelector(".explain-button") as HTMLElement).addEventListener(
    "click",
    () => void vm.requestExplanation()
  );
}
