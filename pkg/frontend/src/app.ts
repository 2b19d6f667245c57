import { ScanApiClient } from "./api.js";
import { ScanController, ViewState } from "./controller.js";
import { renderError, renderHelp, renderProgress, renderReport } from "./render.js";

/** DOM shell: wires the form, result pane, rescan/retry buttons and the
 * help tab to the controller. All rendering goes through render.ts. */
export function mountApp(root: Document = document): void {
  const form = root.getElementById("scan-form") as HTMLFormElement;
  const input = root.getElementById("url-input") as HTMLInputElement;
  const result = root.getElementById("result") as HTMLElement;
  const helpPane = root.getElementById("help") as HTMLElement;
  const scanTab = root.getElementById("tab-scan") as HTMLButtonElement;
  const helpTab = root.getElementById("tab-help") as HTMLButtonElement;

  const api = new ScanApiClient();
  const controller = new ScanController(api);

  controller.onChange((state: ViewState) => {
    switch (state.phase) {
      case "idle":
        result.innerHTML = "";
        break;
      case "scanning":
        result.innerHTML = renderProgress(state.url);
        break;
      case "report":
        result.innerHTML = renderReport(state.report);
        break;
      case "error":
        result.innerHTML = renderError(state.message, state.retriable);
        break;
    }
  });

  form.addEventListener("submit", (event) => {
    event.preventDefault();
    void controller.submit(input.value);
  });

  // rescan / retry buttons are re-rendered with each report
  result.addEventListener("click", (event) => {
    const target = event.target as HTMLElement;
    if (target.id === "rescan" || target.id === "retry") {
      void controller.rescan();
    }
  });

  let helpLoaded = false;
  helpTab.addEventListener("click", async () => {
    helpPane.hidden = false;
    result.hidden = true;
    form.hidden = true;
    if (!helpLoaded) {
      try {
        helpPane.innerHTML = renderHelp(await api.getHelp());
        helpLoaded = true;
      } catch {
        helpPane.innerHTML = "<p>help content unavailable</p>";
      }
    }
  });
  scanTab.addEventListener("click", () => {
    helpPane.hidden = true;
    result.hidden = false;
    form.hidden = false;
  });
}
