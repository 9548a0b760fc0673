import { ApiClient } from "./api.js";
import { chatView } from "./chat.js";
import { rulesCalculator } from "./calculator.js";

export function installApp(root: HTMLElement, api: ApiClient = new ApiClient()): void {
  root.replaceChildren();

  const header = document.createElement("header");
  const title = document.createElement("h1");
  title.textContent = "Regulatory corpus console";
  header.appendChild(title);
  root.appendChild(header);

  const chatHeading = document.createElement("h2");
  chatHeading.textContent = "Ask the corpus";
  root.appendChild(chatHeading);
  root.appendChild(chatView(api));

  const calcHeading = document.createElement("h2");
  calcHeading.textContent = "Rules calculator";
  root.appendChild(calcHeading);
  root.appendChild(rulesCalculator(api));
}

const mount = document.querySelector<HTMLElement>("#app");
if (mount) {
  installApp(mount);
}
