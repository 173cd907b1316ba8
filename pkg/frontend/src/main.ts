import { ConsoleApi } from "./api.js";
import { LabelConsole } from "./console.js";

const root = document.getElementById("app");
if (root) {
  new LabelConsole(root, new ConsoleApi()).start();
}
