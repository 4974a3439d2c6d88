// Browser entry point: wire config, client, app, and hash navigation.

import { ApiClient } from "./api.js";
import { App } from "./app.js";
import { loadConfig } from "./config.js";

const root = document.getElementById("app");
if (!root) throw new Error("missing #app container");

const cfg = loadConfig(window.localStorage, window.location.origin);
const client = new ApiClient(cfg, (input, init) => window.fetch(input, init));
const app = new App(root, client, { window, config: cfg });

window.addEventListener("hashchange", () => {
  void app.navigate(window.location.hash);
});
void app.navigate(window.location.hash || "#/queue");
