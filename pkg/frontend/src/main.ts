import { ApiClient } from "./api.js";
import { App } from "./app.js";

const params = new URLSearchParams(window.location.search);
const baseUrl = params.get("api") ?? "http://127.0.0.1:8000";
const seed = Number(params.get("seed") ?? "3");

const root = document.getElementById("root");
if (!root) throw new Error("missing #root element");

const app = new App(root, new ApiClient(baseUrl));
// exposed for debugging and for the scripted browser test
(window as unknown as { app: App }).app = app;
void app.start({ seed });
