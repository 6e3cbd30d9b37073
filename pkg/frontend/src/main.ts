import { ApiClient } from "./api.js";
import { mountApp } from "./app.js";

// Served from the API's /ui mount by default; override for a split deploy.
const base = (window as unknown as { RX_API_BASE?: string }).RX_API_BASE ?? "";

const root = document.getElementById("app");
if (!root) {
  throw new Error("missing #app element");
}
void mountApp(root, new ApiClient(base)).start();
