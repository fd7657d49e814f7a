import { ApiClient } from "./api";
import { DashboardApp } from "./app";
import { apiBase } from "./config";

const root = document.getElementById("app");
if (!root) {
  throw new Error("missing #app mount point");
}
const app = new DashboardApp(root, new ApiClient(apiBase()));
void app.init();
