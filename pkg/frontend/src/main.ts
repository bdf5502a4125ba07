import { DeepwasteApi } from "./api";
import { createApp } from "./app";

/** Runtime global first (set by the page embedding us), then build-time
 * env, then the default local service address. */
export function resolveBaseUrl(): string {
  const runtime = (window as { DEEPWASTE_API?: string }).DEEPWASTE_API;
  if (runtime) return runtime;
  const buildTime = import.meta.env.VITE_API_BASE as string | undefined;
  return buildTime || "http://127.0.0.1:8000";
}

const root = document.getElementById("app");
if (root) {
  createApp(root, new DeepwasteApi(resolveBaseUrl()));
}
