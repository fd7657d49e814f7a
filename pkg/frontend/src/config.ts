// API base URL: runtime override (window.HEALTHCAM_API_BASE) wins over the
// build-time default, so one bundle can serve several deployments.

declare global {
  interface Window {
    HEALTHCAM_API_BASE?: string;
  }
}

export const BUILD_DEFAULT_API_BASE = "http://127.0.0.1:8000";

export function apiBase(): string {
  if (typeof window !== "undefined" && window.HEALTHCAM_API_BASE) {
    return window.HEALTHCAM_API_BASE.replace(/\/$/, "");
  }
  return BUILD_DEFAULT_API_BASE;
}
