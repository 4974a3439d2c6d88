// The UI is configured by exactly two values: where the API lives and the
// bearer token, both persisted in localStorage so a static page survives
// reloads without a build step.

export interface UiConfig {
  apiBase: string;
  token: string;
}

export interface StorageLike {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
}

const BASE_KEY = "hugo.apiBase";
const TOKEN_KEY = "hugo.token";

export function loadConfig(storage: StorageLike | null, fallbackBase: string): UiConfig {
  const base = storage?.getItem(BASE_KEY);
  const token = storage?.getItem(TOKEN_KEY);
  return {
    apiBase: (base && base.trim()) || fallbackBase,
    token: token ?? "",
  };
}

export function saveConfig(storage: StorageLike, cfg: UiConfig): void {
  storage.setItem(BASE_KEY, cfg.apiBase.trim());
  storage.setItem(TOKEN_KEY, cfg.token);
}
