/** One artifact to check, read from the request ndjson file. */
export interface CheckRequest {
  artifact_id: string;
  /** Filesystem path or URL of the report artifact. */
  path: string;
}

/** Outcome of loading one artifact in the browser. */
export interface AlertCheckResult {
  artifact_id: string;
  fired: boolean;
  /** Present exactly when fired. */
  dialog_message?: string;
  console: string[];
  load_duration_ms: number;
  /** Set when the page did not finish loading (timeout noted, fired stays honest). */
  note?: string;
}

export interface CheckerOptions {
  /** Per-page load timeout in seconds. */
  timeoutSeconds: number;
  /** Extra wait after load-complete for delayed dialogs, in seconds. */
  settleSeconds: number;
  /** Pages checked in parallel, one page per browser context. */
  concurrency: number;
}

export const DEFAULT_OPTIONS: CheckerOptions = {
  timeoutSeconds: 10,
  settleSeconds: 2,
  concurrency: 4,
};

/** Console excerpt cap so results stay one-line ndjson records. */
export const CONSOLE_EXCERPT_LINES = 10;
