import * as fs from "fs";

import type { AlertCheckResult, CheckRequest } from "./types";

/** Parse newline-delimited JSON, tolerating a trailing partial line. */
export function parseNdjson<T>(text: string): T[] {
  const records: T[] = [];
  for (const line of text.split("\n")) {
    if (!line.trim()) continue;
    try {
      records.push(JSON.parse(line) as T);
    } catch {
      // a concurrent writer may leave an incomplete final line
      continue;
    }
  }
  return records;
}

export function readRequests(path: string): CheckRequest[] {
  const requests = parseNdjson<CheckRequest>(fs.readFileSync(path, "utf-8"));
  for (const request of requests) {
    if (!request.artifact_id || !request.path) {
      throw new Error(`request file ${path} has a record without artifact_id/path`);
    }
  }
  return requests;
}

export function writeResults(path: string, results: AlertCheckResult[]): void {
  const lines = results.map((r) => JSON.stringify(r)).join("\n");
  fs.writeFileSync(path, lines + (results.length ? "\n" : ""), "utf-8");
}

/** file path or URL -> URL the browser can open */
export function toUrl(pathOrUrl: string): string {
  if (/^[a-z][a-z0-9+.-]*:\/\//i.test(pathOrUrl)) return pathOrUrl;
  return "file://" + (pathOrUrl.startsWith("/") ? pathOrUrl : process.cwd() + "/" + pathOrUrl);
}
