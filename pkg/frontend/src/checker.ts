import type { Browser, Page } from "puppeteer-core";

import {
  AlertCheckResult,
  CheckRequest,
  CheckerOptions,
  CONSOLE_EXCERPT_LINES,
  DEFAULT_OPTIONS,
} from "./types";
import { toUrl } from "./ndjson";

export class BrowserLaunchFailure extends Error {}

/** Launch the bundled headless Chromium. */
export async function launchBrowser(): Promise<Browser> {
  // chromium binary ships inside the npm package; no download step
  const chromium = require("@sparticuz/chromium");
  const puppeteer = require("puppeteer-core");
  try {
    return await puppeteer.launch({
      args: chromium.args,
      executablePath: await chromium.executablePath(),
      headless: "shell",
    });
  } catch (err) {
    throw new BrowserLaunchFailure(`cannot launch headless chromium: ${err}`);
  }
}

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

/**
 * Load one artifact and report whether a dialog fired.
 *
 * Any dialog (alert/confirm/prompt) is auto-dismissed and recorded; the
 * page then settles for a configurable interval so dialogs raised by
 * delayed events (image error handlers in particular) are still seen.
 */
export async function checkAlert(
  browser: Browser,
  request: CheckRequest,
  options: Partial<CheckerOptions> = {},
): Promise<AlertCheckResult> {
  const { timeoutSeconds, settleSeconds } = { ...DEFAULT_OPTIONS, ...options };
  const page: Page = await browser.newPage();
  const consoleLines: string[] = [];
  let dialogMessage: string | null = null;
  let note: string | undefined;

  page.on("dialog", (dialog) => {
    if (dialogMessage === null) dialogMessage = dialog.message();
    dialog.dismiss().catch(() => {});
  });
  page.on("console", (message) => {
    if (consoleLines.length < CONSOLE_EXCERPT_LINES) {
      consoleLines.push(`${message.type()}: ${message.text()}`);
    }
  });

  const started = Date.now();
  try {
    await page.goto(toUrl(request.path), {
      waitUntil: "load",
      timeout: timeoutSeconds * 1000,
    });
  } catch (err) {
    note = `load-timeout after ${timeoutSeconds}s`;
  }
  await sleep(settleSeconds * 1000);
  const loadDuration = Date.now() - started;
  await page.close().catch(() => {});

  const fired = dialogMessage !== null;
  const result: AlertCheckResult = {
    artifact_id: request.artifact_id,
    fired,
    console: consoleLines,
    load_duration_ms: loadDuration,
  };
  if (fired) result.dialog_message = dialogMessage as unknown as string;
  if (note) result.note = note;
  return result;
}

/** Check every request, up to `concurrency` pages in flight. */
export async function checkAll(
  browser: Browser,
  requests: CheckRequest[],
  options: Partial<CheckerOptions> = {},
): Promise<AlertCheckResult[]> {
  const { concurrency } = { ...DEFAULT_OPTIONS, ...options };
  const results: AlertCheckResult[] = new Array(requests.length);
  let next = 0;

  async function worker(): Promise<void> {
    while (true) {
      const index = next++;
      if (index >= requests.length) return;
      results[index] = await checkAlert(browser, requests[index], options);
    }
  }

  const workers = Array.from({ length: Math.max(1, concurrency) }, () => worker());
  await Promise.all(workers);
  return results;
}
