#!/usr/bin/env node
/**
 * revstrike-browser-check --in artifacts.ndjson --out results.ndjson [--timeout 10]
 *
 * Reads artifact requests from a file, loads each one in headless
 * Chromium and writes AlertCheckResult records.  File-based on both
 * sides: the taint-testing harness runs with no browser installed and
 * only consumes the results it finds.
 */

import { checkAll, launchBrowser, BrowserLaunchFailure } from "./checker";
import { readRequests, writeResults } from "./ndjson";
import { DEFAULT_OPTIONS } from "./types";

interface CliArgs {
  in: string;
  out: string;
  timeout: number;
  settle: number;
  concurrency: number;
}

export function parseArgs(argv: string[]): CliArgs {
  const args: Partial<CliArgs> = {
    timeout: DEFAULT_OPTIONS.timeoutSeconds,
    settle: DEFAULT_OPTIONS.settleSeconds,
    concurrency: DEFAULT_OPTIONS.concurrency,
  };
  for (let i = 0; i < argv.length; i += 2) {
    const flag = argv[i];
    const value = argv[i + 1];
    if (value === undefined) throw new Error(`missing value for ${flag}`);
    switch (flag) {
      case "--in":
        args.in = value;
        break;
      case "--out":
        args.out = value;
        break;
      case "--timeout":
        args.timeout = Number(value);
        break;
      case "--settle":
        args.settle = Number(value);
        break;
      case "--concurrency":
        args.concurrency = Number(value);
        break;
      default:
        throw new Error(`unknown flag ${flag}`);
    }
  }
  if (!args.in || !args.out) throw new Error("--in and --out are required");
  if (!Number.isFinite(args.timeout) || args.timeout! <= 0) {
    throw new Error("--timeout must be a positive number of seconds");
  }
  return args as CliArgs;
}

async function main(): Promise<number> {
  let args: CliArgs;
  try {
    args = parseArgs(process.argv.slice(2));
  } catch (err) {
    console.error(String(err instanceof Error ? err.message : err));
    console.error(
      "usage: revstrike-browser-check --in artifacts.ndjson --out results.ndjson " +
        "[--timeout 10] [--settle 2] [--concurrency 4]",
    );
    return 2;
  }

  const requests = readRequests(args.in);
  const browser = await launchBrowser();
  try {
    const results = await checkAll(browser, requests, {
      timeoutSeconds: args.timeout,
      settleSeconds: args.settle,
      concurrency: args.concurrency,
    });
    writeResults(args.out, results);
    const fired = results.filter((r) => r.fired).length;
    console.error(`checked ${results.length} artifacts, ${fired} fired`);
  } finally {
    await browser.close().catch(() => {});
  }
  return 0;
}

if (require.main === module) {
  main()
    .then((code) => process.exit(code))
    .catch((err) => {
      if (err instanceof BrowserLaunchFailure) {
        console.error(err.message);
        process.exit(3);
      }
      console.error(String(err));
      process.exit(1);
    });
}
