#!/usr/bin/env python3
"""Build the browser-agreement corpus from the bundled fixture campaign.

Runs the full four-mock campaign (10 rounds, fixed seed), copies every
report artifact into the corpus directory and records what the static
checker decided for each one: phase-2 artifacts carry their trial
verdict, phase-1 artifacts contain only inert tokens and must never fire.

Usage: build_corpus.py OUT_DIR
"""

import json
import shutil
import sys
import tempfile
from pathlib import Path

from revstrike.ledger import CampaignStore
from revstrike.orchestrator import CampaignConfig, ScannerAdapter, run_phase1, run_phase2

MOCKS = ("echoing", "escaping", "urlenc", "truncating")


def mock_adapter(name: str) -> ScannerAdapter:
    return ScannerAdapter(
        name=name,
        kind="command",
        command=[
            sys.executable,
            "-m",
            "revstrike.mock_cli",
            "--spec",
            name,
            "--target",
            "{target}",
            "--out",
            "{report_path}",
        ],
        timeout=30,
        rounds=10,
    )


def main() -> int:
    out_dir = Path(sys.argv[1])
    reports_dir = out_dir / "reports"
    reports_dir.mkdir(parents=True, exist_ok=True)

    with tempfile.TemporaryDirectory() as tmp:
        config = CampaignConfig(
            campaign_id="browser-corpus",
            campaign_dir=str(Path(tmp) / "campaign"),
            master_seed=20260809,
            adapters=[mock_adapter(name) for name in MOCKS],
        )
        run_phase1(config, notice=False)
        run_phase2(config, notice=False)
        store = CampaignStore.open(config.campaign_dir)

        confirmed = {t["artifact_id"]: t["confirmed"] for t in store.iter_trials()}
        requests = []
        expected = {}
        for artifact in store.iter_artifacts():
            source = Path(config.campaign_dir) / "reports" / f"{artifact.artifact_id}.html"
            target = reports_dir / f"{artifact.artifact_id}.html"
            shutil.copyfile(source, target)
            requests.append({"artifact_id": artifact.artifact_id, "path": str(target)})
            expected[artifact.artifact_id] = bool(confirmed.get(artifact.artifact_id, False))

    requests.sort(key=lambda r: r["artifact_id"])
    with (out_dir / "requests.ndjson").open("w", encoding="utf-8") as fh:
        for request in requests:
            fh.write(json.dumps(request) + "\n")
    (out_dir / "expected.json").write_text(
        json.dumps(expected, indent=2, sort_keys=True), encoding="utf-8"
    )
    print(f"corpus: {len(requests)} artifacts, {sum(expected.values())} expected to fire")
    return 0


if __name__ == "__main__":
    sys.exit(main())
