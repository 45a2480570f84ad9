from __future__ import annotations

import socket
import sys

import pytest

from revstrike.orchestrator import CampaignConfig, ScannerAdapter


def mock_adapter(name: str, rounds: int = 10, timeout: float = 30.0) -> ScannerAdapter:
    """A bundled mock scanner wired up as a command adapter."""

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
        timeout=timeout,
        rounds=rounds,
    )


def fixture_config(campaign_dir, *, rounds: int = 10, seed: int = 20260809) -> CampaignConfig:
    """The canonical four-mock campaign configuration."""

    return CampaignConfig(
        campaign_id="fixture",
        campaign_dir=str(campaign_dir),
        master_seed=seed,
        adapters=[mock_adapter(n, rounds) for n in ("echoing", "escaping", "urlenc", "truncating")],
    )


def http_exchange(host: str, port: int, request: bytes, timeout: float = 5.0) -> bytes:
    """Send one raw request and read until the server closes."""

    with socket.create_connection((host, port), timeout=timeout) as sock:
        sock.sendall(request)
        sock.settimeout(timeout)
        chunks = []
        while True:
            try:
                chunk = sock.recv(65536)
            except OSError:
                break
            if not chunk:
                break
            chunks.append(chunk)
    return b"".join(chunks)


@pytest.fixture(scope="session")
def fixture_campaign(tmp_path_factory):
    """One full 10-round campaign over all four mocks, phases 1 and 2.

    Shared by the acceptance criteria; everything derived from it must
    treat the campaign directory as read-only.
    """

    import time

    from revstrike.ledger import CampaignStore
    from revstrike.orchestrator import run_phase1, run_phase2

    campaign_dir = tmp_path_factory.mktemp("campaign") / "fixture"
    config = fixture_config(campaign_dir)
    started = time.monotonic()
    phase1 = run_phase1(config, notice=False)
    phase2 = run_phase2(config, notice=False)
    elapsed = time.monotonic() - started
    store = CampaignStore.open(campaign_dir)
    return {
        "config": config,
        "phase1": phase1,
        "phase2": phase2,
        "store": store,
        "elapsed": elapsed,
    }
