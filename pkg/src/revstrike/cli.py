"""Command-line client of the control-plane API.

Every subcommand talks to the service over HTTP.  Without ``--server``
the app is mounted in-process, so local use needs no running daemon;
pointing ``--server`` (or REVSTRIKE_SERVER) at a remote control plane
drives a stub host somewhere else with the same commands.
"""

from __future__ import annotations

import json
import os
import sys
import time
from pathlib import Path

import click
import httpx
import yaml

ENV_SERVER = "REVSTRIKE_SERVER"
ENV_CAMPAIGN_DIR = "REVSTRIKE_CAMPAIGN_DIR"


def _client(server: str | None) -> httpx.Client:
    if server:
        return httpx.Client(base_url=server.rstrip("/"), timeout=None)
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DeprecationWarning)
        from fastapi.testclient import TestClient

    from .service.app import create_app

    return TestClient(create_app())


def _check(resp: httpx.Response) -> dict:
    if resp.status_code >= 400:
        try:
            detail = resp.json().get("detail", resp.text)
        except Exception:
            detail = resp.text
        raise click.ClickException(f"{resp.status_code}: {detail}")
    return resp.json()


def _campaign_dir(value: str | None) -> str:
    path = value or os.environ.get(ENV_CAMPAIGN_DIR)
    if not path:
        raise click.ClickException(
            f"no campaign directory: pass --campaign or set {ENV_CAMPAIGN_DIR}"
        )
    return path


def _load_config(config_path: str, campaign_dir: str | None) -> dict:
    raw = yaml.safe_load(Path(config_path).read_text(encoding="utf-8"))
    if campaign_dir:
        raw["campaign_dir"] = campaign_dir
    raw.setdefault("campaign_dir", os.environ.get(ENV_CAMPAIGN_DIR))
    if not raw.get("campaign_dir"):
        raise click.ClickException("config lacks campaign_dir and no --campaign given")
    return raw


@click.group()
@click.option(
    "--server",
    envvar=ENV_SERVER,
    default=None,
    help="control-plane URL; default runs the service in-process",
)
@click.pass_context
def main(ctx: click.Context, server: str | None) -> None:
    """Two-phase XSS test harness for scanning systems."""

    ctx.obj = server


@main.command()
@click.option("--mode", type=click.Choice(["phase1", "phase2"]), default="phase1")
@click.option("--grammar", "grammar_ref", default="builtin", help="builtin or a grammar file")
@click.option("--bind", default="127.0.0.1:8080", show_default=True)
@click.option("--campaign", default=None, help="campaign directory")
@click.option("--campaign-id", default="adhoc")
@click.option("--seed", type=int, default=0)
@click.option("--response-id", default=None, help="phase2: stored response to replay")
@click.option("--token", default=None, help="phase2: token to substitute")
@click.option("--payload", "payload_id", default=None, help="phase2: payload id")
@click.pass_obj
def serve(server, mode, grammar_ref, bind, campaign, campaign_id, seed, response_id, token, payload_id):
    """Run the test stub until interrupted."""

    campaign = _campaign_dir(campaign)
    with _client(server) as client:
        if mode == "phase1":
            body = {
                "campaign_dir": campaign,
                "campaign_id": campaign_id,
                "master_seed": seed,
                "bind": bind,
                "grammar_ref": grammar_ref,
            }
            info = _check(client.post("/stubs/phase1", json=body))
        else:
            if not (response_id and token and payload_id):
                raise click.ClickException("phase2 needs --response-id, --token and --payload")
            body = {
                "campaign_dir": campaign,
                "response_id": response_id,
                "token": token,
                "payload_id": payload_id,
                "bind": bind,
            }
            info = _check(client.post("/stubs/phase2", json=body))
        click.echo(f"stub {info['stub_id']} serving {mode} on {info['url']} (Ctrl-C stops)")
        try:
            while True:
                time.sleep(1)
        except KeyboardInterrupt:
            pass
        finally:
            client.delete(f"/stubs/{info['stub_id']}")
            click.echo("stub stopped")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--campaign", default=None, help="override the campaign directory")
@click.pass_obj
def phase1(server, config_path, campaign):
    """Run the tainted-flow enumeration rounds."""

    config = _load_config(config_path, campaign)
    with _client(server) as client:
        result = _check(client.post("/campaigns/phase1", json={"config": config}))
    click.echo(f"campaign {result['campaign_id']}: {result['flows']} tainted flows")
    for adapter, fields in sorted(result["fields_by_adapter"].items()):
        click.echo(f"  {adapter}: {', '.join(fields) if fields else '(none)'}")
    for err in result["errors"]:
        click.echo(f"  error: {err['adapter']} round {err['round']}: {err['error']}", err=True)


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--campaign", default=None, help="override the campaign directory")
@click.pass_obj
def phase2(server, config_path, campaign):
    """Confirm vulnerable flows by payload replay."""

    config = _load_config(config_path, campaign)
    with _client(server) as client:
        result = _check(client.post("/campaigns/phase2", json={"config": config}))
    click.echo(f"campaign {result['campaign_id']}: {result['vulns']} confirmed vulnerable flows")
    for trial in result["trials"]:
        status = "confirmed" if trial["confirmed"] else f"unconfirmed ({trial['reason']})"
        click.echo(
            f"  {trial['adapter']} {trial['source_field']} {trial['payload_id']}: {status}"
        )


@main.command()
@click.option("--campaign", default=None, help="campaign directory")
@click.pass_obj
def analyze(server, campaign):
    """Emit field statistics and correlation matrices for a campaign."""

    body = {"campaign_dir": _campaign_dir(campaign)}
    with _client(server) as client:
        result = _check(client.post("/campaigns/analyze", json=body))
    click.echo(result["table"])
    for name, path in sorted(result["files"].items()):
        click.echo(f"wrote {name}: {path}", err=True)


@main.command()
@click.option("--campaign", default=None, help="campaign directory")
@click.pass_obj
def audit(server, campaign):
    """Check ledger integrity: content hashes and referential integrity."""

    body = {"campaign_dir": _campaign_dir(campaign)}
    with _client(server) as client:
        result = _check(client.post("/campaigns/audit", json=body))
    click.echo(f"records checked: {result['records_checked']}")
    if result["ok"]:
        click.echo("audit: clean")
        return
    for issue in result["issues"]:
        click.echo(f"audit issue [{issue['kind']}] {issue['detail']}", err=True)
    sys.exit(1)


@main.command()
@click.option("--campaign", default=None, help="campaign directory")
@click.pass_obj
def summarize(server, campaign):
    """Print the Name/T/V table; exit 2 when any flow is vulnerable."""

    body = {"campaign_dir": _campaign_dir(campaign)}
    with _client(server) as client:
        result = _check(client.post("/campaigns/summary", json=body))
    if result["table"]:
        click.echo(result["table"])
    sys.exit(result["exit_code"])


@main.group()
def payloads():
    """Payload database commands."""


@payloads.command("list")
@click.pass_obj
def payloads_list(server):
    """Print the payload table with contexts and lengths."""

    with _client(server) as client:
        result = _check(client.get("/payloads"))
    for p in result["payloads"]:
        contexts = ",".join(p["contexts"])
        variant = f" (variant of {p['variant_of']})" if p["variant_of"] else ""
        click.echo(f"{p['payload_id']:<20} len={p['length']:<3} contexts={contexts}{variant}")
        click.echo(f"    {json.dumps(p['text'])}")


@payloads.command("export")
def payloads_export():
    """Write the builtin payload list in its editable exchange format."""

    from .payloads import builtin_payloads, dump_payloads

    click.echo(dump_payloads(builtin_payloads()), nl=False)


@main.group()
def grammar():
    """Response-template grammar commands."""


@grammar.command("export")
@click.pass_obj
def grammar_export(server):
    """Print the builtin grammar in its editable text format."""

    with _client(server) as client:
        result = _check(client.get("/grammar/builtin"))
    click.echo(result["grammar_text"], nl=False)


@grammar.command("validate")
@click.argument("path", type=click.Path(exists=True), required=False)
@click.pass_obj
def grammar_validate(server, path):
    """Validate a grammar file (or the builtin grammar)."""

    body = {"grammar_text": Path(path).read_text(encoding="utf-8")} if path else {}
    with _client(server) as client:
        result = _check(client.post("/grammar/validate", json=body))
    if not result["violations"]:
        click.echo("grammar: valid")
        return
    for v in result["violations"]:
        amount = f" ({v['amount']:g})" if v.get("amount") is not None else ""
        click.echo(f"violation [{v['kind']}] {v['nonterminal']}: {v['detail']}{amount}", err=True)
    sys.exit(1)


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=9280, show_default=True)
def service(host, port):
    """Run the control-plane service."""

    import uvicorn

    uvicorn.run("revstrike.service.app:app", host=host, port=port)


if __name__ == "__main__":
    main()
