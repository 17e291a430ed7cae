"""pictl: the command-line face of the control centre.

Commands map 1:1 onto the daemon's command set; the CLI opens the state
directory directly (PICTL_HOME, default ~/.picontrol; a --config file's
"home" key overrides), executes through the same command queue the HTTP
API uses, and prints JSON results. `pictl serve` runs the daemon with the
HTTP API and the web console.
"""

from __future__ import annotations

import base64
import json
import os
import sys
from pathlib import Path

import click

from .errors import PiControlError
from .model import load_object, object_to_manifest
from .service import Command, ControlService

DEFAULT_HOME = "~/.picontrol"


def _resolve_home(config_path: str | None) -> tuple[Path, dict]:
    config = {}
    if config_path:
        config = json.loads(Path(config_path).read_text(encoding="utf-8"))
        home = config.get("home")
        if home:
            return Path(home).expanduser(), config
    return Path(os.environ.get("PICTL_HOME", DEFAULT_HOME)).expanduser(), config


class CliState:
    def __init__(self, config_path: str | None):
        self.home, self.config = _resolve_home(config_path)
        self._service: ControlService | None = None
        self._token: str | None = None

    @property
    def service(self) -> ControlService:
        if self._service is None:
            self._service = ControlService(self.home, config=self.config)
        return self._service

    @property
    def token(self) -> str:
        if self._token is None:
            cached = self.home / "cli-token"
            if cached.exists():
                token = cached.read_text(encoding="utf-8").strip()
                if self.service.sessions.principal_for(token):
                    self._token = token
                    return token
            token = self.service.login(self.service.owner)
            cached.write_text(token, encoding="utf-8")
            self._token = token
        return self._token

    def run(self, verb: str, **arguments) -> None:
        result = self.service.handle(Command(verb, arguments, self.token))
        click.echo(json.dumps(result.to_dict(), indent=2, sort_keys=True))
        if not result.ok:
            sys.exit(1)


pass_state = click.make_pass_decorator(CliState)


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="JSON config file; its 'home' key overrides PICTL_HOME.")
@click.pass_context
def main(ctx, config_path):
    """Personal cloud control centre."""
    ctx.obj = CliState(config_path)


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=7777, show_default=True)
@pass_state
def serve(state, host, port):
    """Run the daemon: HTTP API plus the web console under /ui."""
    from .api import serve as run_server

    click.echo(f"state directory: {state.home}")
    click.echo(f"listening on http://{host}:{port} (console at /ui)")
    run_server(state.service, host=host, port=port)


@main.command()
@click.argument("principal", required=False)
@pass_state
def login(state, principal):
    """Create a session token for PRINCIPAL (default: the owner)."""
    token = state.service.login(principal or state.service.owner)
    click.echo(json.dumps({"token": token}))


@main.group()
def dir():
    """Directory federation."""


@dir.command("add")
@click.argument("endpoint")
@click.option("--trust", type=int, required=True, help="Declared trust level of the directory.")
@click.option("--kind", default="marketplace",
              type=click.Choice(["marketplace", "community_registry", "local_auto_discovery"]))
@pass_state
def dir_add(state, endpoint, trust, kind):
    """Import the directory listing served at ENDPOINT."""
    state.run("import_directory", endpoint=endpoint, trust=trust, kind=kind)


@dir.command("discover")
@click.argument("directory_id")
@pass_state
def dir_discover(state, directory_id):
    """Register the child directories a meta directory lists."""
    state.run("discover", directory_id=directory_id)


@dir.command("mirror")
@click.argument("directory_id")
@pass_state
def dir_mirror(state, directory_id):
    """Snapshot a directory for offline search."""
    state.run("mirror", directory_id=directory_id)


@dir.command("list")
@pass_state
def dir_list(state):
    click.echo(json.dumps(state.service.directories(), indent=2, sort_keys=True))


@main.command()
@click.argument("query")
@click.option("--kind", default=None)
@click.option("--max-trust", type=int, default=None)
@pass_state
def search(state, query, kind, max_trust):
    """Search all registered directories and mirrors."""
    state.run("search", query=query, kind=kind, max_trust=max_trust)


@main.group()
def object():
    """Own objects."""


@object.command("add")
@click.argument("manifest", type=click.Path(exists=True))
@click.option("--payload", type=click.Path(exists=True), default=None,
              help="Payload file for software/data objects.")
@pass_state
def object_add(state, manifest, payload):
    """Register the object described by a manifest file."""
    obj = load_object(manifest)
    arguments = {"manifest": object_to_manifest(obj)}
    if payload:
        arguments["payload_b64"] = base64.b64encode(Path(payload).read_bytes()).decode("ascii")
    state.run("add_object", **arguments)


@object.command("list")
@pass_state
def object_list(state):
    click.echo(json.dumps(state.service.objects(), indent=2, sort_keys=True))


@main.command()
@click.argument("object_id")
@click.option("--to", "to_provider", required=True, help="Destination provider id.")
@pass_state
def replicate(state, object_id, to_provider):
    """Copy a software/data object into another domain."""
    state.run("replicate", object_id=object_id, to_provider=to_provider)


@main.command()
@click.argument("object_id")
@click.option("--to", "to_location", required=True,
              help="Destination as provider[:uri]; uri defaults to objects/<id>.")
@click.option("--from", "from_location", default=None, help="Source as provider[:uri].")
@click.option("--access", is_flag=True, help="Migrate access instead of bytes (resources).")
@pass_state
def migrate(state, object_id, to_location, from_location, access):
    """Move an object, or hand over access to a resource."""

    def parse(loc):
        provider, _, uri = loc.partition(":")
        return {"provider_id": provider, "uri": uri or f"objects/{object_id}"}

    arguments = {"object_id": object_id, "destination": parse(to_location), "access": access}
    if from_location:
        arguments["source"] = parse(from_location)
    state.run("migrate", **arguments)


@main.command()
@click.argument("query")
@click.option("--kind", default=None)
@pass_state
def localize(state, query, kind):
    """Replicate everything matching QUERY from trust zones above 0 into
    the personal domain."""
    state.run("localize", query=query, kind=kind)


@main.group()
def backup():
    """Dispersed backups."""


@backup.command("plan")
@click.argument("object_id")
@click.option("--k", type=int, default=None, help="Threshold override.")
@pass_state
def backup_plan(state, object_id, k):
    state.run("plan_backup", object_id=object_id, k=k)


@backup.command("run")
@click.argument("object_id")
@click.option("--k", type=int, default=None, help="Threshold override.")
@pass_state
def backup_run(state, object_id, k):
    """Plan a backup and execute it immediately."""
    result = state.service.handle(
        Command("plan_backup", {"object_id": object_id, "k": k}, state.token)
    )
    if not result.ok:
        click.echo(json.dumps(result.to_dict(), indent=2, sort_keys=True))
        sys.exit(1)
    state.run("execute_plan", plan_id=result.result["id"])


@main.command()
@click.argument("object_id")
@click.option("--plan-only", is_flag=True, help="Plan without executing.")
@pass_state
def deploy(state, object_id, plan_only):
    """Deploy a software object onto a contracted compute provider."""
    result = state.service.handle(Command("plan_deploy", {"object_id": object_id}, state.token))
    if not result.ok or plan_only:
        click.echo(json.dumps(result.to_dict(), indent=2, sort_keys=True))
        sys.exit(0 if result.ok else 1)
    state.run("execute_plan", plan_id=result.result["id"])


@main.group()
def trust():
    """Trust levels."""


@trust.command("set")
@click.argument("subject")
@click.argument("level")
@pass_state
def trust_set(state, subject, level):
    """Override SUBJECT's trust level; LEVEL 'none' removes the override."""
    state.run("set_trust", subject=subject, level=None if level == "none" else int(level))


@main.command()
@click.option("--subject", default=None)
@click.option("--provider", default=None)
@pass_state
def history(state, subject, provider):
    """The activity history, filtered."""
    events = state.service.history(subject=subject, provider=provider)
    click.echo(json.dumps([e.to_dict() for e in events], indent=2, sort_keys=True))


@main.command()
@pass_state
def status(state):
    """State directory totals."""
    state.run("status")


@main.group()
def provider():
    """Storage/compute providers."""


@provider.command("add")
@click.argument("provider_id")
@click.option("--name", default="")
@click.option("--trust", type=int, default=None)
@click.option("--fs-root", type=click.Path(), default=None,
              help="Bind a local filesystem adapter rooted here.")
@click.option("--scripted", "scripted_config", type=click.Path(exists=True), default=None,
              help="Bind a scripted adapter from its JSON config (demos).")
@pass_state
def provider_add(state, provider_id, name, trust, fs_root, scripted_config):
    adapter = None
    if fs_root:
        adapter = {"type": "local_fs", "root": fs_root}
    elif scripted_config:
        adapter = {
            "type": "scripted", "name": provider_id,
            "config": json.loads(Path(scripted_config).read_text(encoding="utf-8")),
        }
    state.run("add_provider", id=provider_id, name=name, trust=trust, adapter=adapter)


@main.group()
def contract():
    """Provider contracts (the contract context)."""


@contract.command("add")
@click.argument("contract_id")
@click.option("--provider", "provider_id", required=True)
@click.option("--kind", type=click.Choice(["storage", "compute", "data_feed"]), required=True)
@click.option("--props", default=None, help="JSON property map.")
@pass_state
def contract_add(state, contract_id, provider_id, kind, props):
    state.run(
        "add_contract", id=contract_id, provider_id=provider_id, kind=kind,
        properties=json.loads(props) if props else {},
    )


@main.command()
@click.argument("resource_id")
@click.option("--grantee", required=True)
@click.option("--rights", default="read", help="Comma-separated subset of read,write,deploy.")
@click.option("--paths", default=None, help="Comma-separated sub-paths for a partial share.")
@pass_state
def share(state, resource_id, grantee, rights, paths):
    """Share (whole or partial) access to a resource as a virtual object."""
    scope = {"paths": paths.split(",")} if paths else {}
    state.run(
        "share_access", resource_id=resource_id, grantee=grantee,
        rights=rights.split(","), scope=scope,
    )


@main.group()
def acl():
    """Privilege sets."""


@acl.command("set")
@click.argument("acl_file", type=click.Path(exists=True))
@pass_state
def acl_set(state, acl_file):
    """Install a rule set from a JSON file {id, rules: [...]}."""
    state.run("set_acl", acl=json.loads(Path(acl_file).read_text(encoding="utf-8")))


@acl.command("propagate")
@click.argument("acl_id")
@click.option("--providers", required=True, help="Comma-separated provider ids.")
@pass_state
def acl_propagate(state, acl_id, providers):
    state.run("propagate_acl", acl_id=acl_id, providers=providers.split(","))


@main.command()
@click.argument("object_id")
@click.option("--peer", required=True, help="Peer daemon URL or state/store directory.")
@click.option("--peer-token", default=None)
@pass_state
def sync(state, object_id, peer, peer_token):
    """Synchronise an object's history with a peer."""
    state.run("sync", object_id=object_id, peer=peer, peer_token=peer_token)


@main.command()
@click.argument("object_id")
@click.argument("commit_id")
@pass_state
def rollback(state, object_id, commit_id):
    """Roll an object back to an earlier commit (history preserved)."""
    state.run("rollback", object_id=object_id, commit_id=commit_id)


if __name__ == "__main__":
    main()
