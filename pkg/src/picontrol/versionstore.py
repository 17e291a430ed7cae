"""Content-addressed commit history with offline peer sync.

A minimal commit DAG rather than a wrapper around an external tool, so the
semantics stay testable and complete without network access. Payloads are
deduplicated by sha256 digest in a blob store; commits reference digests.

Commit identity covers the blob digest, the sorted parent ids, author and
message. The timestamp is recorded but deliberately excluded, so identical
content committed twice resolves to one commit. History is append-only:
nothing ever deletes a reachable commit. Divergent heads are kept and must
be collapsed explicitly with resolve(); silently merging opaque payloads
would be unsound.

On-disk layout: blobs/<digest>, commits/<digest> (JSON), heads/<object id>
(JSON list; the object id is percent-encoded for the file name).
"""

from __future__ import annotations

import hashlib
import json
import os
import urllib.parse
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from .clock import Clock, SystemClock
from .errors import HistoryMismatch, IncompleteResolution, NotAnAncestor, UnknownCommit


@dataclass(frozen=True)
class Commit:
    id: str
    parents: tuple[str, ...]
    blob: str
    author: str
    timestamp: float
    message: str

    def to_dict(self) -> dict:
        return {
            "parents": list(self.parents),
            "blob": self.blob,
            "author": self.author,
            "timestamp": self.timestamp,
            "message": self.message,
        }


@dataclass(frozen=True)
class ObjectHistory:
    object_id: str
    heads: tuple[str, ...]

    @property
    def diverged(self) -> bool:
        return len(self.heads) > 1


@dataclass(frozen=True)
class HistoryRef:
    """A (store, object id) handle, the unit sync operates on."""

    store: "VersionStore"
    object_id: str


@dataclass(frozen=True)
class SyncReport:
    object_id: str
    commits_transferred: int
    blobs_transferred: int
    heads: tuple[str, ...]


def _commit_id(blob: str, parents: Iterable[str], author: str, message: str) -> str:
    normalized = json.dumps(
        {"blob": blob, "parents": sorted(parents), "author": author, "message": message},
        sort_keys=True,
        separators=(",", ":"),
    )
    return hashlib.sha256(normalized.encode("utf-8")).hexdigest()


def _atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


class VersionStore:
    def __init__(self, root: Path | str, clock: Clock | None = None, author: str = "local"):
        self.root = Path(root)
        self.clock = clock or SystemClock()
        self.author = author
        for sub in ("blobs", "commits", "heads"):
            (self.root / sub).mkdir(parents=True, exist_ok=True)

    # --- blobs ---

    def put_blob(self, data: bytes) -> str:
        digest = hashlib.sha256(data).hexdigest()
        path = self.root / "blobs" / digest
        if not path.exists():
            _atomic_write(path, data)
        return digest

    def has_blob(self, digest: str) -> bool:
        return (self.root / "blobs" / digest).exists()

    def get_blob(self, digest: str) -> bytes:
        path = self.root / "blobs" / digest
        if not path.exists():
            raise UnknownCommit(f"blob {digest} not in store")
        return path.read_bytes()

    # --- commits ---

    def has_commit(self, commit_id: str) -> bool:
        return (self.root / "commits" / commit_id).exists()

    def get_commit(self, commit_id: str) -> Commit:
        path = self.root / "commits" / commit_id
        if not path.exists():
            raise UnknownCommit(commit_id)
        data = json.loads(path.read_text(encoding="utf-8"))
        return Commit(
            id=commit_id,
            parents=tuple(data["parents"]),
            blob=data["blob"],
            author=data["author"],
            timestamp=data["timestamp"],
            message=data["message"],
        )

    def _write_commit(self, commit: Commit) -> Commit:
        path = self.root / "commits" / commit.id
        if path.exists():
            # first write wins; identity excludes the timestamp
            return self.get_commit(commit.id)
        _atomic_write(path, json.dumps(commit.to_dict(), sort_keys=True).encode("utf-8"))
        return commit

    def import_commit(self, commit: Commit, payload: bytes | None = None) -> bool:
        """Copy a commit (and its blob, if supplied) from a peer; True if the blob moved."""
        moved = False
        if payload is not None and not self.has_blob(commit.blob):
            stored = self.put_blob(payload)
            if stored != commit.blob:
                raise UnknownCommit(f"peer payload digest mismatch for commit {commit.id}")
            moved = True
        self._write_commit(commit)
        return moved

    # --- heads ---

    def _heads_path(self, object_id: str) -> Path:
        return self.root / "heads" / urllib.parse.quote(object_id, safe="")

    def heads(self, object_id: str) -> tuple[str, ...]:
        path = self._heads_path(object_id)
        if not path.exists():
            return ()
        return tuple(json.loads(path.read_text(encoding="utf-8")))

    def set_heads(self, object_id: str, heads: Iterable[str]) -> None:
        _atomic_write(self._heads_path(object_id), json.dumps(sorted(set(heads))).encode("utf-8"))

    def history(self, object_id: str) -> ObjectHistory:
        return ObjectHistory(object_id, self.heads(object_id))

    def object_ids(self) -> list[str]:
        return sorted(
            urllib.parse.unquote(p.name)
            for p in (self.root / "heads").iterdir()
            if not p.name.endswith(".tmp")
        )

    # --- operations ---

    def commit(
        self,
        object_id: str,
        payload: bytes,
        parents: Iterable[str] | None = None,
        author: str | None = None,
        message: str = "",
    ) -> Commit:
        """Append a commit; parents default to the current heads.

        Committing against a parent that is no longer a head is legal and
        leaves the newer head in place, flagging the divergence for an
        explicit resolve. Unknown parents raise UnknownCommit.
        """
        current = self.heads(object_id)
        parent_ids = tuple(current) if parents is None else tuple(dict.fromkeys(parents))
        for pid in parent_ids:
            if not self.has_commit(pid):
                raise UnknownCommit(pid)
        blob = self.put_blob(payload)
        commit = Commit(
            id=_commit_id(blob, parent_ids, author or self.author, message),
            parents=tuple(sorted(parent_ids)),
            blob=blob,
            author=author or self.author,
            timestamp=self.clock.now(),
            message=message,
        )
        commit = self._write_commit(commit)
        self.set_heads(object_id, (set(current) - set(parent_ids)) | {commit.id})
        return commit

    def commit_if_changed(self, object_id: str, payload: bytes, **kwargs) -> tuple[Commit, bool]:
        """Like commit(), but a no-op when the sole head already holds payload.

        Returns (commit, created). Keeps re-snapshotting of unchanged data
        (registry mirrors) from growing the history.
        """
        heads = self.heads(object_id)
        if len(heads) == 1:
            head = self.get_commit(heads[0])
            if head.blob == hashlib.sha256(payload).hexdigest():
                return head, False
        return self.commit(object_id, payload, **kwargs), True

    def checkout(self, object_id: str, commit_id: str) -> bytes:
        commit = self.get_commit(commit_id)
        return self.get_blob(commit.blob)

    def ancestors(self, commit_id: str, include_self: bool = True) -> set[str]:
        seen: set[str] = set()
        stack = [commit_id]
        while stack:
            cid = stack.pop()
            if cid in seen:
                continue
            seen.add(cid)
            stack.extend(self.get_commit(cid).parents)
        if not include_self:
            seen.discard(commit_id)
        return seen

    def reachable_commits(self, object_id: str) -> dict[str, Commit]:
        commits: dict[str, Commit] = {}
        stack = list(self.heads(object_id))
        while stack:
            cid = stack.pop()
            if cid in commits:
                continue
            commit = self.get_commit(cid)
            commits[cid] = commit
            stack.extend(commit.parents)
        return commits

    def rollback(self, object_id: str, commit_id: str) -> Commit:
        """New head carrying the target commit's payload; history is preserved."""
        if not self.has_commit(commit_id):
            raise UnknownCommit(commit_id)
        heads = self.heads(object_id)
        descendants = [h for h in heads if commit_id in self.ancestors(h)]
        if not descendants:
            raise NotAnAncestor(f"{commit_id} is not an ancestor of any head of {object_id}")
        base = sorted(descendants)[0]
        payload = self.checkout(object_id, commit_id)
        return self.commit(
            object_id,
            payload,
            parents=(base,),
            message=f"rollback to {commit_id[:12]}",
        )

    def resolve(self, object_id: str, chosen: str, discarded: Iterable[str]) -> Commit:
        """Collapse divergent heads into one commit carrying the chosen payload.

        Every current head must be listed exactly once. More than two heads
        are folded by chained two-parent merges so the parent arity
        invariant holds.
        """
        discarded = list(discarded)
        listed = [chosen] + discarded
        for cid in listed:
            if not self.has_commit(cid):
                raise UnknownCommit(cid)
        heads = set(self.heads(object_id))
        if len(listed) != len(set(listed)) or set(listed) != heads or len(listed) < 2:
            raise IncompleteResolution(
                f"resolve must list all {len(heads)} current heads of {object_id} exactly once"
            )
        payload = self.checkout(object_id, chosen)
        current = chosen
        for other in sorted(discarded):
            merge = Commit(
                id=_commit_id(
                    self.get_commit(chosen).blob, (current, other), self.author, "resolve divergence"
                ),
                parents=tuple(sorted((current, other))),
                blob=self.get_commit(chosen).blob,
                author=self.author,
                timestamp=self.clock.now(),
                message="resolve divergence",
            )
            merge = self._write_commit(merge)
            current = merge.id
        self.set_heads(object_id, [current])
        return self.get_commit(current)


def _maximal(commits: dict[str, Commit]) -> tuple[str, ...]:
    has_child: set[str] = set()
    for commit in commits.values():
        has_child.update(commit.parents)
    return tuple(sorted(cid for cid in commits if cid not in has_child))


def sync_pair(local: HistoryRef, remote: HistoryRef) -> SyncReport:
    """Exchange commits until both sides hold the union DAG.

    Heads become the maximal commits of the union; blobs are never copied
    twice (the report counts actual moves). The outcome is idempotent and
    independent of call direction.
    """
    if local.object_id != remote.object_id:
        raise HistoryMismatch(f"{local.object_id} vs {remote.object_id}")
    object_id = local.object_id

    local_commits = local.store.reachable_commits(object_id)
    remote_commits = remote.store.reachable_commits(object_id)

    commits_moved = 0
    blobs_moved = 0
    for cid, commit in remote_commits.items():
        if cid not in local_commits:
            payload = remote.store.get_blob(commit.blob)
            blobs_moved += int(local.store.import_commit(commit, payload))
            commits_moved += 1
    for cid, commit in local_commits.items():
        if cid not in remote_commits:
            payload = local.store.get_blob(commit.blob)
            blobs_moved += int(remote.store.import_commit(commit, payload))
            commits_moved += 1

    union = dict(local_commits)
    union.update(remote_commits)
    heads = _maximal(union)
    local.store.set_heads(object_id, heads)
    remote.store.set_heads(object_id, heads)
    return SyncReport(object_id, commits_moved, blobs_moved, heads)
