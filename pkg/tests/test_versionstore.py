"""Commit DAG: content addressing, rollback, divergence, peer sync."""

import random

import pytest

from picontrol.clock import VirtualClock
from picontrol.errors import (
    HistoryMismatch,
    IncompleteResolution,
    NotAnAncestor,
    UnknownCommit,
)
from picontrol.versionstore import HistoryRef, VersionStore, sync_pair

OID = "da:demo"


@pytest.fixture
def peers(tmp_path, clock):
    return [VersionStore(tmp_path / f"peer{i}", clock=clock, author=f"p{i}") for i in range(3)]


class TestCommit:
    def test_identical_content_yields_identical_ids(self, store):
        a = store.commit(OID, b"v1", message="m")
        b = store.commit("da:other", b"v1", parents=(), message="m")
        assert a.id == b.id

    def test_genesis_creates_a_single_head(self, store):
        commit = store.commit(OID, b"v1")
        assert store.heads(OID) == (commit.id,)
        assert not store.history(OID).diverged

    def test_commit_replaces_its_parents_as_head(self, store):
        first = store.commit(OID, b"v1")
        second = store.commit(OID, b"v2")
        assert store.heads(OID) == (second.id,)
        assert second.parents == (first.id,)

    def test_stale_parent_creates_divergence(self, store):
        base = store.commit(OID, b"v1")
        store.commit(OID, b"v2")  # head moves on
        side = store.commit(OID, b"v2b", parents=(base.id,))
        heads = store.heads(OID)
        assert len(heads) == 2 and side.id in heads
        assert store.history(OID).diverged

    def test_unknown_parent_rejected(self, store):
        with pytest.raises(UnknownCommit):
            store.commit(OID, b"v1", parents=("f" * 64,))

    def test_timestamps_recorded_but_not_part_of_identity(self, tmp_path):
        clock = VirtualClock()
        store = VersionStore(tmp_path / "s", clock=clock)
        a = store.commit(OID, b"x", parents=())
        clock.advance(100)
        b = store.commit("da:two", b"x", parents=())
        assert a.id == b.id
        assert store.get_commit(a.id).timestamp == a.timestamp


class TestCheckout:
    def test_checkout_head_after_commit(self, store):
        store.commit(OID, b"v1")
        head = store.commit(OID, b"v2")
        assert store.checkout(OID, head.id) == b"v2"

    def test_history_is_immutable(self, store):
        genesis = store.commit(OID, b"original")
        for i in range(3):
            store.commit(OID, f"v{i}".encode())
        assert store.checkout(OID, genesis.id) == b"original"

    def test_unknown_commit(self, store):
        with pytest.raises(UnknownCommit):
            store.checkout(OID, "0" * 64)

    def test_round_trip(self, store):
        for payload in (b"", b"\x00\xff" * 100, "unicode ✓".encode()):
            commit = store.commit(OID, payload)
            assert store.checkout(OID, commit.id) == payload


class TestRollback:
    def test_rollback_creates_new_head_with_old_payload(self, store):
        v1 = store.commit(OID, b"v1")
        v2 = store.commit(OID, b"v2")
        rolled = store.rollback(OID, v1.id)
        assert store.heads(OID) == (rolled.id,)
        assert store.checkout(OID, rolled.id) == b"v1"
        assert rolled.parents == (v2.id,)
        # history preserved
        assert store.checkout(OID, v2.id) == b"v2"

    def test_recommit_after_rollback_round_trips_blob_digest(self, store):
        store.commit(OID, b"v1")
        v2 = store.commit(OID, b"v2")
        store.rollback(OID, v2.parents[0])
        again = store.commit(OID, b"v2")
        assert store.checkout(OID, store.heads(OID)[0]) == b"v2"
        assert again.blob == v2.blob

    def test_rollback_to_foreign_commit_is_not_an_ancestor(self, store):
        store.commit(OID, b"v1")
        foreign = store.commit("da:other", b"elsewhere", parents=())
        with pytest.raises(NotAnAncestor):
            store.rollback(OID, foreign.id)

    def test_rollback_to_unknown_commit(self, store):
        store.commit(OID, b"v1")
        with pytest.raises(UnknownCommit):
            store.rollback(OID, "9" * 64)


class TestResolve:
    def make_divergence(self, store):
        base = store.commit(OID, b"base")
        a = store.commit(OID, b"a", parents=(base.id,))
        b = store.commit(OID, b"b", parents=(base.id,))
        assert len(store.heads(OID)) == 2
        return a, b

    def test_resolve_collapses_to_chosen_payload(self, store):
        a, b = self.make_divergence(store)
        merge = store.resolve(OID, a.id, [b.id])
        assert store.heads(OID) == (merge.id,)
        assert set(merge.parents) == {a.id, b.id}
        assert store.checkout(OID, merge.id) == b"a"

    def test_resolve_must_list_every_head(self, store):
        a, b = self.make_divergence(store)
        with pytest.raises(IncompleteResolution):
            store.resolve(OID, a.id, [])

    def test_resolve_of_three_heads_chains_merges(self, store):
        base = store.commit(OID, b"base")
        heads = [store.commit(OID, ch, parents=(base.id,)) for ch in (b"a", b"b", b"c")]
        merge = store.resolve(OID, heads[0].id, [heads[1].id, heads[2].id])
        assert store.heads(OID) == (merge.id,)
        assert store.checkout(OID, merge.id) == b"a"
        assert all(len(store.get_commit(c).parents) <= 2 for c in store.reachable_commits(OID))

    def test_resolve_then_sync_converges_peer(self, peers):
        a, b = peers[0], peers[1]
        base = a.commit(OID, b"base")
        a.commit(OID, b"a1")
        b.import_commit(base, b"base")
        b.set_heads(OID, [base.id])
        b.commit(OID, b"b1")
        sync_pair(HistoryRef(a, OID), HistoryRef(b, OID))
        assert len(a.heads(OID)) == 2
        heads = a.heads(OID)
        merge = a.resolve(OID, heads[0], [heads[1]])
        sync_pair(HistoryRef(a, OID), HistoryRef(b, OID))
        assert b.heads(OID) == (merge.id,)
        assert b.checkout(OID, merge.id) == a.checkout(OID, merge.id)


class TestSyncPair:
    def test_disjoint_histories_sharing_genesis_diverge(self, peers):
        a, b = peers[0], peers[1]
        genesis = a.commit(OID, b"g")
        b.import_commit(genesis, b"g")
        b.set_heads(OID, [genesis.id])
        a.commit(OID, b"a-side")
        b.commit(OID, b"b-side")
        report = sync_pair(HistoryRef(a, OID), HistoryRef(b, OID))
        assert len(report.heads) == 2
        assert a.heads(OID) == b.heads(OID) == report.heads
        assert a.history(OID).diverged

    def test_identical_histories_transfer_nothing(self, peers):
        a, b = peers[0], peers[1]
        commit = a.commit(OID, b"x")
        b.import_commit(commit, b"x")
        b.set_heads(OID, [commit.id])
        report = sync_pair(HistoryRef(a, OID), HistoryRef(b, OID))
        assert report.blobs_transferred == 0
        assert report.commits_transferred == 0

    def test_remote_strictly_ahead_fast_forwards(self, peers):
        a, b = peers[0], peers[1]
        genesis = a.commit(OID, b"g")
        b.import_commit(genesis, b"g")
        b.set_heads(OID, [genesis.id])
        b.commit(OID, b"g2")
        head = b.commit(OID, b"g3")
        report = sync_pair(HistoryRef(a, OID), HistoryRef(b, OID))
        assert report.heads == (head.id,)
        assert a.heads(OID) == (head.id,)
        assert a.checkout(OID, head.id) == b"g3"

    def test_object_id_mismatch(self, peers):
        peers[0].commit("da:x", b"1")
        peers[1].commit("da:y", b"2")
        with pytest.raises(HistoryMismatch):
            sync_pair(HistoryRef(peers[0], "da:x"), HistoryRef(peers[1], "da:y"))

    def test_duplicate_payloads_move_once(self, peers):
        a, b = peers[0], peers[1]
        a.commit(OID, b"same")
        a.commit(OID, b"other")
        a.commit(OID, b"same")  # same blob referenced by two commits
        report = sync_pair(HistoryRef(a, OID), HistoryRef(b, OID))
        assert report.commits_transferred == 3
        assert report.blobs_transferred == 2

    def test_random_schedules_converge(self, tmp_path):
        """Seeded mini version of the acceptance convergence run."""
        clock = VirtualClock()
        rnd = random.Random(1234)
        for schedule in range(15):
            stores = [
                VersionStore(tmp_path / f"s{schedule}-{i}", clock=clock, author=f"p{i}")
                for i in range(3)
            ]
            for step in range(rnd.randint(3, 10)):
                if rnd.random() < 0.6:
                    peer = rnd.choice(stores)
                    peer.commit(OID, f"{schedule}-{step}-{rnd.random()}".encode())
                else:
                    i, j = rnd.sample(range(3), 2)
                    sync_pair(HistoryRef(stores[i], OID), HistoryRef(stores[j], OID))
            # quiescence: pairwise sync twice over
            for _ in range(2):
                for i in range(3):
                    for j in range(i + 1, 3):
                        sync_pair(HistoryRef(stores[i], OID), HistoryRef(stores[j], OID))
            head_sets = {s.heads(OID) for s in stores}
            assert len(head_sets) == 1


class TestAppendOnly:
    def test_no_operation_removes_reachable_commits(self, store):
        ids = [store.commit(OID, f"v{i}".encode()).id for i in range(4)]
        store.rollback(OID, ids[1])
        base_heads = store.heads(OID)
        side = store.commit(OID, b"side", parents=(ids[0],))
        store.resolve(OID, base_heads[0], [side.id])
        for cid in ids:
            assert store.checkout(OID, cid) is not None
