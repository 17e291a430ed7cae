"""Trust inheritance, overrides and the placement preference order."""

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from picontrol.errors import InvalidTrustLevel, UnassignedRoot, UnknownSubject
from picontrol.trust import (
    AssignmentSource,
    MappingHierarchy,
    TrustTable,
    effective_assignment,
    effective_trust,
    preference_order,
    validate_trust_level,
)

from conftest import make_description


def simple_hierarchy():
    # service under provider under a root directory
    return MappingHierarchy({"dir": None, "prov": "dir", "svc": "prov"})


def oracle_trust(subject, parents, overrides, defaults):
    """Independent nearest-override walk used to cross-check effective_trust."""
    node = subject
    while True:
        if node in overrides:
            return overrides[node]
        parent = parents[node]
        if parent is None:
            return defaults[node]
        node = parent


class TestEffectiveTrust:
    def test_pure_inheritance_from_directory(self):
        h = simple_hierarchy()
        table = TrustTable()
        table.set_default("dir", 2)
        assert effective_trust("svc", h, table) == 2
        assert effective_trust("prov", h, table) == 2

    def test_provider_override_wins_for_the_service(self):
        h = simple_hierarchy()
        table = TrustTable()
        table.set_default("dir", 2)
        table.set_override("prov", 1, h)
        assert effective_trust("svc", h, table) == 1
        assert effective_trust("dir", h, table) == 2

    def test_override_at_the_lowest_level_wins(self):
        h = simple_hierarchy()
        table = TrustTable()
        table.set_default("dir", 3)
        table.set_override("svc", 0, h)
        assert effective_trust("svc", h, table) == 0

    def test_unknown_subject(self):
        with pytest.raises(UnknownSubject):
            effective_trust("ghost", simple_hierarchy(), TrustTable())

    def test_unassigned_root(self):
        with pytest.raises(UnassignedRoot):
            effective_trust("svc", simple_hierarchy(), TrustTable())

    def test_assignment_source_reporting(self):
        h = simple_hierarchy()
        table = TrustTable()
        table.set_default("dir", 2)
        table.set_override("svc", 0, h)
        assert effective_assignment("svc", h, table).source == AssignmentSource.USER_OVERRIDE
        assert effective_assignment("prov", h, table).source == AssignmentSource.INHERITED
        assert effective_assignment("dir", h, table).source == AssignmentSource.DEFAULT

    def test_trust_levels_are_nonnegative_integers(self):
        with pytest.raises(InvalidTrustLevel):
            validate_trust_level(-1)
        with pytest.raises(InvalidTrustLevel):
            validate_trust_level("high")
        assert validate_trust_level(0) == 0


class TestSetOverride:
    def test_last_write_wins(self):
        h = simple_hierarchy()
        table = TrustTable()
        table.set_default("dir", 3)
        table.set_override("svc", 2, h)
        table.set_override("svc", 1, h)
        assert table.overrides["svc"] == 1
        assert len([s for s in table.overrides if s == "svc"]) == 1

    def test_removing_override_restores_inheritance(self):
        h = simple_hierarchy()
        table = TrustTable()
        table.set_default("dir", 3)
        table.set_override("svc", 0, h)
        table.set_override("svc", None, h)
        assert effective_trust("svc", h, table) == 3

    def test_override_on_unknown_subject(self):
        with pytest.raises(UnknownSubject):
            TrustTable().set_override("ghost", 1, simple_hierarchy())


@st.composite
def random_hierarchy(draw):
    """A forest of up to 4 levels and up to ~100 nodes, plus random overrides."""
    n_roots = draw(st.integers(1, 3))
    parents = {}
    defaults = {}
    levels = {}
    for r in range(n_roots):
        root = f"n{r}"
        parents[root] = None
        defaults[root] = draw(st.integers(0, 5))
        levels[root] = 0
    counter = n_roots
    n_extra = draw(st.integers(0, 60))
    for _ in range(n_extra):
        attachable = [s for s, lvl in levels.items() if lvl < 3]
        parent = draw(st.sampled_from(sorted(attachable)))
        node = f"n{counter}"
        counter += 1
        parents[node] = parent
        levels[node] = levels[parent] + 1
    n_overrides = draw(st.integers(0, min(10, len(parents))))
    override_subjects = draw(
        st.lists(st.sampled_from(sorted(parents)), min_size=n_overrides, max_size=n_overrides, unique=True)
    )
    overrides = {s: draw(st.integers(0, 5)) for s in override_subjects}
    return parents, defaults, overrides


class TestTrustOracle:
    @settings(max_examples=200, deadline=None)
    @given(random_hierarchy())
    def test_effective_trust_matches_brute_force_walk(self, hierarchy):
        parents, defaults, overrides = hierarchy
        h = MappingHierarchy(parents)
        table = TrustTable()
        for s, lvl in defaults.items():
            table.set_default(s, lvl)
        for s, lvl in overrides.items():
            table.set_override(s, lvl, h)
        for subject in parents:
            assert effective_trust(subject, h, table) == oracle_trust(
                subject, parents, overrides, defaults
            )

    @settings(max_examples=100, deadline=None)
    @given(random_hierarchy(), st.randoms(use_true_random=False))
    def test_override_only_affects_its_subtree(self, hierarchy, rnd):
        parents, defaults, overrides = hierarchy
        h = MappingHierarchy(parents)
        table = TrustTable()
        for s, lvl in defaults.items():
            table.set_default(s, lvl)
        for s, lvl in overrides.items():
            table.set_override(s, lvl, h)
        before = {s: effective_trust(s, h, table) for s in parents}
        target = rnd.choice(sorted(parents))
        table.set_override(target, 5, h)

        def in_subtree(node):
            while node is not None:
                if node == target:
                    return True
                node = parents[node]
            return False

        for subject in parents:
            if not in_subtree(subject):
                assert effective_trust(subject, h, table) == before[subject]


class TestPreferenceOrder:
    def trust_fn(self, mapping):
        return lambda subject: mapping[subject]

    def test_sorted_by_trust(self):
        candidates = [("a", make_description()), ("b", make_description()), ("c", make_description())]
        trusts = {"a": 2, "b": 0, "c": 1}
        ordered = preference_order(candidates, self.trust_fn(trusts))
        assert [s for s, _ in ordered] == ["b", "c", "a"]

    def test_price_breaks_trust_ties(self):
        candidates = [("a", make_description(amount=500)), ("b", make_description(amount=300))]
        ordered = preference_order(candidates, self.trust_fn({"a": 1, "b": 1}))
        assert [s for s, _ in ordered] == ["b", "a"]

    def test_empty_candidate_list(self):
        assert preference_order([], self.trust_fn({})) == []

    @given(st.lists(st.tuples(st.integers(0, 4), st.integers(0, 1000)), max_size=20))
    def test_permutation_and_idempotence(self, spec):
        candidates = [
            (f"s{i}", make_description(amount=price)) for i, (_, price) in enumerate(spec)
        ]
        trusts = {f"s{i}": t for i, (t, _) in enumerate(spec)}
        once = preference_order(candidates, self.trust_fn(trusts))
        assert sorted(s for s, _ in once) == sorted(s for s, _ in candidates)
        assert preference_order(once, self.trust_fn(trusts)) == once
        assert [trusts[s] for s, _ in once] == sorted(trusts[s] for s, _ in once)
