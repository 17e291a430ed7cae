#!/usr/bin/env python3
"""Contract-context demo: how the number of storage contracts changes the
backup plan, and how many providers a dispersed backup survives.

For each contract count c the plan is printed, executed against scripted
providers, and then providers are knocked out one by one until
reconstruction fails.
"""

import argparse
import itertools
import random

from picontrol.clock import VirtualClock
from picontrol.errors import InsufficientShares, NoStorageContract
from picontrol.federation import FederationRegistry, ScriptedTransport
from picontrol.model import (
    DATA,
    Dependency,
    DependencyMode,
    DigitalObject,
    Identification,
    Pricing,
    ProviderInfo,
    ServiceDescription,
    canonical_object_id,
    public_open,
)
from picontrol.planner import (
    Contract,
    ContractKind,
    PlanExecutor,
    RetryPolicy,
    StepKind,
    plan_backup,
    refresh_context,
)
from picontrol.providers import ScriptedProvider
from picontrol.secretsharing import decode_share, reconstruct
from picontrol.trust import TrustTable
from picontrol.versionstore import VersionStore


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--payload-bytes", type=int, default=4096)
    parser.add_argument("--max-contracts", type=int, default=5)
    parser.add_argument("--workdir", default="/tmp/picontrol-dispersal")
    args = parser.parse_args()

    clock = VirtualClock()
    rnd = random.Random(7)
    payload = rnd.randbytes(args.payload_bytes)
    data = DigitalObject(
        id=canonical_object_id(DATA, payload),
        kind=DATA,
        name="demo archive",
        description=ServiceDescription(
            identification=Identification("demo archive", "1"),
            function="bytes worth keeping",
            provider_info=ProviderInfo("me"),
            pricing=Pricing(0, "EUR", "flat"),
        ),
        license=public_open(),
        dependencies=(Dependency("kind:resource", DependencyMode.STORAGE),),
    )

    for c in range(0, args.max_contracts + 1):
        store = VersionStore(f"{args.workdir}/c{c}/store", clock=clock)
        registry = FederationRegistry(TrustTable(), store, transport=ScriptedTransport(), clock=clock)
        adapters = {}
        contracts = []
        for i in range(1, c + 1):
            pid = f"st{i}"
            adapters[pid] = ScriptedProvider(clock, name=pid)
            registry.register_provider(pid, adapter=adapters[pid])
            registry.set_trust(pid, 1 + (i % 3))
            contracts.append(Contract(f"c-{pid}", pid, ContractKind.STORAGE))
        ctx = refresh_context(registry, sorted(adapters))
        print(f"\n=== {c} storage contract(s) ===")
        try:
            plan = plan_backup(
                data, contracts, ctx, clock.now(), f"plan-c{c}",
                registry.effective_trust,
            )
        except NoStorageContract as exc:
            print(f"  no plan: {type(exc).__name__}: {exc}")
            continue
        shape = "full copy" if plan.k is None else f"split k={plan.k} of n={plan.n}"
        print(f"  plan: {shape}; steps: {[s.kind.value for s in plan.steps]}")
        executor = PlanExecutor(
            registry.adapter, lambda oid: payload, clock,
            rng=random.Random(c), retry=RetryPolicy(3, 0.01),
        )
        report = executor.execute(plan, ctx)
        print(f"  executed: completed={report.completed}")
        if plan.k is None:
            continue
        transfers = [s for s in plan.steps if s.kind == StepKind.TRANSFER]
        shares = {s.provider_id: decode_share(adapters[s.provider_id].get(s.uri)) for s in transfers}
        for lost_count in range(0, plan.n):
            ok = True
            for lost in itertools.combinations(sorted(shares), lost_count):
                surviving = [sh for pid, sh in shares.items() if pid not in lost]
                try:
                    assert reconstruct(surviving) == payload
                except InsufficientShares:
                    ok = False
                    break
            print(f"  losing any {lost_count} provider(s): {'reconstructable' if ok else 'lost'}")
            if not ok:
                break


if __name__ == "__main__":
    main()
