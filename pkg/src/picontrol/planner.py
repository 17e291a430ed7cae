"""Context-dependent planning: backups and deployments under contract and
availability constraints.

Two kinds of context gate what the control centre may do. Contracts decide
what is plannable at all: one storage contract buys a plain backup copy,
two or more let the backup be split into threshold shares dispersed over
distinct providers, and deployment needs a compute contract. Availability
decides what is executable right now: plans touching unreachable providers
park as degraded and resume when the provider returns, instead of failing.

Planning is pure and deterministic given its inputs; execution holds the
only side effects.
"""

from __future__ import annotations

import hashlib
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable, Mapping, Sequence

from .clock import Clock
from .errors import (
    InvalidThreshold,
    NoComputeContract,
    NoStorageContract,
    NotFound,
    PiControlError,
    ThresholdUnsatisfiable,
    TransferFailed,
    UnsupportedKind,
    VerificationFailed,
)
from .federation import AvailabilityRecord
from .model import DATA, SOFTWARE, DigitalObject, dependency_closure
from .providers import ProviderAdapter
from .secretsharing import decode_share, encode_share, split

DEFAULT_STALENESS_S = 300.0


class ContractKind(str, Enum):
    STORAGE = "storage"
    COMPUTE = "compute"
    DATA_FEED = "data_feed"


@dataclass(frozen=True)
class Contract:
    id: str
    provider_id: str
    kind: ContractKind
    properties: Mapping[str, object] = field(default_factory=dict)
    valid_from: float | None = None
    valid_to: float | None = None

    def is_valid(self, now: float) -> bool:
        if self.valid_from is not None and now < self.valid_from:
            return False
        if self.valid_to is not None and now >= self.valid_to:
            return False
        return True

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "provider_id": self.provider_id,
            "kind": self.kind.value,
            "properties": dict(self.properties),
            "valid_from": self.valid_from,
            "valid_to": self.valid_to,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "Contract":
        return cls(
            data["id"], data["provider_id"], ContractKind(data["kind"]),
            dict(data.get("properties") or {}), data.get("valid_from"), data.get("valid_to"),
        )


@dataclass(frozen=True)
class AvailabilityContext:
    """Per-provider reachability; records older than the staleness bound are
    unknown, never reachable."""

    records: Mapping[str, AvailabilityRecord] = field(default_factory=dict)
    staleness_bound_s: float = DEFAULT_STALENESS_S

    def _fresh(self, provider_id: str, now: float) -> AvailabilityRecord | None:
        record = self.records.get(provider_id)
        if record is None or now - record.probed_at > self.staleness_bound_s:
            return None
        return record

    def reachable(self, provider_id: str, now: float) -> bool:
        record = self._fresh(provider_id, now)
        return record is not None and record.reachable

    def known_unreachable(self, provider_id: str, now: float) -> bool:
        record = self._fresh(provider_id, now)
        return record is not None and not record.reachable


def refresh_context(registry, provider_ids=None, timeout_s=None,
                    staleness_bound_s: float = DEFAULT_STALENESS_S) -> AvailabilityContext:
    """Probe providers (bounded concurrency) and aggregate into a fresh context."""
    return AvailabilityContext(registry.probe_all(provider_ids, timeout_s), staleness_bound_s)


def default_threshold(contract_count: int) -> int:
    """Majority threshold, never below 2: tolerates n-k losses while k-1
    shares still reveal nothing."""
    return max(2, contract_count // 2 + 1)


class StepKind(str, Enum):
    SPLIT = "split"
    TRANSFER = "transfer"
    DEPLOY = "deploy"
    VERIFY = "verify"


class StepStatus(str, Enum):
    PENDING = "pending"
    DONE = "done"
    FAILED = "failed"


@dataclass
class PlanStep:
    id: str
    kind: StepKind
    object_id: str
    provider_id: str | None = None
    uri: str | None = None
    share_index: int | None = None
    status: StepStatus = StepStatus.PENDING
    attempts: int = 0
    detail: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "id": self.id, "kind": self.kind.value, "object_id": self.object_id,
            "provider_id": self.provider_id, "uri": self.uri,
            "share_index": self.share_index, "status": self.status.value,
            "attempts": self.attempts, "detail": dict(self.detail),
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "PlanStep":
        return cls(
            data["id"], StepKind(data["kind"]), data["object_id"], data.get("provider_id"),
            data.get("uri"), data.get("share_index"), StepStatus(data["status"]),
            data.get("attempts", 0), dict(data.get("detail") or {}),
        )


class PlanIntent(str, Enum):
    BACKUP = "backup"
    DEPLOY = "deploy"


@dataclass
class Plan:
    id: str
    intent: PlanIntent
    object_id: str
    steps: list[PlanStep]
    required_contracts: tuple[str, ...] = ()
    degraded: bool = False
    k: int | None = None
    n: int | None = None
    created_at: float = 0.0

    @property
    def completed(self) -> bool:
        return all(s.status == StepStatus.DONE for s in self.steps)

    def step(self, step_id: str) -> PlanStep:
        for s in self.steps:
            if s.id == step_id:
                return s
        raise NotFound(step_id)

    def to_dict(self) -> dict:
        return {
            "id": self.id, "intent": self.intent.value, "object_id": self.object_id,
            "steps": [s.to_dict() for s in self.steps],
            "required_contracts": list(self.required_contracts),
            "degraded": self.degraded, "k": self.k, "n": self.n,
            "created_at": self.created_at,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "Plan":
        return cls(
            data["id"], PlanIntent(data["intent"]), data["object_id"],
            [PlanStep.from_dict(s) for s in data["steps"]],
            tuple(data.get("required_contracts") or ()),
            data.get("degraded", False), data.get("k"), data.get("n"),
            data.get("created_at", 0.0),
        )


def _contracted_providers(
    contracts: Iterable[Contract],
    kind: ContractKind,
    now: float,
    trust_of: Callable[[str], int],
    ctx: AvailabilityContext | None = None,
) -> tuple[list[str], dict[str, str]]:
    """Distinct providers holding a valid contract of this kind, trust-ordered;
    optionally filtered to currently reachable ones. Also maps provider ->
    the contract id satisfying the requirement."""
    chosen: dict[str, str] = {}
    for contract in sorted(contracts, key=lambda c: c.id):
        if contract.kind != kind or not contract.is_valid(now):
            continue
        if ctx is not None and not ctx.reachable(contract.provider_id, now):
            continue
        chosen.setdefault(contract.provider_id, contract.id)
    ordered = sorted(chosen, key=lambda pid: (trust_of(pid), pid))
    return ordered, chosen


def plan_backup(
    obj: DigitalObject,
    contracts: Sequence[Contract],
    ctx: AvailabilityContext,
    now: float,
    plan_id: str,
    trust_of: Callable[[str], int],
    k_override: int | None = None,
) -> Plan:
    """Backup of a data object over the reachable storage contracts.

    One contract: a single full copy. c >= 2: split into n = c shares with
    threshold k = max(2, floor(c/2)+1) unless overridden, one share per
    provider in trust preference order."""
    if obj.kind.tag != DATA.tag:
        raise UnsupportedKind(f"backup plans cover data objects, {obj.id} is {obj.kind.tag}")
    providers, contract_for = _contracted_providers(
        contracts, ContractKind.STORAGE, now, trust_of, ctx
    )
    count = len(providers)
    if count == 0:
        raise NoStorageContract("backup needs at least one reachable, valid storage contract")

    steps: list[PlanStep] = []
    if count == 1:
        uri = f"backup/{obj.id}/full"
        steps.append(PlanStep(f"{plan_id}/s1", StepKind.TRANSFER, obj.id, providers[0], uri))
        steps.append(PlanStep(f"{plan_id}/s2", StepKind.VERIFY, obj.id))
        k = n = None
    else:
        if k_override is not None:
            if not isinstance(k_override, int) or k_override < 1:
                raise InvalidThreshold(f"threshold override must be a positive integer, got {k_override!r}")
            if k_override > count:
                raise ThresholdUnsatisfiable(
                    f"threshold {k_override} needs {k_override} reachable storage contracts, have {count}"
                )
            k = k_override
        else:
            k = default_threshold(count)
        n = count
        steps.append(PlanStep(f"{plan_id}/s1", StepKind.SPLIT, obj.id))
        for i, provider_id in enumerate(providers, start=1):
            steps.append(
                PlanStep(
                    f"{plan_id}/s{1 + i}", StepKind.TRANSFER, obj.id, provider_id,
                    f"backup/{obj.id}/share-{i}", share_index=i,
                )
            )
        steps.append(PlanStep(f"{plan_id}/s{2 + n}", StepKind.VERIFY, obj.id))
    return Plan(
        plan_id, PlanIntent.BACKUP, obj.id, steps,
        tuple(contract_for[p] for p in providers), k=k, n=n, created_at=now,
    )


def plan_deployment(
    obj: DigitalObject,
    catalog: Mapping[str, DigitalObject],
    contracts: Sequence[Contract],
    ctx: AvailabilityContext,
    now: float,
    plan_id: str,
    trust_of: Callable[[str], int],
) -> Plan:
    """Deploy a software object onto the trust-preferred reachable compute
    contract, staging the payload and its concrete data dependencies first.

    No compute contract at all is an error; compute contracts that are all
    currently unreachable produce a degraded plan that waits."""
    if obj.kind.tag != SOFTWARE.tag:
        raise UnsupportedKind(f"deployment plans cover software, {obj.id} is {obj.kind.tag}")
    closure = dependency_closure(obj, catalog)

    all_compute, compute_contract_for = _contracted_providers(
        contracts, ContractKind.COMPUTE, now, trust_of
    )
    if not all_compute:
        raise NoComputeContract("deployment needs a valid compute contract")
    reachable_compute = [p for p in all_compute if ctx.reachable(p, now)]
    degraded = not reachable_compute
    target = (reachable_compute or all_compute)[0]

    data_deps = [oid for oid in sorted(closure) if catalog[oid].kind.tag == DATA.tag]
    storage_providers, storage_contract_for = _contracted_providers(
        contracts, ContractKind.STORAGE, now, trust_of, ctx
    )
    if data_deps and not storage_providers:
        raise NoStorageContract(
            f"{obj.id} depends on {len(data_deps)} data set(s) but no storage contract is reachable"
        )

    steps = [PlanStep(f"{plan_id}/s1", StepKind.TRANSFER, obj.id, target, f"objects/{obj.id}")]
    seq = 2
    required = [compute_contract_for[target]]
    for dep_id in data_deps:
        steps.append(
            PlanStep(f"{plan_id}/s{seq}", StepKind.TRANSFER, dep_id,
                     storage_providers[0], f"objects/{dep_id}")
        )
        seq += 1
    if data_deps:
        required.append(storage_contract_for[storage_providers[0]])
    steps.append(PlanStep(f"{plan_id}/s{seq}", StepKind.DEPLOY, obj.id, target))
    steps.append(PlanStep(f"{plan_id}/s{seq + 1}", StepKind.VERIFY, obj.id, target))
    return Plan(
        plan_id, PlanIntent.DEPLOY, obj.id, steps, tuple(dict.fromkeys(required)),
        degraded=degraded, created_at=now,
    )


@dataclass(frozen=True)
class RetryPolicy:
    attempts: int = 3
    base_delay_s: float = 1.0

    def delay(self, attempt: int) -> float:
        return self.base_delay_s * (2 ** attempt)


@dataclass(frozen=True)
class ExecutionReport:
    plan_id: str
    executed: tuple[str, ...]
    skipped: tuple[str, ...]
    failed: dict[str, str]
    degraded: bool
    completed: bool


class PlanExecutor:
    """Runs plan steps in order, share transfers concurrently (bounded).

    A step whose provider stays unreachable after the retry policy parks the
    whole plan as degraded; re-running the executor resumes exactly the
    pending steps, so execution is idempotent and step status is monotone.
    """

    def __init__(
        self,
        adapters: Callable[[str], ProviderAdapter | None],
        payloads: Callable[[str], bytes],
        clock: Clock,
        rng: random.Random | None = None,
        on_event: Callable[[str, str, dict], None] | None = None,
        retry: RetryPolicy = RetryPolicy(),
        transfer_workers: int = 4,
    ):
        self._adapters = adapters
        self._payloads = payloads
        self.clock = clock
        self.rng = rng or random.Random()
        self.retry = retry
        self._on_event = on_event or (lambda *_: None)
        self._pool = ThreadPoolExecutor(max_workers=transfer_workers)

    # --- share material ---

    def _split_step(self, plan: Plan) -> PlanStep | None:
        for step in plan.steps:
            if step.kind == StepKind.SPLIT:
                return step
        return None

    def _shares(self, plan: Plan):
        """Shares are derived from a seed fixed at split time, so resuming a
        parked plan (even across a restart) transfers compatible shares."""
        step = self._split_step(plan)
        assert step is not None and plan.k and plan.n
        seed = step.detail["seed"]
        payload = self._payloads(plan.object_id)
        return split(payload, plan.k, plan.n, random.Random(int(seed, 16)))

    # --- step runners ---

    def _adapter_or_fail(self, provider_id: str) -> ProviderAdapter:
        adapter = self._adapters(provider_id)
        if adapter is None:
            raise TransferFailed(f"no adapter bound for provider {provider_id}")
        return adapter

    def _run_split(self, plan: Plan, step: PlanStep) -> None:
        if "seed" not in step.detail:
            step.detail["seed"] = f"{self.rng.getrandbits(256):064x}"
        self._shares(plan)  # fail early if the payload is unavailable

    def _run_transfer(self, plan: Plan, step: PlanStep) -> None:
        if step.share_index is not None:
            share = self._shares(plan)[step.share_index - 1]
            data = encode_share(share)
        else:
            data = self._payloads(step.object_id)
        self._adapter_or_fail(step.provider_id).put(step.uri, data)

    def _run_deploy(self, plan: Plan, step: PlanStep) -> None:
        payload = self._payloads(step.object_id)
        instance = self._adapter_or_fail(step.provider_id).deploy(
            payload, {"object_id": step.object_id, "plan_id": plan.id}
        )
        step.detail["instance_id"] = instance

    def _run_verify(self, plan: Plan, step: PlanStep) -> None:
        if plan.intent == PlanIntent.BACKUP:
            payload = self._payloads(plan.object_id)
            expected = hashlib.sha256(payload).hexdigest()
            for transfer in plan.steps:
                if transfer.kind != StepKind.TRANSFER:
                    continue
                written = self._adapter_or_fail(transfer.provider_id).get(transfer.uri)
                if transfer.share_index is not None:
                    share = decode_share(written)
                    if share.payload_digest != expected or share.index != transfer.share_index:
                        raise VerificationFailed(f"share at {transfer.provider_id} fails verification")
                elif hashlib.sha256(written).hexdigest() != expected:
                    raise VerificationFailed(f"copy at {transfer.provider_id} fails verification")
        else:
            deploy_step = next(s for s in plan.steps if s.kind == StepKind.DEPLOY)
            instance = deploy_step.detail.get("instance_id")
            status = self._adapter_or_fail(step.provider_id).instance_status(instance)
            step.detail["instance_status"] = status
            if status != "running":
                raise TransferFailed(f"instance {instance} is {status}")

    # --- the loop ---

    def _attempt(self, plan: Plan, step: PlanStep) -> str | None:
        """Run one step under the retry policy; returns an error string on failure."""
        runner = {
            StepKind.SPLIT: self._run_split,
            StepKind.TRANSFER: self._run_transfer,
            StepKind.DEPLOY: self._run_deploy,
            StepKind.VERIFY: self._run_verify,
        }[step.kind]
        last = ""
        for attempt in range(self.retry.attempts):
            step.attempts += 1
            try:
                runner(plan, step)
                step.status = StepStatus.DONE
                self._on_event("plan_step", plan.object_id,
                               {"plan": plan.id, "step": step.id, "outcome": "done"})
                return None
            except PiControlError as exc:
                last = f"{type(exc).__name__}: {exc}"
                if attempt + 1 < self.retry.attempts:
                    self.clock.sleep(self.retry.delay(attempt))
        self._on_event("plan_step", plan.object_id,
                       {"plan": plan.id, "step": step.id, "outcome": "failed", "error": last})
        return last

    def execute(self, plan: Plan, ctx: AvailabilityContext) -> ExecutionReport:
        executed: list[str] = []
        skipped: list[str] = []
        failed: dict[str, str] = {}

        def park(step: PlanStep, reason: str) -> ExecutionReport:
            failed[step.id] = reason
            plan.degraded = True
            self._on_event("plan_parked", plan.object_id,
                           {"plan": plan.id, "step": step.id, "reason": reason})
            return ExecutionReport(
                plan.id, tuple(executed), tuple(skipped), failed, True, False
            )

        index = 0
        while index < len(plan.steps):
            step = plan.steps[index]
            if step.status == StepStatus.DONE:
                skipped.append(step.id)
                index += 1
                continue
            # share transfers are mutually independent: run the whole block concurrently
            block = [step]
            if step.kind == StepKind.TRANSFER and step.share_index is not None:
                while (
                    index + len(block) < len(plan.steps)
                    and plan.steps[index + len(block)].kind == StepKind.TRANSFER
                    and plan.steps[index + len(block)].share_index is not None
                    and plan.steps[index + len(block)].status != StepStatus.DONE
                ):
                    block.append(plan.steps[index + len(block)])
            for blocked in block:
                if blocked.provider_id and ctx.known_unreachable(blocked.provider_id, self.clock.now()):
                    return park(blocked, f"provider {blocked.provider_id} known unreachable")
            if len(block) == 1:
                error = self._attempt(plan, step)
                if error is not None:
                    return park(step, error)
                executed.append(step.id)
                index += 1
            else:
                results = list(self._pool.map(lambda s: (s, self._attempt(plan, s)), block))
                for blocked, error in results:
                    if error is None:
                        executed.append(blocked.id)
                for blocked, error in results:
                    if error is not None:
                        return park(blocked, error)
                index += len(block)

        plan.degraded = False
        completed = plan.completed
        if completed:
            self._on_event("plan_completed", plan.object_id, {"plan": plan.id})
        return ExecutionReport(plan.id, tuple(executed), tuple(skipped), failed, False, completed)
