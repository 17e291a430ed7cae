// Browser wiring: fetch the snapshot, render the three panes, wire drag
// and drop and the live feed. All decision logic lives in the pure
// modules; this file only touches the DOM.

import { ApiClient } from "./api.js";
import { commandForDrop, validateDrop, type DragMode, type DragSource, type DropZone } from "./dnd.js";
import { LiveFeed, type EventSourceLike, type FeedRow } from "./feed.js";
import { OperationTracker } from "./ops.js";
import { buildPanelModel, providerZones, type OwnedRow, type PanelModel } from "./panel.js";
import type { ActivityEventDto, ApiSnapshot } from "./types.js";

const api = new ApiClient("");
const tracker = new OperationTracker();
let lastSnapshot: ApiSnapshot | null = null;
let offline = false;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

function flash(text: string, kind: "info" | "error" = "info"): void {
  const banner = el<HTMLDivElement>("flash");
  banner.textContent = text;
  banner.className = `flash ${kind}`;
  banner.hidden = false;
  setTimeout(() => (banner.hidden = true), 4000);
}

async function refresh(): Promise<void> {
  try {
    lastSnapshot = await api.snapshot();
    offline = false;
  } catch {
    offline = true;
  }
  el<HTMLDivElement>("offline-banner").hidden = !offline;
  if (lastSnapshot) render(buildPanelModel(lastSnapshot, offline));
}

function dragPayload(event: DragEvent): DragSource | null {
  const raw = event.dataTransfer?.getData("application/json");
  if (!raw) return null;
  return JSON.parse(raw) as DragSource;
}

function makeDraggable(node: HTMLElement, source: DragSource): void {
  if (offline) return;
  node.draggable = true;
  node.addEventListener("dragstart", (event) => {
    event.dataTransfer?.setData("application/json", JSON.stringify(source));
  });
}

function makeDropZone(node: HTMLElement, zone: DropZone): void {
  node.addEventListener("dragover", (event) => event.preventDefault());
  node.addEventListener("drop", (event) => {
    event.preventDefault();
    const source = dragPayload(event);
    if (!source || offline) return;
    const mode: DragMode = source.kind === "resource" ? "access" : "copy";
    const verdict = validateDrop(source, zone, mode);
    if (!verdict.ok) {
      node.classList.add("rejected");
      setTimeout(() => node.classList.remove("rejected"), 900);
      flash(verdict.reason, "error");
      return; // no command leaves the console for an invalid drop
    }
    const command = commandForDrop(source, zone, mode);
    void issue(command.verb, command.arguments, source.objectId);
  });
}

async function issue(verb: string, commandArguments: Record<string, unknown>, objectId: string): Promise<void> {
  const result = await api.postCommand(verb, commandArguments);
  if (!result.ok) {
    flash(`${verb}: ${result.error?.type ?? "failed"}`, "error");
  }
  tracker.track(result.command_id, verb, objectId);
  renderOperations();
}

function renderOperations(): void {
  const container = el<HTMLDivElement>("operations");
  container.innerHTML = "";
  for (const operation of tracker.operations.values()) {
    const row = document.createElement("div");
    row.className = `op op-${operation.status}`;
    row.textContent =
      `${operation.verb} ${operation.objectId.slice(0, 24)}… — ` +
      `${operation.status}${operation.live ? " (live)" : ""}${operation.error ? `: ${operation.error}` : ""}`;
    container.appendChild(row);
  }
}

function render(model: PanelModel): void {
  const offers = el<HTMLDivElement>("offers");
  offers.innerHTML = "";
  for (const group of model.offerGroups) {
    const section = document.createElement("section");
    section.className = "trust-group";
    const heading = document.createElement("h3");
    heading.textContent = `Trust ${group.trust}`;
    section.appendChild(heading);
    for (const offer of group.offers) {
      const row = document.createElement("div");
      row.className = `entry kind-${offer.kind}`;
      row.textContent = `${offer.name} [${offer.kind}] @${offer.provider} (${offer.licenseTag})`;
      makeDraggable(row, { objectId: offer.objectId, kind: offer.kind, name: offer.name });
      section.appendChild(row);
    }
    offers.appendChild(section);
  }

  const zones = el<HTMLDivElement>("zones");
  zones.innerHTML = "";
  if (lastSnapshot) {
    for (const zone of providerZones(lastSnapshot)) {
      const node = document.createElement("div");
      node.className = "zone";
      node.textContent = `→ ${zone.providerId} (T${zone.trust})`;
      makeDropZone(node, { zone: "provider", providerId: zone.providerId, trust: zone.trust });
      zones.appendChild(node);
    }
  }

  const owned = el<HTMLDivElement>("owned");
  owned.innerHTML = "";
  for (const row of model.owned) {
    owned.appendChild(ownedRow(row));
  }
  makeDropZone(el("owned-pane"), { zone: "personal" });
  renderOperations();
}

function ownedRow(row: OwnedRow): HTMLElement {
  const node = document.createElement("div");
  node.className = `owned kind-${row.kind}`;
  const title = document.createElement("div");
  title.textContent = `${row.name} [${row.kind}] — ${row.replicas.length} replica(s)`;
  node.appendChild(title);
  const actions = document.createElement("div");
  actions.className = "actions";
  for (const action of row.actions) {
    const button = document.createElement("button");
    button.textContent = action;
    button.addEventListener("click", () => void runAction(action, row));
    actions.appendChild(button);
  }
  node.appendChild(actions);
  makeDraggable(node, { objectId: row.objectId, kind: row.kind, name: row.name });
  return node;
}

async function runAction(action: string, row: OwnedRow): Promise<void> {
  if (action === "history") {
    window.open(`/v1/history?subject=${encodeURIComponent(row.objectId)}&token=${api.token}`, "_blank");
    return;
  }
  if (action.startsWith("backup")) {
    const plan = await api.postCommand("plan_backup", { object_id: row.objectId });
    if (!plan.ok) return flash(`plan_backup: ${plan.error?.type}`, "error");
    const planId = (plan.result as { id: string }).id;
    await issue("execute_plan", { plan_id: planId }, row.objectId);
    return;
  }
  if (action === "deploy") {
    const plan = await api.postCommand("plan_deploy", { object_id: row.objectId });
    if (!plan.ok) return flash(`plan_deploy: ${plan.error?.type}`, "error");
    await issue("execute_plan", { plan_id: (plan.result as { id: string }).id }, row.objectId);
    return;
  }
  if (action === "share access") {
    const grantee = prompt("share with principal:");
    if (!grantee) return;
    await issue("share_access", { resource_id: row.objectId, grantee, rights: ["read"] }, row.objectId);
    return;
  }
  if (action === "migrate access") {
    const grantee = prompt("hand access over to provider/principal:");
    if (!grantee) return;
    await issue(
      "migrate",
      { object_id: row.objectId, destination: { provider_id: grantee, uri: "" }, access: true },
      row.objectId,
    );
    return;
  }
  if (action === "replicate") {
    flash("drag the object onto a zone to replicate it");
  }
}

function renderFeedRow(row: FeedRow): void {
  const feed = el<HTMLDivElement>("feed");
  const node = document.createElement("div");
  if (row.type === "gap") {
    node.className = "feed-gap";
    const link = api.token ? `/v1/history?token=${api.token}` : "/v1/history";
    node.innerHTML = `missed ${row.dropped} event(s) — <a href="${link}" target="_blank">full history</a>`;
  } else {
    const event = row.event;
    node.className = `feed-event outcome-${event.outcome === "ok" ? "ok" : "other"}`;
    node.textContent = `#${event.seq} ${event.outcome} ${event.subject} (${event.command_id})`;
    const advanced = tracker.onEvent(event);
    if (advanced) renderOperations();
    if (event.outcome === "ok" || advanced) void refresh();
  }
  feed.prepend(node);
  while (feed.childElementCount > 200) feed.lastElementChild?.remove();
}

function browserSource(url: string): EventSourceLike {
  const native = new EventSource(url);
  const like: EventSourceLike = {
    onmessage: null,
    onerror: null,
    close: () => native.close(),
  };
  native.onmessage = (message) => like.onmessage?.({ data: message.data });
  native.onerror = () => like.onerror?.();
  return like;
}

async function boot(): Promise<void> {
  const form = el<HTMLFormElement>("login-form");
  form.addEventListener("submit", async (event) => {
    event.preventDefault();
    const principal = (el<HTMLInputElement>("principal")).value || "owner";
    try {
      await api.login(principal);
    } catch {
      flash("login rejected", "error");
      return;
    }
    el("login").hidden = true;
    el("console").hidden = false;
    await refresh();
    const feed = new LiveFeed((since) => browserSource(api.eventsUrl(since)), renderFeedRow);
    feed.start();
    setInterval(() => void refresh(), 15_000);
  });
}

void boot();
