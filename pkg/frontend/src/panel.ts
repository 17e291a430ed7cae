// The three-pane view model, built purely from API responses. The console
// computes no trust logic: grouping uses the trust levels the daemon
// served with each entry.

import type { ApiSnapshot, EntryDto, OwnedObjectDto, ReplicaDto } from "./types.js";

export interface OfferRow {
  entryId: string;
  objectId: string;
  name: string;
  kind: string;
  trust: number;
  directory: string;
  provider: string;
  priceMinor: number | null;
  licenseTag: string;
  licenseBound: number | null;
  advertisedAs: string;
}

export interface OwnedRow {
  objectId: string;
  entryId: string | null;
  name: string;
  kind: string;
  owner: string | null;
  replicas: ReplicaDto[];
  heads: string[];
  actions: string[];
}

export interface OfferGroup {
  trust: number;
  offers: OfferRow[];
}

export interface PanelModel {
  offerGroups: OfferGroup[];
  owned: OwnedRow[];
  offline: boolean;
}

export interface ContractContext {
  storage_contracts: number;
  compute_contracts: number;
}

/** Context-dependent action set; "backup (dispersed)" needs two contracts. */
export function actionsFor(kind: string, context: ContractContext): string[] {
  const actions: string[] = [];
  if (kind === "resource") {
    actions.push("share access", "migrate access");
  } else {
    actions.push("replicate");
    if (kind === "data" && context.storage_contracts >= 2) actions.push("backup (dispersed)");
    else if (kind === "data" && context.storage_contracts >= 1) actions.push("backup");
    if (kind === "software" && context.compute_contracts >= 1) actions.push("deploy");
  }
  actions.push("history");
  return actions;
}

function offerRow(entry: EntryDto): OfferRow {
  return {
    entryId: entry.entry_id,
    objectId: entry.object.id,
    name: entry.object.name,
    kind: entry.object.kind,
    trust: entry.trust ?? Number.POSITIVE_INFINITY,
    directory: entry.directory,
    provider: entry.provider,
    priceMinor: entry.object.description.pricing?.amount_minor ?? null,
    licenseTag: entry.object.license.tag,
    licenseBound: entry.object.license.replication_allowed_to,
    advertisedAs: entry.advertised_as,
  };
}

export function buildPanelModel(snapshot: ApiSnapshot, offline = false): PanelModel {
  const byTrust = new Map<number, OfferRow[]>();
  const personalEntries: EntryDto[] = [];
  for (const directory of snapshot.directories) {
    for (const entry of directory.entries) {
      if (directory.kind === "device_local") {
        personalEntries.push(entry);
        continue;
      }
      const row = offerRow(entry);
      const group = byTrust.get(row.trust) ?? [];
      group.push(row);
      byTrust.set(row.trust, group);
    }
  }
  const offerGroups = [...byTrust.entries()]
    .sort(([a], [b]) => a - b)
    .map(([trust, offers]) => ({
      trust,
      offers: offers.sort((a, b) => a.name.localeCompare(b.name)),
    }));

  const context = snapshot.status?.context ?? { storage_contracts: 0, compute_contracts: 0 };
  const ownedById = new Map<string, OwnedObjectDto>();
  for (const owned of snapshot.objects) ownedById.set(owned.object.id, owned);

  const owned: OwnedRow[] = [];
  const seen = new Set<string>();
  for (const entry of personalEntries) {
    const ownedObject = ownedById.get(entry.object.id);
    owned.push({
      objectId: entry.object.id,
      entryId: entry.entry_id,
      name: entry.object.name,
      kind: entry.object.kind,
      owner: ownedObject?.owner ?? null,
      replicas: ownedObject?.replicas ?? [],
      heads: ownedObject?.heads ?? [],
      actions: actionsFor(entry.object.kind, context),
    });
    seen.add(entry.object.id);
  }
  // catalogued objects without a personal entry (for example rule sets)
  for (const ownedObject of snapshot.objects) {
    if (seen.has(ownedObject.object.id)) continue;
    owned.push({
      objectId: ownedObject.object.id,
      entryId: null,
      name: ownedObject.object.name,
      kind: ownedObject.object.kind,
      owner: ownedObject.owner,
      replicas: ownedObject.replicas,
      heads: ownedObject.heads,
      actions: actionsFor(ownedObject.object.kind, context),
    });
  }
  owned.sort((a, b) => a.name.localeCompare(b.name));
  return { offerGroups, owned, offline };
}

/** Drop zones the panes expose: the personal domain plus every advertising
 * provider at its served trust level. */
export interface ProviderZone {
  providerId: string;
  trust: number;
}

export function providerZones(snapshot: ApiSnapshot): ProviderZone[] {
  const zones = new Map<string, number>();
  for (const directory of snapshot.directories) {
    if (directory.kind === "device_local") continue;
    for (const entry of directory.entries) {
      if (entry.trust === null) continue;
      const existing = zones.get(entry.provider);
      if (existing === undefined || entry.trust < existing) zones.set(entry.provider, entry.trust);
    }
  }
  return [...zones.entries()]
    .map(([providerId, trust]) => ({ providerId, trust }))
    .sort((a, b) => a.trust - b.trust || a.providerId.localeCompare(b.providerId));
}
