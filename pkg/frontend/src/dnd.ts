// Drag-and-drop: kind-validity is checked client-side before any command
// is sent (resources never travel as copies); everything else, licensing
// included, is the server's call and its error name is rendered verbatim.

export interface DragSource {
  objectId: string;
  kind: string;
  name: string;
}

export type DropZone =
  | { zone: "personal" }
  | { zone: "provider"; providerId: string; trust: number };

export type DragMode = "copy" | "access";

export type DropVerdict = { ok: true } | { ok: false; reason: string };

export function validateDrop(source: DragSource, zone: DropZone, mode: DragMode = "copy"): DropVerdict {
  if (mode === "access") {
    if (source.kind !== "resource") {
      return { ok: false, reason: "only access to resources can be migrated" };
    }
    if (zone.zone === "personal") {
      return { ok: false, reason: "access shares target another domain" };
    }
    return { ok: true };
  }
  if (source.kind === "resource") {
    return { ok: false, reason: "resources cannot be replicated; share or migrate access instead" };
  }
  return { ok: true };
}

export interface IssuedCommand {
  verb: string;
  arguments: Record<string, unknown>;
}

export function commandForDrop(source: DragSource, zone: DropZone, mode: DragMode = "copy"): IssuedCommand {
  const verdict = validateDrop(source, zone, mode);
  if (!verdict.ok) throw new Error(verdict.reason);
  if (mode === "access") {
    const providerId = zone.zone === "provider" ? zone.providerId : "local";
    return {
      verb: "migrate",
      arguments: {
        object_id: source.objectId,
        destination: { provider_id: providerId, uri: "" },
        access: true,
      },
    };
  }
  return {
    verb: "replicate",
    arguments: {
      object_id: source.objectId,
      to_provider: zone.zone === "personal" ? "local" : zone.providerId,
    },
  };
}
