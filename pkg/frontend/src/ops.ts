// In-flight command tracking: a posted command's progress is rendered from
// the event stream, matched by command id.

import type { ActivityEventDto } from "./types.js";

export type OperationStatus = "sent" | "live" | "done" | "failed";

export interface Operation {
  commandId: string;
  verb: string;
  objectId: string;
  status: OperationStatus;
  live: boolean;
  error: string | null;
}

const COMPLETION_EVENTS = new Set(["replicated", "migrated", "access_migrated", "plan_completed"]);

export class OperationTracker {
  readonly operations = new Map<string, Operation>();

  track(commandId: string, verb: string, objectId: string): Operation {
    const operation: Operation = { commandId, verb, objectId, status: "sent", live: false, error: null };
    this.operations.set(commandId, operation);
    return operation;
  }

  /** Returns the operation the event advanced, if any. */
  onEvent(event: ActivityEventDto): Operation | null {
    const operation = this.operations.get(event.command_id);
    if (!operation) return null;
    if (COMPLETION_EVENTS.has(event.outcome)) {
      operation.live = true;
      if (operation.status === "sent") operation.status = "live";
    } else if (event.outcome === "ok") {
      operation.status = "done";
    } else if (event.outcome !== "plan_step" && event.outcome !== "plan_parked") {
      operation.status = "failed";
      operation.error = event.outcome;
    }
    return operation;
  }
}
