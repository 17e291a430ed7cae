// Every command this console can construct, with the arguments it always
// sets. The build fails (scripts/check-schema.mjs) if any of these drifts
// from the daemon's published command list in schema/commands.json.

export interface IssuedCommandShape {
  verb: string;
  argumentsProduced: string[];
}

export const ISSUED_COMMANDS: IssuedCommandShape[] = [
  { verb: "replicate", argumentsProduced: ["object_id", "to_provider"] },
  { verb: "migrate", argumentsProduced: ["object_id", "destination", "access"] },
  { verb: "plan_backup", argumentsProduced: ["object_id"] },
  { verb: "plan_deploy", argumentsProduced: ["object_id"] },
  { verb: "execute_plan", argumentsProduced: ["plan_id"] },
  { verb: "share_access", argumentsProduced: ["resource_id", "grantee", "rights"] },
  { verb: "search", argumentsProduced: ["query"] },
];

/** Problems between what the console issues and what the daemon accepts. */
export function checkAgainstSchema(published: Record<string, string[]>): string[] {
  const problems: string[] = [];
  for (const issued of ISSUED_COMMANDS) {
    const schemaArguments = published[issued.verb];
    if (schemaArguments === undefined) {
      problems.push(`verb '${issued.verb}' is not in the daemon's command list`);
      continue;
    }
    const allowed = new Set(schemaArguments.map((a) => a.replace(/\?$/, "")));
    const required = schemaArguments.filter((a) => !a.endsWith("?"));
    for (const argument of issued.argumentsProduced) {
      if (!allowed.has(argument)) {
        problems.push(`verb '${issued.verb}': argument '${argument}' is not accepted`);
      }
    }
    for (const argument of required) {
      if (!issued.argumentsProduced.includes(argument)) {
        problems.push(`verb '${issued.verb}': required argument '${argument}' never set`);
      }
    }
  }
  return problems;
}
