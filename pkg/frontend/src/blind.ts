// Blind-mode aliasing: hide which model produced which annotation so
// reviewers judge explanations, not reputations. Aliases are stable per
// task (alphabetical endpoint order) so discussion can reference them.

import type { TaskPayload } from "./types";

export function aliasMap(task: TaskPayload): Map<string, string> {
  const names = [...new Set(task.annotations.map((a) => a.endpoint))].sort();
  const map = new Map<string, string>();
  names.forEach((name, index) => map.set(name, `Model ${index + 1}`));
  return map;
}

export function displayName(
  endpoint: string,
  aliases: Map<string, string>,
  blind: boolean,
): string {
  if (!blind) return endpoint;
  return aliases.get(endpoint) ?? "Model ?";
}
