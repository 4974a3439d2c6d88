// Pure view logic: queue grouping and filtering, the client-side mirror of
// the server's record validator, editor draft handling, and the mapping
// consolidation arithmetic. Nothing in here touches the DOM or the network.

import type {
  ArticleDetail,
  MappingProposalPayload,
  QueueItem,
  RecordPayload,
  SchemaField,
} from "./types.js";

// Matches the server's triage ordering; groups render in this order.
export const STAGE_ORDER = [
  "syntax",
  "completeness",
  "outlier",
  "coverage",
  "manual_other",
] as const;

export interface QueueFilter {
  stage: string;
  minWev: number | null;
  page: number;
  pageSize: number;
}

export function defaultQueueFilter(): QueueFilter {
  return { stage: "", minWev: null, page: 0, pageSize: 50 };
}

export function filterQueue(items: QueueItem[], filter: QueueFilter): QueueItem[] {
  return items.filter((it) => {
    if (filter.stage && it.stage !== filter.stage) return false;
    if (filter.minWev !== null && (it.wev === null || it.wev < filter.minWev)) return false;
    return true;
  });
}

export interface Page<T> {
  page: number;
  pages: number;
  slice: T[];
}

export function paginate<T>(items: T[], page: number, pageSize: number): Page<T> {
  const pages = Math.max(1, Math.ceil(items.length / pageSize));
  const clamped = Math.min(Math.max(page, 0), pages - 1);
  return {
    page: clamped,
    pages,
    slice: items.slice(clamped * pageSize, (clamped + 1) * pageSize),
  };
}

export interface QueueGroup {
  stage: string;
  items: QueueItem[];
}

/** Group items by stage, stages in triage order, server order within. */
export function groupByStage(items: QueueItem[]): QueueGroup[] {
  const groups: QueueGroup[] = [];
  const index = new Map<string, QueueGroup>();
  const rank = (stage: string) => {
    const i = STAGE_ORDER.indexOf(stage as (typeof STAGE_ORDER)[number]);
    return i === -1 ? STAGE_ORDER.length : i;
  };
  for (const item of items) {
    let group = index.get(item.stage);
    if (!group) {
      group = { stage: item.stage, items: [] };
      index.set(item.stage, group);
      groups.push(group);
    }
    group.items.push(item);
  }
  return groups.sort((a, b) => rank(a.stage) - rank(b.stage));
}

// -- record editor ----------------------------------------------------------

/** One record draft: every schema field as its raw string. */
export type Draft = Record<string, string>;

export function emptyDraft(fields: SchemaField[]): Draft {
  const draft: Draft = {};
  for (const f of fields) draft[f.name] = "";
  return draft;
}

export function draftFromRecord(fields: SchemaField[], record: RecordPayload): Draft {
  const draft: Draft = {};
  for (const f of fields) draft[f.name] = record.values[f.name]?.raw ?? "";
  return draft;
}

export interface DraftValidation {
  status: "compliant" | "noncompliant" | "empty_targets";
  missing: string[];
  extra: string[];
}

/**
 * Client-side mirror of the server's record validator: the key set must
 * equal the schema exactly, and at least one target metric must be
 * non-blank. The server re-checks on submit; this only gates the button.
 */
export function validateDraft(draft: Draft, fields: SchemaField[]): DraftValidation {
  const names = new Set(fields.map((f) => f.name));
  const keys = new Set(Object.keys(draft));
  const missing = [...names].filter((n) => !keys.has(n)).sort();
  const extra = [...keys].filter((k) => !names.has(k)).sort();
  if (missing.length || extra.length) {
    return { status: "noncompliant", missing, extra };
  }
  const hasTarget = fields.some((f) => f.target_metric && (draft[f.name] ?? "").trim() !== "");
  if (!hasTarget) return { status: "empty_targets", missing: [], extra: [] };
  return { status: "compliant", missing: [], extra: [] };
}

export function validationMessage(v: DraftValidation): string {
  if (v.status === "compliant") return "ok";
  if (v.status === "empty_targets") return "every target metric is empty";
  const parts = [];
  if (v.missing.length) parts.push(`missing: ${v.missing.join(", ")}`);
  if (v.extra.length) parts.push(`extra: ${v.extra.join(", ")}`);
  return parts.join("; ");
}

export function dirtyFields(draft: Draft, baseline: Draft): string[] {
  return Object.keys(draft)
    .filter((k) => draft[k] !== (baseline[k] ?? ""))
    .sort();
}

export interface FieldRow {
  field: SchemaField;
  unit: SchemaField | null;
  uncertainty: SchemaField | null;
}

/**
 * Schema-ordered grid rows. Companion unit/uncertainty fields fold into
 * their value field's row instead of getting rows of their own, so every
 * schema field appears exactly once.
 */
export function fieldRows(fields: SchemaField[]): FieldRow[] {
  const byName = new Map(fields.map((f) => [f.name, f]));
  const companions = new Set<string>();
  for (const f of fields) {
    if (f.unit_field) companions.add(f.unit_field);
    if (f.uncertainty_field) companions.add(f.uncertainty_field);
  }
  const rows: FieldRow[] = [];
  for (const f of fields) {
    if (companions.has(f.name)) continue;
    rows.push({
      field: f,
      unit: f.unit_field ? (byName.get(f.unit_field) ?? null) : null,
      uncertainty: f.uncertainty_field ? (byName.get(f.uncertainty_field) ?? null) : null,
    });
  }
  return rows;
}

// -- mapping consolidation ---------------------------------------------------

export interface ConsolidationSummary {
  uniqueBefore: number;
  uniqueAfter: number;
  mapped: number;
  unmappedValues: string[];
}

/**
 * Same arithmetic the server's apply step reports: blank cells count
 * nowhere, unmapped values pass through and stay unique, mapped cells
 * collapse onto their canonical.
 */
export function consolidationSummary(
  values: (string | null)[],
  accepted: Record<string, string>,
): ConsolidationSummary {
  const before = new Set<string>();
  const after = new Set<string>();
  const unmapped = new Set<string>();
  let mapped = 0;
  for (const value of values) {
    if (value === null || value.trim() === "") continue;
    before.add(value);
    const canonical = accepted[value];
    if (canonical === undefined) {
      unmapped.add(value);
      after.add(value);
    } else {
      mapped += 1;
      after.add(canonical);
    }
  }
  return {
    uniqueBefore: before.size,
    uniqueAfter: after.size,
    mapped,
    unmappedValues: [...unmapped].sort(),
  };
}

/** Raw values of one field across articles' active records; blank -> null. */
export function collectFieldValues(details: ArticleDetail[], field: string): (string | null)[] {
  const values: (string | null)[] = [];
  for (const detail of details) {
    for (const record of detail.records) {
      const raw = record.values[field]?.raw;
      values.push(raw ? raw : null);
    }
  }
  return values;
}

export function proposedOnly(proposals: MappingProposalPayload[]): MappingProposalPayload[] {
  return proposals.filter((p) => p.status === "proposed");
}
