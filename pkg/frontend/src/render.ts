// HTML renderers. Every view is a pure function from server payloads plus
// ephemeral UI state to a markup string; the app swaps it into the page and
// relies on event delegation, so no renderer attaches listeners.

import type {
  ArticleDetail,
  ArticlesBody,
  FlagPayload,
  MappingsBody,
  QueueBody,
  QueueItem,
  SchemaField,
  StatsBody,
} from "./types.js";
import type { UiConfig } from "./config.js";
import {
  Draft,
  QueueFilter,
  STAGE_ORDER,
  dirtyFields,
  fieldRows,
  filterQueue,
  groupByStage,
  paginate,
  validateDraft,
  validationMessage,
  consolidationSummary,
} from "./model.js";

export function esc(value: unknown): string {
  return String(value)
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

function chip(text: string, cls = ""): string {
  return `<span class="chip ${cls}">${esc(text)}</span>`;
}

// Suggested action names -> flag resolutions; the rest navigate to the
// article page instead of posting anything.
const ACTION_RESOLUTIONS: Record<string, string> = {
  inspected_kept: "inspected_kept",
  exclude: "excluded",
  accept_repairs: "auto_repaired",
};

const NAV_ACTION_LABELS: Record<string, string> = {
  relabel: "relabel",
  inspect_raw_response: "inspect",
  add_missing_experiments: "add experiments",
};

function actionMarkup(action: string, item: QueueItem): string {
  const resolution = ACTION_RESOLUTIONS[action];
  if (resolution) {
    return (
      `<button data-act="resolve" data-flag="${esc(item.flag_id)}"` +
      ` data-resolution="${esc(resolution)}">${esc(action)}</button>`
    );
  }
  const label = NAV_ACTION_LABELS[action] ?? action;
  return `<a data-nav href="#/articles/${esc(item.article_id)}">${esc(label)}</a>`;
}

function detailInline(detail: Record<string, unknown>): string {
  const parts: string[] = [];
  for (const [key, value] of Object.entries(detail)) {
    if (value === null || typeof value === "object") continue;
    parts.push(`${esc(key)}=${esc(typeof value === "number" ? fmtNum(value) : value)}`);
  }
  return parts.join(" ");
}

function fmtNum(x: number): string {
  return Number.isInteger(x) ? String(x) : x.toFixed(3).replace(/0+$/, "").replace(/\.$/, "");
}

export interface QueueUi {
  filter: QueueFilter;
  selection: number;
}

export function renderQueueView(body: QueueBody, ui: QueueUi): string {
  const filtered = filterQueue(body.items, ui.filter);
  const page = paginate(filtered, ui.filter.page, ui.filter.pageSize);
  const stages = ["", ...STAGE_ORDER];
  const filterBar =
    `<div class="filters">` +
    stages
      .map(
        (s) =>
          `<button data-act="stage-filter" data-stage="${esc(s)}"` +
          ` class="${ui.filter.stage === s ? "on" : ""}">${esc(s || "all")}</button>`,
      )
      .join("") +
    ` <label>min wEV <input data-role="min-wev" type="number" step="0.1"` +
    ` value="${ui.filter.minWev === null ? "" : esc(ui.filter.minWev)}"></label>` +
    ` <span class="page">page ${page.page + 1}/${page.pages}</span>` +
    `<button data-act="page-prev">prev</button><button data-act="page-next">next</button>` +
    `</div>`;
  if (page.slice.length === 0) {
    return `<section class="queue">${filterBar}<p class="empty">no open flags</p></section>`;
  }
  const selected = page.slice[Math.min(ui.selection, page.slice.length - 1)];
  const groups = groupByStage(page.slice)
    .map(
      (group) =>
        `<section class="stage-group" data-stage="${esc(group.stage)}">` +
        `<h3>${esc(group.stage)} (${group.items.length})</h3><ul>` +
        group.items.map((item) => queueItemMarkup(item, item === selected)).join("") +
        `</ul></section>`,
    )
    .join("");
  return `<section class="queue">${filterBar}${groups}</section>`;
}

function queueItemMarkup(item: QueueItem, selected: boolean): string {
  const wev = item.wev === null ? "" : `<span class="wev">wev=${item.wev.toFixed(2)}</span>`;
  const actions = item.suggested_actions.map((a) => actionMarkup(a, item)).join(" ");
  return (
    `<li class="queue-item${selected ? " sel" : ""}" data-flag="${esc(item.flag_id)}"` +
    ` data-article="${esc(item.article_id)}">` +
    `<code class="flag-id">${esc(item.flag_id)}</code> ` +
    chip(item.stage, `stage-${esc(item.stage)}`) +
    ` <a data-nav class="title" href="#/articles/${esc(item.article_id)}">` +
    `${esc(item.title || item.article_id)}</a> ${wev}` +
    `<span class="detail">${detailInline(item.detail)}</span>` +
    `<span class="actions">${actions}</span></li>`
  );
}

export function renderArticlesView(body: ArticlesBody): string {
  const rows = body.articles
    .map(
      (a) =>
        `<tr data-article="${esc(a.article_id)}">` +
        `<td><a data-nav href="#/articles/${esc(a.article_id)}">${esc(a.title || a.article_id)}</a></td>` +
        `<td><code>${esc(a.article_id)}</code></td>` +
        `<td>${chip(a.label_status, `status-${esc(a.label_status)}`)}</td>` +
        `<td>${a.revision}</td><td>${a.records}</td><td>${a.open_flags}</td></tr>`,
    )
    .join("");
  return (
    `<section class="articles"><table><thead><tr>` +
    `<th>title</th><th>id</th><th>status</th><th>rev</th><th>records</th><th>open flags</th>` +
    `</tr></thead><tbody>${rows}</tbody></table></section>`
  );
}

// Resolutions a reviewer may post per stage, mirroring the server's
// transition table (plus "relabeled" which every stage accepts).
const STAGE_RESOLUTIONS: Record<string, string[]> = {
  syntax: ["relabeled", "excluded"],
  completeness: ["auto_repaired", "relabeled", "excluded"],
  outlier: ["inspected_kept", "relabeled", "excluded"],
  coverage: ["relabeled", "excluded"],
  manual_other: ["relabeled", "excluded"],
};

function flagMarkup(flag: FlagPayload): string {
  const open = flag.resolution === "open";
  const buttons = open
    ? (STAGE_RESOLUTIONS[flag.stage] ?? ["excluded"])
        .map(
          (r) =>
            `<button data-act="resolve" data-flag="${esc(flag.flag_id)}"` +
            ` data-resolution="${esc(r)}">${esc(r)}</button>`,
        )
        .join(" ")
    : "";
  return (
    `<li class="flag ${open ? "open" : "resolved"}" data-flag="${esc(flag.flag_id)}">` +
    `<code>${esc(flag.flag_id)}</code> ${chip(flag.stage, `stage-${esc(flag.stage)}`)} ` +
    chip(flag.resolution, `res-${esc(flag.resolution)}`) +
    ` <span class="detail">${detailInline(flag.detail)}</span> ${buttons}</li>`
  );
}

export interface EditorUi {
  drafts: Draft[];
  baselines: Draft[];
}

export function renderArticleView(
  detail: ArticleDetail,
  fields: SchemaField[],
  editor: EditorUi,
): string {
  const meta = detail.metadata;
  const link = meta.doi || meta.source_link;
  const header =
    `<header><h2>${esc(detail.title || detail.article_id)}</h2>` +
    `<p><code>${esc(detail.article_id)}</code> ` +
    chip(detail.label_status, `status-${esc(detail.label_status)}`) +
    ` <span class="rev">revision ${detail.revision}</span>` +
    (link ? ` <span class="link">${esc(link)}</span>` : "") +
    (meta.venue ? ` ${esc(meta.venue)}` : "") +
    (meta.year !== null ? ` ${esc(meta.year)}` : "") +
    `</p></header>`;

  const flags = detail.flags.length
    ? `<section class="flags"><h3>flags</h3><ul>${detail.flags.map(flagMarkup).join("")}</ul></section>`
    : "";

  const coverage = detail.coverage
    ? `<section class="coverage"><h3>coverage</h3><span class="detail">` +
      `${detailInline(detail.coverage)}</span></section>`
    : "";

  const targetFields = fields.filter((f) => f.target_metric);
  const recordRows = detail.records
    .map(
      (r, i) =>
        `<tr data-record="${esc(r.record_id)}"><td><code>${esc(r.record_id)}</code></td>` +
        `<td>${chip(r.provenance, `prov-${esc(r.provenance)}`)}</td>` +
        targetFields
          .map((f) => `<td>${esc(r.values[f.name]?.raw ?? "")}</td>`)
          .join("") +
        `<td><button data-act="edit-record" data-index="${i}">edit</button></td></tr>`,
    )
    .join("");
  const records =
    `<section class="records"><h3>records (${detail.records.length})</h3>` +
    `<table><thead><tr><th>id</th><th>prov</th>` +
    targetFields.map((f) => `<th>${esc(f.metric_key ?? f.name)}</th>`).join("") +
    `<th></th></tr></thead><tbody>${recordRows}</tbody></table>` +
    `<button data-act="edit-all">edit all</button> ` +
    `<button data-act="add-record">add record</button></section>`;

  return (
    `<section class="article" data-article="${esc(detail.article_id)}">${header}` +
    `<div class="cols"><pre class="markdown">${esc(detail.markdown)}</pre>` +
    `<div class="side">${flags}${coverage}${records}${renderEditor(detail, fields, editor)}</div>` +
    `</div></section>`
  );
}

function renderEditor(detail: ArticleDetail, fields: SchemaField[], editor: EditorUi): string {
  if (editor.drafts.length === 0) {
    return `<section class="editor empty"><p>load records into the editor to relabel</p></section>`;
  }
  const rows = fieldRows(fields);
  const drafts = editor.drafts
    .map((draft, i) => {
      const baseline = editor.baselines[i] ?? {};
      const dirty = new Set(dirtyFields(draft, baseline));
      const validation = validateDraft(draft, fields);
      const grid = rows
        .map((row) => {
          const cells = [row.field, row.unit, row.uncertainty]
            .filter((f): f is SchemaField => f !== null)
            .map((f) => {
              const placeholder = f === row.unit ? "unit" : f === row.uncertainty ? "unc" : "";
              return (
                `<input data-draft="${i}" data-field="${esc(f.name)}"` +
                ` class="${dirty.has(f.name) ? "dirty" : ""}"` +
                ` placeholder="${placeholder}"` +
                ` value="${esc(draft[f.name] ?? "")}">`
              );
            })
            .join("");
          const mark = row.field.target_metric ? " *" : "";
          return `<div class="row"><label>${esc(row.field.name)}${mark}</label>${cells}</div>`;
        })
        .join("");
      return (
        `<div class="draft" data-draft="${i}" data-valid="${validation.status}">` +
        `<h4>record ${i + 1} <button data-act="remove-draft" data-index="${i}">remove</button></h4>` +
        `<div class="grid">${grid}</div>` +
        `<p class="validation">${esc(validationMessage(validation))}</p></div>`
      );
    })
    .join("");
  const allValid = editor.drafts.every(
    (d) => validateDraft(d, fields).status === "compliant",
  );
  return (
    `<section class="editor"><h3>relabel</h3>${drafts}` +
    `<button data-act="submit-records" ${allValid ? "" : "disabled"}>` +
    `submit ${editor.drafts.length} record(s), replacing the current set</button>` +
    `<p class="hint">submits against revision ${detail.revision}; the server rejects stale edits</p>` +
    `</section>`
  );
}

export interface MappingsUi {
  field: string;
  selection: string;
  conflicts: Record<string, string>;
}

export function renderMappingsView(
  body: MappingsBody,
  values: (string | null)[],
  ui: MappingsUi,
): string {
  const accepted = ui.field ? (body.accepted[ui.field] ?? {}) : {};
  const summary = ui.field ? consolidationSummary(values, accepted) : null;
  const summaryLine = summary
    ? `<div class="consolidation">${summary.uniqueBefore} unique values -&gt; ` +
      `${summary.uniqueAfter} (${summary.mapped} cells mapped)</div>`
    : "";
  const proposals = body.proposals
    .map((p) => {
      const conflict = ui.conflicts[p.proposal_id];
      const open = p.status === "proposed";
      return (
        `<li class="proposal${p.proposal_id === ui.selection ? " sel" : ""}"` +
        ` data-proposal="${esc(p.proposal_id)}" data-status="${esc(p.status)}">` +
        `<span class="alias">${esc(p.alias)}</span> &rarr; ` +
        `<span class="canonical">${esc(p.canonical)}</span> ` +
        chip(p.status, `map-${esc(p.status)}`) +
        chip(p.source, "src") +
        (p.note ? ` <span class="warn">${esc(p.note)}</span>` : "") +
        (conflict ? ` <span class="conflict">${esc(conflict)}</span>` : "") +
        (open
          ? ` <button data-act="map-accept" data-proposal="${esc(p.proposal_id)}">accept</button>` +
            ` <button data-act="map-prune" data-proposal="${esc(p.proposal_id)}">prune</button>`
          : "")
      );
    })
    .join("");
  const acceptedRows = Object.entries(accepted)
    .sort(([a], [b]) => (a < b ? -1 : a > b ? 1 : 0))
    .map(([alias, canonical]) => `<tr><td>${esc(alias)}</td><td>${esc(canonical)}</td></tr>`)
    .join("");
  return (
    `<section class="mappings" data-field="${esc(ui.field)}">` +
    `<div class="field-pick"><input data-role="map-field" value="${esc(ui.field)}"` +
    ` placeholder="field name"> <button data-act="map-go">load field</button></div>` +
    summaryLine +
    `<div class="map-actions"><button data-act="map-propose" ${ui.field ? "" : "disabled"}>` +
    `propose from observed</button> <button data-act="map-bulk-accept">accept all proposed</button></div>` +
    `<div class="manual"><input data-role="map-alias" placeholder="alias">` +
    ` <input data-role="map-canonical" placeholder="canonical">` +
    ` <input data-role="map-note" placeholder="note">` +
    ` <button data-act="map-add" ${ui.field ? "" : "disabled"}>propose mapping</button></div>` +
    `<ul class="proposals">${proposals || "<li class='empty'>no proposals</li>"}</ul>` +
    `<section class="accepted"><h3>accepted (table v${body.version})</h3>` +
    `<table><tbody>${acceptedRows}</tbody></table></section></section>`
  );
}

export function renderStatsView(stats: StatsBody): string {
  const prov = Object.entries(stats.records.by_provenance)
    .map(([k, v]) => `${esc(k)}=${v}`)
    .join(" ");
  const rows = Object.entries(stats.metrics)
    .map(
      ([key, m]) =>
        `<tr><td>${esc(key)}</td><td>${m.total}</td>` +
        `<td>${m.with_uncertainty}</td><td>${(m.uncertainty_fraction * 100).toFixed(1)}%</td></tr>`,
    )
    .join("");
  return (
    `<section class="stats"><p>${stats.articles} articles, ` +
    `${stats.records.total} records (${prov})</p>` +
    `<table><thead><tr><th>metric</th><th>total</th><th>with unc.</th><th>unc. rate</th></tr>` +
    `</thead><tbody>${rows}</tbody></table></section>`
  );
}

export function renderSettingsView(cfg: UiConfig): string {
  return (
    `<section class="settings"><div class="row"><label>API base URL</label>` +
    `<input data-role="cfg-base" value="${esc(cfg.apiBase)}"></div>` +
    `<div class="row"><label>bearer token</label>` +
    `<input data-role="cfg-token" type="password" value="${esc(cfg.token)}"></div>` +
    `<button data-act="save-config">save</button>` +
    `<p class="hint">stored in this browser only; reload applies it</p></section>`
  );
}

export function renderOfflineBanner(): string {
  return `<div class="banner offline">server unreachable; showing cached view (read-only)</div>`;
}

export function renderErrorView(message: string): string {
  return `<section class="error"><p>${esc(message)}</p></section>`;
}

export function renderShell(
  route: string,
  banner: string,
  message: string,
  content: string,
): string {
  const tabs = [
    ["#/queue", "queue"],
    ["#/articles", "articles"],
    ["#/mappings", "mappings"],
    ["#/stats", "stats"],
    ["#/settings", "settings"],
  ]
    .map(
      ([href, label]) =>
        `<a data-nav class="${route === label ? "on" : ""}" href="${href}">${label}</a>`,
    )
    .join("");
  return (
    `<nav>${tabs}</nav>${banner}` +
    (message ? `<div class="banner message">${esc(message)}</div>` : "") +
    `<main>${content}</main>`
  );
}
