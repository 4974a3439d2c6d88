// View controller: hash routing, data loading with an offline cache, event
// delegation, keyboard triage, and the optimistic-mutation pattern (apply
// locally, post, roll back and refresh on conflict). The server stays the
// only authority: every successful mutation is followed by a refetch.

import { ApiError, NetworkError, ReviewApi } from "./api.js";
import type { UiConfig } from "./config.js";
import { saveConfig } from "./config.js";
import type {
  ArticleDetail,
  ArticlesBody,
  MappingsBody,
  QueueBody,
  SchemaBody,
  SchemaField,
  StatsBody,
} from "./types.js";
import {
  Draft,
  collectFieldValues,
  defaultQueueFilter,
  draftFromRecord,
  emptyDraft,
  filterQueue,
  paginate,
  proposedOnly,
  validateDraft,
  validationMessage,
} from "./model.js";
import {
  renderArticleView,
  renderArticlesView,
  renderErrorView,
  renderMappingsView,
  renderOfflineBanner,
  renderQueueView,
  renderSettingsView,
  renderShell,
  renderStatsView,
} from "./render.js";

export type Route =
  | { name: "queue" }
  | { name: "articles" }
  | { name: "article"; id: string }
  | { name: "mappings"; field: string }
  | { name: "stats" }
  | { name: "settings" };

export function parseRoute(hash: string): Route {
  const clean = (hash || "").replace(/^#\/?/, "");
  const [head, ...rest] = clean.split("/");
  switch (head) {
    case "":
    case "queue":
      return { name: "queue" };
    case "articles":
      return rest.length && rest[0]
        ? { name: "article", id: decodeURIComponent(rest.join("/")) }
        : { name: "articles" };
    case "mappings":
      return { name: "mappings", field: rest.length ? decodeURIComponent(rest.join("/")) : "" };
    case "stats":
      return { name: "stats" };
    case "settings":
      return { name: "settings" };
    default:
      return { name: "queue" };
  }
}

export function routeKey(route: Route): string {
  switch (route.name) {
    case "article":
      return `article:${route.id}`;
    case "mappings":
      return `mappings:${route.field}`;
    default:
      return route.name;
  }
}

interface QueueData {
  queue: QueueBody;
}
interface ArticlesData {
  articles: ArticlesBody;
}
interface ArticleData {
  article: ArticleDetail;
  schema: SchemaBody;
}
interface MappingsData {
  mappings: MappingsBody;
  fieldValues: (string | null)[];
}
interface StatsData {
  stats: StatsBody;
}
type ViewData = QueueData | ArticlesData | ArticleData | MappingsData | StatsData | {};

export interface AppOptions {
  window?: Window & typeof globalThis;
  config?: UiConfig;
}

function fmtDetail(detail: unknown): string {
  return typeof detail === "string" ? detail : JSON.stringify(detail);
}

export class App {
  route: Route = { name: "queue" };
  data: ViewData | null = null;
  offline = false;
  error = "";

  private cache = new Map<string, ViewData>();
  private pending = new Set<Promise<unknown>>();
  private keyHandler: (e: KeyboardEvent) => void;
  private ui = {
    queue: defaultQueueFilter(),
    queueSelection: 0,
    drafts: [] as Draft[],
    baselines: [] as Draft[],
    mapField: "",
    mapSelection: "",
    conflicts: {} as Record<string, string>,
    message: "",
  };

  constructor(
    private root: HTMLElement,
    private client: ReviewApi,
    private opts: AppOptions = {},
  ) {
    root.addEventListener("click", (e) => this.onClick(e as MouseEvent));
    root.addEventListener("input", (e) => this.onInput(e));
    root.addEventListener("change", (e) => this.onChange(e));
    this.keyHandler = (e) => this.onKey(e);
    root.ownerDocument.addEventListener("keydown", this.keyHandler);
  }

  /** Detach document-level listeners; needed when an app instance is replaced. */
  dispose(): void {
    this.root.ownerDocument.removeEventListener("keydown", this.keyHandler);
  }

  /** Raw server payloads behind the current view, deep-cloned. */
  getViewState(): unknown {
    return this.data === null ? null : JSON.parse(JSON.stringify(this.data));
  }

  /** Resolves once every in-flight load or mutation has settled and rendered. */
  async whenIdle(): Promise<void> {
    while (this.pending.size) {
      await Promise.allSettled([...this.pending]);
      await new Promise((resolve) => setTimeout(resolve, 0));
    }
  }

  private track<T>(promise: Promise<T>): Promise<T> {
    this.pending.add(promise);
    // Both arms settle the bookkeeping chain; rejection stays with the caller.
    const done = () => {
      this.pending.delete(promise);
    };
    promise.then(done, done);
    return promise;
  }

  private run(action: () => Promise<void>): void {
    this.ui.message = "";
    void this.track(
      action().catch((err) => {
        this.ui.message = err instanceof Error ? err.message : String(err);
        this.render();
      }),
    );
  }

  /** Full navigation: new route, ephemeral UI reset (page-reload semantics). */
  async navigate(hash: string): Promise<void> {
    this.route = parseRoute(hash);
    this.ui.queue = defaultQueueFilter();
    this.ui.queueSelection = 0;
    this.ui.drafts = [];
    this.ui.baselines = [];
    this.ui.mapSelection = "";
    this.ui.conflicts = {};
    this.ui.message = "";
    this.ui.mapField = this.route.name === "mappings" ? this.route.field : "";
    await this.refresh();
  }

  /** Refetch the current route's data, keeping filters and drafts. */
  async refresh(): Promise<void> {
    try {
      const data = await this.track(this.load(this.route));
      this.data = data;
      this.offline = false;
      this.error = "";
      this.cache.set(routeKey(this.route), data);
    } catch (err) {
      if (err instanceof NetworkError) {
        this.offline = true;
        this.data = this.cache.get(routeKey(this.route)) ?? null;
      } else {
        this.error = err instanceof Error ? err.message : String(err);
        this.data = null;
      }
    }
    this.render();
  }

  private async load(route: Route): Promise<ViewData> {
    switch (route.name) {
      case "queue":
        return { queue: await this.client.getQueue() };
      case "articles":
        return { articles: await this.client.getArticles() };
      case "article":
        return {
          article: await this.client.getArticle(route.id),
          schema: await this.client.getSchema(),
        };
      case "mappings": {
        const field = this.ui.mapField;
        const mappings = await this.client.getMappings(field || undefined);
        let fieldValues: (string | null)[] = [];
        if (field) {
          const list = await this.client.getArticles();
          const details: ArticleDetail[] = [];
          for (const a of list.articles) {
            details.push(await this.client.getArticle(a.article_id));
          }
          fieldValues = collectFieldValues(details, field);
        }
        return { mappings, fieldValues };
      }
      case "stats":
        return { stats: await this.client.getStats() };
      case "settings":
        return {};
    }
  }

  render(): void {
    const banner = this.offline ? renderOfflineBanner() : "";
    let content: string;
    if (this.error) {
      content = renderErrorView(this.error);
    } else if (this.data === null) {
      content = this.offline
        ? renderErrorView("no cached data for this view")
        : `<p class="loading">loading</p>`;
    } else {
      content = this.routeContent();
    }
    const tab = this.route.name === "article" ? "articles" : this.route.name;
    this.root.innerHTML = renderShell(tab, banner, this.ui.message, content);
    if (this.offline) {
      // read-only while the server is unreachable
      this.root
        .querySelectorAll("button")
        .forEach((b) => ((b as HTMLButtonElement).disabled = true));
    }
  }

  private routeContent(): string {
    switch (this.route.name) {
      case "queue":
        return renderQueueView((this.data as QueueData).queue, {
          filter: this.ui.queue,
          selection: this.ui.queueSelection,
        });
      case "articles":
        return renderArticlesView((this.data as ArticlesData).articles);
      case "article": {
        const d = this.data as ArticleData;
        return renderArticleView(d.article, d.schema.fields, {
          drafts: this.ui.drafts,
          baselines: this.ui.baselines,
        });
      }
      case "mappings": {
        const d = this.data as MappingsData;
        return renderMappingsView(d.mappings, d.fieldValues, {
          field: this.ui.mapField,
          selection: this.ui.mapSelection,
          conflicts: this.ui.conflicts,
        });
      }
      case "stats":
        return renderStatsView((this.data as StatsData).stats);
      case "settings":
        return renderSettingsView(this.opts.config ?? { apiBase: "", token: "" });
    }
  }

  // -- events -----------------------------------------------------------------

  private go(hash: string): void {
    if (this.opts.window) {
      this.opts.window.location.hash = hash;
    } else {
      void this.navigate(hash);
    }
  }

  private onClick(e: MouseEvent): void {
    const target = e.target as HTMLElement;
    const nav = target.closest("a[data-nav]") as HTMLAnchorElement | null;
    if (nav) {
      if (!this.opts.window) {
        // without a window there is no hashchange loop, navigate directly
        e.preventDefault();
        void this.navigate(nav.getAttribute("href") ?? "#/queue");
      }
      return;
    }
    const el = target.closest("[data-act]") as HTMLElement | null;
    if (!el || (el as HTMLButtonElement).disabled) return;
    this.dispatch(el.dataset.act ?? "", el);
  }

  private dispatch(act: string, el: HTMLElement): void {
    switch (act) {
      case "resolve":
        this.resolveFlagAction(el.dataset.flag ?? "", el.dataset.resolution ?? "");
        break;
      case "stage-filter":
        this.ui.queue.stage = el.dataset.stage ?? "";
        this.ui.queue.page = 0;
        this.ui.queueSelection = 0;
        this.render();
        break;
      case "page-prev":
      case "page-next":
        this.ui.queue.page += act === "page-next" ? 1 : -1;
        this.ui.queueSelection = 0;
        this.render();
        break;
      case "edit-all":
        this.loadDraftsFromRecords();
        this.render();
        break;
      case "add-record":
        if (this.ui.drafts.length === 0) this.loadDraftsFromRecords();
        this.ui.drafts.push(emptyDraft(this.schemaFields()));
        this.ui.baselines.push({});
        this.render();
        break;
      case "remove-draft": {
        const i = Number(el.dataset.index);
        this.ui.drafts.splice(i, 1);
        this.ui.baselines.splice(i, 1);
        this.render();
        break;
      }
      case "submit-records":
        this.submitRecords();
        break;
      case "map-go": {
        const input = this.root.querySelector('[data-role="map-field"]') as HTMLInputElement | null;
        this.go(`#/mappings/${encodeURIComponent(input?.value.trim() ?? "")}`);
        break;
      }
      case "map-propose":
        this.run(async () => {
          await this.client.proposeForField(this.ui.mapField);
          await this.refresh();
        });
        break;
      case "map-accept":
        this.decideAction(el.dataset.proposal ?? "", true);
        break;
      case "map-prune":
        this.decideAction(el.dataset.proposal ?? "", false);
        break;
      case "map-bulk-accept":
        this.bulkAcceptAction();
        break;
      case "map-add": {
        const read = (role: string) =>
          (this.root.querySelector(`[data-role="${role}"]`) as HTMLInputElement | null)?.value ??
          "";
        const alias = read("map-alias");
        const canonical = read("map-canonical");
        const note = read("map-note");
        this.run(async () => {
          await this.client.addProposal(this.ui.mapField, alias, canonical, note);
          await this.refresh();
        });
        break;
      }
      case "save-config": {
        const read = (role: string) =>
          (this.root.querySelector(`[data-role="${role}"]`) as HTMLInputElement | null)?.value ??
          "";
        const win = this.opts.window;
        if (win) {
          saveConfig(win.localStorage, { apiBase: read("cfg-base"), token: read("cfg-token") });
          this.ui.message = "saved; reload to apply";
          this.render();
        }
        break;
      }
      default:
        break;
    }
  }

  private onInput(e: Event): void {
    const input = e.target as HTMLInputElement;
    if (input.dataset.field === undefined || input.dataset.draft === undefined) return;
    const i = Number(input.dataset.draft);
    const draft = this.ui.drafts[i];
    if (!draft) return;
    draft[input.dataset.field] = input.value;
    const baseline = this.ui.baselines[i] ?? {};
    // surgical update instead of a re-render so typing keeps focus
    input.classList.toggle("dirty", input.value !== (baseline[input.dataset.field] ?? ""));
    this.updateEditorValidity();
  }

  private onChange(e: Event): void {
    const input = e.target as HTMLInputElement;
    if (input.dataset.role === "min-wev") {
      this.ui.queue.minWev = input.value.trim() === "" ? null : Number(input.value);
      this.ui.queue.page = 0;
      this.ui.queueSelection = 0;
      this.render();
    }
  }

  private onKey(e: KeyboardEvent): void {
    const target = e.target as HTMLElement | null;
    if (target && ["INPUT", "TEXTAREA", "SELECT"].includes(target.tagName)) return;
    if (this.offline) return;
    if (this.route.name === "queue") this.queueKey(e.key);
    else if (this.route.name === "mappings") this.mappingsKey(e.key);
  }

  private visibleQueueItems() {
    const items = (this.data as QueueData | null)?.queue?.items ?? [];
    const filtered = filterQueue(items, this.ui.queue);
    return paginate(filtered, this.ui.queue.page, this.ui.queue.pageSize).slice;
  }

  private queueKey(key: string): void {
    const visible = this.visibleQueueItems();
    if (!visible.length) return;
    if (key === "j" || key === "k") {
      const delta = key === "j" ? 1 : -1;
      this.ui.queueSelection = Math.min(
        Math.max(this.ui.queueSelection + delta, 0),
        visible.length - 1,
      );
      this.render();
    } else if (key === "Enter") {
      const item = visible[Math.min(this.ui.queueSelection, visible.length - 1)];
      this.go(`#/articles/${item.article_id}`);
    }
  }

  private mappingsKey(key: string): void {
    const proposals = (this.data as MappingsData | null)?.mappings?.proposals ?? [];
    if (key === "A") {
      this.bulkAcceptAction();
      return;
    }
    if (!proposals.length) return;
    const index = Math.max(
      proposals.findIndex((p) => p.proposal_id === this.ui.mapSelection),
      0,
    );
    if (key === "j" || key === "k" || key === "s") {
      const delta = key === "k" ? -1 : 1; // s = skip = advance
      const next = Math.min(Math.max(index + delta, 0), proposals.length - 1);
      this.ui.mapSelection = proposals[next].proposal_id;
      this.render();
    } else if (key === "a" || key === "p") {
      const selected = proposals[index];
      if (selected.status === "proposed") {
        this.decideAction(selected.proposal_id, key === "a");
      }
    }
  }

  // -- mutations ----------------------------------------------------------------

  private rollback(snapshot: unknown): void {
    this.data = snapshot as ViewData | null;
    if (this.data !== null) this.cache.set(routeKey(this.route), this.data);
  }

  private resolveFlagAction(flagId: string, resolution: string): void {
    this.run(async () => {
      const snapshot = this.getViewState();
      this.applyOptimisticResolve(flagId, resolution);
      this.render();
      try {
        await this.client.resolveFlag(flagId, resolution);
      } catch (err) {
        this.rollback(snapshot);
        if (err instanceof NetworkError) {
          this.offline = true;
          this.render();
          return;
        }
        if (err instanceof ApiError && err.status === 409) {
          this.ui.message = `conflict: ${fmtDetail(err.detail)}; view refreshed`;
          await this.refresh();
          return;
        }
        throw err;
      }
      await this.refresh();
    });
  }

  private applyOptimisticResolve(flagId: string, resolution: string): void {
    if (this.route.name === "queue" && this.data) {
      const body = (this.data as QueueData).queue;
      body.items = body.items.filter((it) => it.flag_id !== flagId);
    } else if (this.route.name === "article" && this.data) {
      const flag = (this.data as ArticleData).article.flags.find((f) => f.flag_id === flagId);
      if (flag) flag.resolution = resolution;
    }
  }

  private decideAction(proposalId: string, accept: boolean): void {
    if (!proposalId) return;
    this.run(async () => {
      const snapshot = this.getViewState();
      const proposal = (this.data as MappingsData | null)?.mappings?.proposals.find(
        (p) => p.proposal_id === proposalId,
      );
      if (proposal) proposal.status = accept ? "accepted" : "pruned";
      delete this.ui.conflicts[proposalId];
      this.render();
      try {
        await this.client.decideProposal(proposalId, accept);
      } catch (err) {
        this.rollback(snapshot);
        if (err instanceof NetworkError) {
          this.offline = true;
          this.render();
          return;
        }
        if (err instanceof ApiError && err.status === 409) {
          // alias conflict: explain inline next to the proposal
          this.ui.conflicts[proposalId] = fmtDetail(err.detail);
          await this.refresh();
          return;
        }
        throw err;
      }
      await this.refresh();
    });
  }

  private bulkAcceptAction(): void {
    this.run(async () => {
      const proposals = proposedOnly(
        (this.data as MappingsData | null)?.mappings?.proposals ?? [],
      );
      for (const p of proposals) {
        try {
          await this.client.decideProposal(p.proposal_id, true);
        } catch (err) {
          if (err instanceof ApiError && err.status === 409) {
            this.ui.conflicts[p.proposal_id] = fmtDetail(err.detail);
            continue;
          }
          throw err;
        }
      }
      await this.refresh();
    });
  }

  private schemaFields(): SchemaField[] {
    return (this.data as ArticleData | null)?.schema?.fields ?? [];
  }

  private loadDraftsFromRecords(): void {
    const d = this.data as ArticleData | null;
    if (!d) return;
    const fields = d.schema.fields;
    this.ui.drafts = d.article.records.map((r) => draftFromRecord(fields, r));
    this.ui.baselines = d.article.records.map((r) => draftFromRecord(fields, r));
  }

  private updateEditorValidity(): void {
    const fields = this.schemaFields();
    let allValid = this.ui.drafts.length > 0;
    this.root.querySelectorAll(".draft").forEach((el) => {
      const i = Number((el as HTMLElement).dataset.draft);
      const outcome = validateDraft(this.ui.drafts[i] ?? {}, fields);
      (el as HTMLElement).dataset.valid = outcome.status;
      const p = el.querySelector(".validation");
      if (p) p.textContent = validationMessage(outcome);
      if (outcome.status !== "compliant") allValid = false;
    });
    const btn = this.root.querySelector('[data-act="submit-records"]') as HTMLButtonElement | null;
    if (btn) btn.disabled = !allValid;
  }

  private submitRecords(): void {
    this.run(async () => {
      const d = this.data as ArticleData | null;
      if (!d) return;
      const fields = d.schema.fields;
      if (
        this.ui.drafts.length === 0 ||
        this.ui.drafts.some((draft) => validateDraft(draft, fields).status !== "compliant")
      ) {
        this.ui.message = "fix validation errors before submitting";
        this.render();
        return;
      }
      try {
        await this.client.postRecords(d.article.article_id, this.ui.drafts, d.article.revision);
      } catch (err) {
        if (err instanceof NetworkError) {
          this.offline = true;
          this.render();
          return;
        }
        if (err instanceof ApiError && err.status === 409) {
          // stale revision: keep the drafts, refresh to the server's revision
          this.ui.message = `conflict: ${fmtDetail(err.detail)}; view refreshed`;
          await this.refresh();
          return;
        }
        if (err instanceof ApiError && err.status === 422) {
          this.ui.message = `rejected: ${fmtDetail(err.detail)}`;
          this.render();
          return;
        }
        throw err;
      }
      this.ui.drafts = [];
      this.ui.baselines = [];
      await this.refresh();
    });
  }
}
