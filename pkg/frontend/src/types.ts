// Payload shapes of the /v1 review API, mirrored field for field. The UI
// never reshapes server data before storing it, so these are the only
// contracts the app state depends on.

export interface FieldValuePayload {
  validity: string;
  raw?: string;
  numeric?: number;
  uncertainty?: number;
  uncertainty_kind?: string;
  unit?: string;
}

export interface RecordPayload {
  record_id: string;
  article_id: string;
  provenance: string;
  values: Record<string, FieldValuePayload>;
  nonstandard_method_flags: string[];
}

export interface QueueItem {
  flag_id: string;
  article_id: string;
  stage: string;
  title: string;
  wev: number | null;
  excerpt_offsets: number[];
  suggested_actions: string[];
  detail: Record<string, unknown>;
}

export interface QueueBody {
  items: QueueItem[];
}

export interface ArticleSummary {
  article_id: string;
  title: string;
  label_status: string;
  revision: number;
  records: number;
  open_flags: number;
}

export interface ArticlesBody {
  articles: ArticleSummary[];
}

export interface ArticleMetadataPayload {
  title: string;
  authors: string[];
  venue: string;
  year: number | null;
  doi: string;
  source_link: string;
}

export interface FlagPayload {
  flag_id: string;
  stage: string;
  article_id: string;
  detail: Record<string, unknown>;
  resolution: string;
  created_at: string;
}

export interface ArticleDetail {
  article_id: string;
  title: string;
  metadata: ArticleMetadataPayload;
  label_status: string;
  revision: number;
  markdown: string;
  records: RecordPayload[];
  flags: FlagPayload[];
  coverage: Record<string, unknown> | null;
  expected_counts: Record<string, unknown> | null;
}

export interface SchemaField {
  name: string;
  kind: string;
  unit_family: string | null;
  target_metric: boolean;
  metric_key: string | null;
  subprocess_group: string | null;
  gate: boolean;
  unit_field: string | null;
  uncertainty_field: string | null;
  description: string;
}

export interface SchemaBody {
  version: string;
  fields: SchemaField[];
}

export interface MappingProposalPayload {
  proposal_id: string;
  field: string;
  alias: string;
  canonical: string;
  source: string;
  status: string;
  note: string;
}

export interface MappingsBody {
  version: number;
  accepted: Record<string, Record<string, string>>;
  proposals: MappingProposalPayload[];
}

export interface ResolveBody {
  flag: FlagPayload;
  side_effects: {
    deactivated_records?: number;
    article_excluded?: boolean;
  };
}

export interface SupersedeBody {
  revision: number;
  summary: Record<string, unknown>;
  open_flags: FlagPayload[];
}

export interface MetricStats {
  field: string;
  total: number;
  by_provenance: Record<string, number>;
  with_uncertainty: number;
  uncertainty_fraction: number;
}

export interface StatsBody {
  articles: number;
  records: { total: number; by_provenance: Record<string, number> };
  metrics: Record<string, MetricStats>;
}

export interface ProposeBody {
  proposed: number;
  new: number;
  proposals: MappingProposalPayload[];
}

export interface DecisionBody {
  proposal: MappingProposalPayload;
  mapping_version: number;
}
