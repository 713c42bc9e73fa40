// Types for the nymkit control protocol as exposed by the HTTP bridge:
// POST /api/command {verb, args} -> {ok, body} | {ok: false, error}
// GET  /api/events  -> server-sent events, one JSON object per `data:` line.

export type Verb =
  | 'create'
  | 'load'
  | 'store'
  | 'snapshot'
  | 'terminate'
  | 'pause'
  | 'resume'
  | 'list'
  | 'session-end'
  | 'scrub'
  | 'transfer'
  | 'request-transfer'
  | 'approve'
  | 'pending'
  | 'probe'
  | 'report'
  | 'host-boot'
  | 'mount'
  | 'sources'
  | 'login'
  | 'dump';

export interface CommandError {
  type: string;
  message: string;
}

export interface CommandReply<T = unknown> {
  ok: boolean;
  body?: T;
  error?: CommandError;
}

export type Severity = 'high' | 'medium' | 'low';

export interface Finding {
  field: string;
  severity: Severity;
  rationale: string;
}

export type MediaKind = 'image' | 'document' | 'unknown';

export type Transform =
  | 'strip-metadata'
  | 'blur-regions'
  | 'noise-downscale'
  | 'rasterize-document';

export interface NymSummary {
  nym_id: string;
  mode: 'ephemeral' | 'persistent' | 'preconfigured';
  state: 'created' | 'running' | 'paused' | 'storing' | 'terminated';
  transport: string | null;
  guard: string | null;
  seeded: boolean;
  host_nym: boolean;
  storage: string | null;
  total_mb: number;
}

export interface EngineEvent {
  event: string;
  clock?: number;
  nym_id?: string;
  state?: string;
  mode?: string;
  object?: string;
  version?: number;
  request_id?: string;
  file?: string;
  findings?: Finding[];
  attempted?: number;
  delivered?: number;
  violations?: number;
  reason?: string;
  dest?: string;
  [key: string]: unknown;
}

export interface StoreReceiptBody {
  object: string;
  version: number;
  digest: string;
  bytes?: number;
  boot_image?: boolean;
}

export interface ExportTable {
  header: string[];
  rows: (string | number)[][];
}

export interface ReportBody {
  ram_per_nym: ExportTable;
  bandwidth: ExportTable;
  phases: ExportTable;
  size_series: Record<string, ExportTable & { mode: string }>;
}

export interface ProbeBody {
  attempted: number;
  delivered: number;
  violations: [string, string, string][];
}

export interface PendingApprovalBody {
  request_id: string;
  nym_id: string;
  file: string;
  findings: Finding[];
}
