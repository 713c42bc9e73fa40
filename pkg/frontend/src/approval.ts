// Scrub-approval dialog logic. The rules mirror the engine's: a transfer
// is allowed only when every high-severity finding is covered by a
// selected transform or the user has explicitly flipped the override
// toggle. Nothing here talks to the network; the dialog submits through
// the client once `transferEnabled` says so.

import type { Finding, MediaKind, Transform } from './protocol.js';

export const ALL_TRANSFORMS: Transform[] = [
  'strip-metadata',
  'blur-regions',
  'noise-downscale',
  'rasterize-document',
];

export function transformsForKind(kind: MediaKind): Transform[] {
  if (kind === 'document') return ['strip-metadata', 'rasterize-document'];
  if (kind === 'image') {
    return ['strip-metadata', 'blur-regions', 'noise-downscale'];
  }
  return [];
}

export function paranoiaPreset(level: 0 | 1 | 2, kind: MediaKind): Transform[] {
  if (kind === 'document') {
    return level >= 2 ? ['rasterize-document'] : ['strip-metadata'];
  }
  if (level === 0) return ['strip-metadata'];
  if (level === 1) return ['strip-metadata', 'blur-regions'];
  return ['strip-metadata', 'blur-regions', 'noise-downscale'];
}

export function covers(finding: Finding, transforms: Transform[],
                       kind: MediaKind): boolean {
  if (finding.field === 'format') return false; // unrecognized format
  if (finding.field.startsWith('region:')) {
    return transforms.includes('blur-regions');
  }
  if (transforms.includes('strip-metadata')) return true;
  return kind === 'document' && transforms.includes('rasterize-document');
}

export function blockingFindings(findings: Finding[], transforms: Transform[],
                                 override: boolean, kind: MediaKind): Finding[] {
  if (override) return [];
  return findings.filter(
    (f) => f.severity === 'high' && !covers(f, transforms, kind));
}

export function transferEnabled(findings: Finding[], transforms: Transform[],
                                override: boolean, kind: MediaKind): boolean {
  return blockingFindings(findings, transforms, override, kind).length === 0;
}

export interface ApprovalDialogState {
  requestId: string;
  file: string;
  nymId: string;
  kind: MediaKind;
  findings: Finding[];
  selected: Transform[];
  override: boolean;
  paranoia: 0 | 1 | 2 | null;
}

export function openDialog(requestId: string, nymId: string, file: string,
                           kind: MediaKind,
                           findings: Finding[]): ApprovalDialogState {
  return {
    requestId,
    file,
    nymId,
    kind,
    findings,
    selected: [],
    override: false,
    paranoia: null,
  };
}

export function applyParanoia(state: ApprovalDialogState,
                              level: 0 | 1 | 2): ApprovalDialogState {
  return { ...state, paranoia: level, selected: paranoiaPreset(level, state.kind) };
}

export function toggleTransform(state: ApprovalDialogState,
                                transform: Transform): ApprovalDialogState {
  const selected = state.selected.includes(transform)
    ? state.selected.filter((t) => t !== transform)
    : [...state.selected, transform];
  return { ...state, paranoia: null, selected };
}

export function setOverride(state: ApprovalDialogState,
                            override: boolean): ApprovalDialogState {
  return { ...state, override };
}

export function canSubmit(state: ApprovalDialogState): boolean {
  return transferEnabled(state.findings, state.selected, state.override,
                         state.kind);
}
