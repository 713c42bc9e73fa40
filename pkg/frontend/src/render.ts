// Pure HTML renderers: state in, markup out. main.ts owns the DOM wiring.

import type { ApprovalDialogState } from './approval.js';
import { canSubmit, transformsForKind } from './approval.js';
import type { ExportTable } from './protocol.js';
import type { ConsoleStore, NymCard } from './store.js';

export function esc(text: unknown): string {
  return String(text)
    .replaceAll('&', '&amp;')
    .replaceAll('<', '&lt;')
    .replaceAll('>', '&gt;')
    .replaceAll('"', '&quot;');
}

export function renderCard(card: NymCard): string {
  const guard = card.guard
    ? `${esc(card.guard)} ${card.seeded ? '(seeded)' : '(random)'}`
    : '—';
  return `
  <div class="card nym" data-nym="${esc(card.nymId)}">
    <div class="row">
      <span class="id">${esc(card.nymId)}</span>
      <span class="badge mode-${esc(card.mode)}">${esc(card.mode)}</span>
      <span class="badge state-${esc(card.state)}">${esc(card.state)}</span>
      ${card.hostNym ? '<span class="badge host">installed OS</span>' : ''}
    </div>
    <div class="meta">
      <span>transport ${esc(card.transport ?? '—')}</span>
      <span>guard ${guard}</span>
      <span>${card.totalMb ? `${card.totalMb} MB` : ''}</span>
      ${card.storage ? `<span>stored as ${esc(card.storage)}</span>` : ''}
    </div>
    <div class="actions">
      <button data-action="pause" ${card.state !== 'running' ? 'disabled' : ''}>pause</button>
      <button data-action="store" ${card.mode === 'ephemeral' ? 'disabled' : ''}>store…</button>
      <button data-action="terminate" class="danger">terminate</button>
    </div>
  </div>`;
}

export function renderTopologyPanel(store: ConsoleStore): string {
  const status = store.violations === null
    ? '<span class="badge">probe not run</span>'
    : store.violations === 0
      ? `<span class="badge ok">isolated · ${store.probeAttempted} probes clean</span>`
      : `<span class="badge bad">${store.violations} VIOLATION(S)</span>`;
  const nyms = store.runningCards()
    .map((c) => `<div class="tnode ${store.violations ? 'bad' : ''}">
        [anon ${esc(c.nymId)}]──wire──[comm]──NAT─┐</div>`)
    .join('');
  return `
  <div class="card topo ${store.violations ? 'violated' : ''}">
    <h2>isolation topology ${status}</h2>
    <pre class="diagram">${nyms || '(no running nyms)'}
                 [SaniVM] · no network        Internet ◄┘</pre>
  </div>`;
}

export function renderDashboard(store: ConsoleStore): string {
  const cards = store.runningCards().map(renderCard).join('\n');
  const banner = store.connection === 'lost'
    ? '<div class="banner">connection to the engine lost — reconnecting…</div>'
    : '';
  return `${banner}
  ${renderTopologyPanel(store)}
  <div class="cards">${cards || '<p class="dim">no nyms yet — create one above.</p>'}</div>`;
}

export function renderApprovalDialog(state: ApprovalDialogState): string {
  const rows = state.findings.map((f) => `
    <li class="sev-${esc(f.severity)}">
      <b>${esc(f.field)}</b> [${esc(f.severity)}] — ${esc(f.rationale)}
    </li>`).join('');
  const boxes = transformsForKind(state.kind).map((t) => `
    <label><input type="checkbox" data-transform="${esc(t)}"
      ${state.selected.includes(t) ? 'checked' : ''}> ${esc(t)}</label>`).join('');
  const presets = [0, 1, 2].map((level) => `
    <button data-paranoia="${level}"
      class="${state.paranoia === level ? 'active' : ''}">P${level}</button>`).join('');
  return `
  <div class="card dialog" data-request="${esc(state.requestId)}">
    <h2>scrub approval — ${esc(state.file)} → ${esc(state.nymId)}</h2>
    <ul class="findings">${rows || '<li>no risks found</li>'}</ul>
    <div class="row">paranoia preset: ${presets}</div>
    <div class="row transforms">${boxes}</div>
    <label class="override">
      <input type="checkbox" data-override ${state.override ? 'checked' : ''}>
      override: transfer despite unresolved high-severity risks
      <span class="warn">(recorded in the audit log)</span>
    </label>
    <div class="actions">
      <button data-action="approve" ${canSubmit(state) ? '' : 'disabled'}>Transfer</button>
      <button data-action="cancel" class="danger">Cancel</button>
    </div>
  </div>`;
}

export function renderTable(title: string, table: ExportTable): string {
  const head = table.header.map((h) => `<th>${esc(h)}</th>`).join('');
  const body = table.rows.map((row) =>
    `<tr>${row.map((cell) => `<td>${esc(cell)}</td>`).join('')}</tr>`).join('');
  return `
  <div class="card">
    <h2>${esc(title)}</h2>
    <table><thead><tr>${head}</tr></thead><tbody>${body}</tbody></table>
    ${renderBars(table)}
  </div>`;
}

// A minimal inline-SVG bar strip over the last numeric column; the data
// is the engine's export, never recomputed here.
export function renderBars(table: ExportTable): string {
  if (table.rows.length === 0) return '';
  const values = table.rows.map((row) => Number(row[row.length - 1]));
  if (values.some((v) => Number.isNaN(v))) return '';
  const max = Math.max(...values, 1e-12);
  const width = 260;
  const bars = values.map((v, i) => {
    const w = Math.max(1, Math.round((v / max) * (width - 2)));
    return `<rect x="1" y="${i * 14 + 2}" width="${w}" height="10"></rect>`;
  }).join('');
  return `<svg class="bars" width="${width}" height="${values.length * 14 + 4}"
    role="img">${bars}</svg>`;
}
