// Console entry point: wires the event stream into the store, renders on
// confirmed state changes only, and drives the wizard/approval dialogs.

import {
  ApprovalDialogState,
  applyParanoia,
  openDialog,
  setOverride,
  toggleTransform,
} from './approval.js';
import { ApiError, ConsoleClient } from './client.js';
import type {
  MediaKind,
  NymSummary,
  PendingApprovalBody,
  ProbeBody,
  ReportBody,
  Transform,
} from './protocol.js';
import { renderApprovalDialog, renderDashboard, renderTable } from './render.js';
import { ConsoleStore } from './store.js';
import { StoreLoadWizard, WizardAction, canStore } from './wizard.js';

const client = new ConsoleClient(window.location.origin);
const store = new ConsoleStore();
let dialog: ApprovalDialogState | null = null;
let wizard: StoreLoadWizard | null = null;

const $ = (id: string) => document.getElementById(id) as HTMLElement;

function redraw(): void {
  $('dashboard').innerHTML = renderDashboard(store);
  $('approvals').innerHTML = dialog ? renderApprovalDialog(dialog) : '';
  $('wizard-state').textContent = wizard
    ? `${wizard.state.action}: ${wizard.state.step}`
      + (wizard.state.error ? ` — ${wizard.state.error}` : '')
      + (wizard.state.progress.length
         ? ` — ${wizard.state.progress.join(' → ')}` : '')
    : '';
}

async function refreshList(): Promise<void> {
  const body = await client.command<{ nyms: NymSummary[] }>('list');
  store.applyList(body.nyms);
}

async function refreshPending(): Promise<void> {
  const body = await client.command<{ pending: PendingApprovalBody[] }>('pending');
  for (const item of body.pending) {
    if (!dialog || dialog.requestId !== item.request_id) {
      const kind: MediaKind = item.file.endsWith('.nymdoc') ? 'document'
        : item.file.endsWith('.nymbmp') ? 'image' : 'unknown';
      dialog = openDialog(item.request_id, item.nym_id, item.file, kind,
                          item.findings);
    }
  }
  redraw();
}

async function eventLoop(): Promise<void> {
  for (;;) {
    try {
      await client.subscribe(async (event) => {
        store.applyEvent(event);
        wizard?.note(event);
        if (event.event === 'nym-state') void refreshList();
        if (event.event === 'approval-request') void refreshPending();
        if (event.event === 'approval-cancelled'
            && dialog?.requestId === event.request_id) {
          dialog = null; // server-side timeout or cancellation
        }
        redraw();
      });
    } catch {
      /* stream broken; fall through to retry */
    }
    store.setConnection('lost');
    redraw();
    await new Promise((resolve) => setTimeout(resolve, 1500));
  }
}

function formValue(id: string): string {
  return ($(id) as HTMLInputElement).value.trim();
}

async function onCreate(): Promise<void> {
  await client.command('create', {
    mode: formValue('create-mode') || 'ephemeral',
    transport: formValue('create-transport') || null,
  });
}

async function onWizard(action: WizardAction, nymId?: string): Promise<void> {
  wizard = new StoreLoadWizard(client, action);
  redraw();
  const password = formValue('wizard-password');
  await wizard.run({
    backend: formValue('wizard-backend') || 'local',
    name: formValue('wizard-name'),
    password,
    nymId,
    cloudUser: formValue('wizard-user') || 'pseudonymous',
    cloudSecret: formValue('wizard-secret'),
  });
  ($('wizard-password') as HTMLInputElement).value = ''; // no secrets at rest
  redraw();
}

async function onProbe(): Promise<void> {
  await client.command<ProbeBody>('probe');
}

async function onReport(): Promise<void> {
  const body = await client.command<ReportBody>('report');
  const panels = [
    renderTable('RAM and shared pages per nym count', body.ram_per_nym),
    renderTable('parallel download times', body.bandwidth),
    renderTable('startup phases (mean, simulated s)', body.phases),
    ...Object.entries(body.size_series).map(([name, table]) =>
      renderTable(`archive size series — ${name} (${table.mode})`, table)),
  ];
  $('metrics').innerHTML = panels.join('\n');
}

function onDialogClick(target: HTMLElement): void {
  if (!dialog) return;
  const transform = target.getAttribute('data-transform') as Transform | null;
  if (transform) dialog = toggleTransform(dialog, transform);
  if (target.hasAttribute('data-override')) {
    dialog = setOverride(dialog, (target as HTMLInputElement).checked);
  }
  const paranoia = target.getAttribute('data-paranoia');
  if (paranoia !== null) {
    dialog = applyParanoia(dialog, Number(paranoia) as 0 | 1 | 2);
  }
  const action = target.getAttribute('data-action');
  if (action === 'approve') {
    void client.command('approve', {
      request_id: dialog.requestId,
      kind: dialog.kind,
      plan: dialog.selected,
      override: dialog.override,
    });
    dialog = null;
  } else if (action === 'cancel') {
    void client.command('approve', {
      request_id: dialog.requestId,
      cancel: true,
    });
    dialog = null;
  }
  redraw();
}

function wire(): void {
  store.onChange(redraw);
  $('btn-create').addEventListener('click', () => void onCreate());
  $('btn-probe').addEventListener('click', () => void onProbe());
  $('btn-report').addEventListener('click', () => void onReport());
  $('btn-load').addEventListener('click', () => void onWizard('load'));
  $('dashboard').addEventListener('click', (ev) => {
    const target = ev.target as HTMLElement;
    const action = target.getAttribute('data-action');
    const card = target.closest('[data-nym]');
    if (!action || !card) return;
    const nymId = card.getAttribute('data-nym')!;
    if (action === 'terminate') void client.command('terminate', { nym_id: nymId });
    if (action === 'pause') void client.command('pause', { nym_id: nymId });
    if (action === 'store') {
      const summary = store.cards.get(nymId);
      if (summary && canStore(summary)) void onWizard('store', nymId);
    }
  });
  $('approvals').addEventListener('click', (ev) =>
    onDialogClick(ev.target as HTMLElement));
  $('approvals').addEventListener('change', (ev) =>
    onDialogClick(ev.target as HTMLElement));
  void refreshList();
  void refreshPending();
  void eventLoop();
}

wire();
