// Console state: nym cards, probe status and the approval queue, driven
// exclusively by confirmed engine events and `list` results. No
// optimistic updates: a card changes only when the engine said so.

import type { EngineEvent, Finding, NymSummary } from './protocol.js';

export interface NymCard {
  nymId: string;
  mode: string;
  state: string;
  transport: string | null;
  guard: string | null;
  seeded: boolean;
  hostNym: boolean;
  storage: string | null;
  totalMb: number;
}

export interface PendingApproval {
  requestId: string;
  nymId: string;
  file: string;
  findings: Finding[];
}

export type Connection = 'connecting' | 'connected' | 'lost';

export class ConsoleStore {
  readonly cards = new Map<string, NymCard>();
  pending: PendingApproval[] = [];
  violations: number | null = null;
  probeAttempted = 0;
  connection: Connection = 'connecting';
  lastStored: { object: string; version: number } | null = null;
  private listeners: (() => void)[] = [];

  onChange(listener: () => void): void {
    this.listeners.push(listener);
  }

  private notify(): void {
    for (const listener of this.listeners) listener();
  }

  setConnection(state: Connection): void {
    this.connection = state;
    this.notify();
  }

  applyList(rows: NymSummary[]): void {
    this.cards.clear();
    for (const row of rows) {
      if (row.state === 'terminated') continue;
      this.cards.set(row.nym_id, {
        nymId: row.nym_id,
        mode: row.mode,
        state: row.state,
        transport: row.transport,
        guard: row.guard,
        seeded: row.seeded,
        hostNym: row.host_nym,
        storage: row.storage,
        totalMb: row.total_mb,
      });
    }
    this.notify();
  }

  applyEvent(event: EngineEvent): void {
    switch (event.event) {
      case 'subscribed':
        this.connection = 'connected';
        break;
      case 'nym-state': {
        const id = event.nym_id as string;
        if (event.state === 'terminated') {
          this.cards.delete(id);
          break;
        }
        const card = this.cards.get(id);
        if (card) {
          card.state = event.state as string;
        } else {
          this.cards.set(id, {
            nymId: id,
            mode: (event.mode as string) ?? 'ephemeral',
            state: event.state as string,
            transport: null,
            guard: null,
            seeded: false,
            hostNym: false,
            storage: null,
            totalMb: 0,
          });
        }
        break;
      }
      case 'nym-stored':
        this.lastStored = {
          object: event.object as string,
          version: event.version as number,
        };
        break;
      case 'approval-request':
        this.pending.push({
          requestId: event.request_id as string,
          nymId: event.nym_id as string,
          file: event.file as string,
          findings: (event.findings ?? []) as Finding[],
        });
        break;
      case 'approval-cancelled':
      case 'transfer-complete': {
        const requestId = event.request_id as string | undefined;
        const file = event.file as string | undefined;
        this.pending = this.pending.filter(
          (p) => p.requestId !== requestId && (file ? p.file !== file : true));
        break;
      }
      case 'probe-result':
        this.violations = event.violations as number;
        this.probeAttempted = event.attempted as number;
        break;
      default:
        break;
    }
    this.notify();
  }

  runningCards(): NymCard[] {
    return [...this.cards.values()].sort((a, b) =>
      a.nymId.localeCompare(b.nymId));
  }
}
