// Store/load wizard: backend login (cloud), name + password entry, then
// the workflow with a progress strip fed by engine events. Auth failures
// surface inline without distinguishing wrong password from tampering --
// the engine already collapses them, and the wizard keeps it that way.

import { ApiError } from './client.js';
import type { CommandClient } from './client.js';
import type { EngineEvent, StoreReceiptBody } from './protocol.js';
import type { NymCard } from './store.js';

export type WizardAction = 'store' | 'load' | 'snapshot';

export type WizardStep = 'details' | 'login' | 'running' | 'done' | 'error';

export interface WizardState {
  action: WizardAction;
  step: WizardStep;
  progress: string[];
  error: string | null;
  receipt: StoreReceiptBody | null;
  loadedNymId: string | null;
}

export interface WizardInput {
  backend: string;
  name: string;
  password: string;
  nymId?: string;
  cloudUser?: string;
  cloudSecret?: string;
}

export function canStore(card: NymCard): boolean {
  return card.mode === 'persistent' || card.mode === 'preconfigured';
}

export function newWizard(action: WizardAction): WizardState {
  return {
    action,
    step: 'details',
    progress: [],
    error: null,
    receipt: null,
    loadedNymId: null,
  };
}

const PROGRESS_LABELS: Record<WizardAction, string[]> = {
  store: ['pause + sync file systems', 'pack (compress + encrypt)',
          'upload via the nym’s transport', 'resume'],
  snapshot: ['pause + sync file systems', 'pack (compress + encrypt)',
             'upload via the nym’s transport', 'mark as boot image'],
  load: [],
};

// During a load the progress strip narrates the ephemeral loader's life
// from the event stream.
export function noteEvent(state: WizardState, event: EngineEvent): WizardState {
  if (state.step !== 'running' || state.action !== 'load') return state;
  const progress = [...state.progress];
  if (event.event === 'nym-state' && event.mode === 'ephemeral') {
    if (event.state === 'running') progress.push('ephemeral loader: download');
    if (event.state === 'terminated') progress.push('ephemeral loader: terminated');
  }
  if (event.event === 'nym-loaded') {
    progress.push('unpack + resume');
  }
  return { ...state, progress };
}

export class StoreLoadWizard {
  state: WizardState;
  private readonly client: CommandClient;

  constructor(client: CommandClient, action: WizardAction) {
    this.client = client;
    this.state = newWizard(action);
  }

  note(event: EngineEvent): void {
    this.state = noteEvent(this.state, event);
  }

  async run(input: WizardInput): Promise<WizardState> {
    try {
      if (input.backend === 'cloud') {
        this.state = { ...this.state, step: 'login' };
        await this.client.command('login', {
          backend: input.backend,
          username: input.cloudUser ?? 'pseudonymous',
          secret: input.cloudSecret ?? '',
        });
      }
      this.state = { ...this.state, step: 'running' };
      if (this.state.action === 'load') {
        const body = await this.client.command<{ nym_id: string }>('load', {
          name: input.name,
          password: input.password,
          backend: input.backend,
        });
        this.state = {
          ...this.state,
          step: 'done',
          loadedNymId: body.nym_id,
        };
      } else {
        const verb = this.state.action === 'snapshot' ? 'snapshot' : 'store';
        const receipt = await this.client.command<StoreReceiptBody>(verb, {
          nym_id: input.nymId,
          name: input.name,
          password: input.password,
          backend: input.backend,
        });
        this.state = {
          ...this.state,
          step: 'done',
          progress: [...PROGRESS_LABELS[this.state.action], 'receipt received'],
          receipt,
        };
      }
    } catch (err) {
      const message = err instanceof ApiError
        ? friendlyError(err)
        : String(err);
      this.state = { ...this.state, step: 'error', error: message };
    }
    return this.state;
  }
}

export function friendlyError(err: ApiError): string {
  if (err.type === 'AuthFailureError') {
    // wrong password and tampering are deliberately indistinguishable
    return 'could not open the archive: wrong name/password or damaged data';
  }
  if (err.type === 'NotAuthenticatedError') {
    return 'cloud login required';
  }
  if (err.type === 'NotFoundError') {
    return 'no stored nym under that name';
  }
  return `${err.type}: ${err.message}`;
}
