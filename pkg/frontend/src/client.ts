// Thin client over the control bridge. Event subscription reads the SSE
// stream via fetch streaming so the same code runs in the browser and in
// node-based tests.

import type { CommandReply, EngineEvent, Verb } from './protocol.js';

export class ApiError extends Error {
  readonly type: string;

  constructor(type: string, message: string) {
    super(message);
    this.type = type;
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export interface CommandClient {
  command<T>(verb: Verb, args?: Record<string, unknown>): Promise<T>;
}

export class ConsoleClient implements CommandClient {
  private readonly base: string;
  private readonly fetchFn: FetchLike;

  constructor(baseUrl: string, fetchFn?: FetchLike) {
    this.base = baseUrl.replace(/\/$/, '');
    this.fetchFn = fetchFn ?? ((input, init) => fetch(input, init));
  }

  async command<T>(verb: Verb, args: Record<string, unknown> = {}): Promise<T> {
    const response = await this.fetchFn(`${this.base}/api/command`, {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify({ verb, args }),
    });
    const reply = (await response.json()) as CommandReply<T>;
    if (!reply.ok || reply.body === undefined) {
      throw new ApiError(reply.error?.type ?? 'Error',
                         reply.error?.message ?? 'command failed');
    }
    return reply.body;
  }

  // Resolves when the stream ends or the signal aborts. Events are
  // delivered in order; the bridge greets with {event: "subscribed"}.
  async subscribe(onEvent: (event: EngineEvent) => void,
                  signal?: AbortSignal): Promise<void> {
    const response = await this.fetchFn(`${this.base}/api/events`,
                                        signal ? { signal } : {});
    if (!response.body) {
      throw new ApiError('StreamError', 'event stream has no body');
    }
    const reader = response.body.getReader();
    const decoder = new TextDecoder();
    let buffer = '';
    for (;;) {
      let chunk: ReadableStreamReadResult<Uint8Array>;
      try {
        chunk = await reader.read();
      } catch (err) {
        if (signal?.aborted) return;
        throw err;
      }
      if (chunk.done) return;
      buffer += decoder.decode(chunk.value, { stream: true });
      let newline = buffer.indexOf('\n');
      while (newline >= 0) {
        const line = buffer.slice(0, newline).trim();
        buffer = buffer.slice(newline + 1);
        if (line.startsWith('data: ')) {
          onEvent(JSON.parse(line.slice(6)) as EngineEvent);
        }
        newline = buffer.indexOf('\n');
      }
    }
  }
}
