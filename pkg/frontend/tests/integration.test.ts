// End-to-end parity: a scripted console session against the real HTTP
// bridge must leave the engine in exactly the state that the equivalent
// CLI sequence leaves a twin engine in. Requires the python package to be
// installed (pip install -e ..) with `nym` on PATH.

import { ChildProcess, execFile, spawn } from 'node:child_process';
import { mkdtempSync, writeFileSync } from 'node:fs';
import * as net from 'node:net';
import { tmpdir } from 'node:os';
import * as path from 'node:path';
import { promisify } from 'node:util';
import { afterAll, beforeAll, describe, expect, it } from 'vitest';

import { canSubmit, openDialog, toggleTransform } from '../src/approval.js';
import { ConsoleClient } from '../src/client.js';
import type { PendingApprovalBody } from '../src/protocol.js';
import { StoreLoadWizard } from '../src/wizard.js';

const execFileAsync = promisify(execFile);

const PASSWORD = 'parity-password';
const CLOUD_SECRET = 'cloud-secret';

let workdir: string;
let bridgeProc: ChildProcess;
let serveProc: ChildProcess;
let bridgeUrl = '';
let sockPath = '';

function waitForLine(proc: ChildProcess, pattern: RegExp,
                     timeoutMs = 15000): Promise<RegExpMatchArray> {
  return new Promise((resolve, reject) => {
    const timer = setTimeout(
      () => reject(new Error(`timed out waiting for ${pattern}`)), timeoutMs);
    let buffer = '';
    proc.stdout!.on('data', (chunk: Buffer) => {
      buffer += chunk.toString();
      const match = buffer.match(pattern);
      if (match) {
        clearTimeout(timer);
        resolve(match);
      }
    });
    proc.on('exit', (code) => {
      clearTimeout(timer);
      reject(new Error(`process exited early (${code}): ${buffer}`));
    });
  });
}

function socketCommand(sock: string, verb: string,
                       args: Record<string, unknown> = {}): Promise<any> {
  return new Promise((resolve, reject) => {
    const conn = net.createConnection(sock);
    let buffer = '';
    conn.on('connect', () => {
      conn.write(JSON.stringify({ id: 1, verb, args }) + '\n');
    });
    conn.on('data', (chunk) => {
      buffer += chunk.toString();
      if (buffer.includes('\n')) {
        conn.end();
        const reply = JSON.parse(buffer.split('\n')[0]);
        if (!reply.ok) reject(new Error(JSON.stringify(reply.error)));
        else resolve(reply.body);
      }
    });
    conn.on('error', reject);
  });
}

function cli(args: string[]): Promise<{ stdout: string }> {
  return execFileAsync('nym', args, {
    env: {
      ...process.env,
      NYMKIT_SOCK: sockPath,
      NYMKIT_PASSWORD: PASSWORD,
      NYMKIT_CLOUD_SECRET: CLOUD_SECRET,
    },
  });
}

beforeAll(async () => {
  workdir = mkdtempSync(path.join(tmpdir(), 'nymkit-parity-'));
  const sources = path.join(workdir, 'sources');
  // deterministic source photo with high-severity tags
  await execFileAsync('python3', ['-c', `
import os
import numpy as np
from nymkit import sanivm
os.makedirs(${JSON.stringify(sources)}, exist_ok=True)
px = np.random.default_rng(0).integers(0, 256, size=(12, 18, 3), dtype=np.uint8)
data = sanivm.encode_image(18, 12, px,
    {"gps.lat": "41.3", "serial": "SN-1"}, [(2, 2, 4, 4)])
open(os.path.join(${JSON.stringify(sources)}, "photo.nymbmp"), "wb").write(data)
`]);

  bridgeProc = spawn('python3', ['-m', 'nymkit.ctl', 'serve-http',
                                 '--port', '0',
                                 '--local-store', path.join(workdir, 'a-store'),
                                 '--sources', sources]);
  const match = await waitForLine(bridgeProc, /http:\/\/127\.0\.0\.1:(\d+)/);
  bridgeUrl = `http://127.0.0.1:${match[1]}`;

  sockPath = path.join(workdir, 'b.sock');
  serveProc = spawn('python3', ['-m', 'nymkit.ctl', 'serve',
                                '--sock', sockPath,
                                '--local-store', path.join(workdir, 'b-store'),
                                '--sources', sources]);
  await waitForLine(serveProc, /listening on/);
}, 30000);

afterAll(() => {
  bridgeProc?.kill();
  serveProc?.kill();
});

describe('console/CLI parity', () => {
  it('scripted UI session matches the equivalent CLI sequence', async () => {
    const client = new ConsoleClient(bridgeUrl);

    // --- UI session: create -> store (cloud, with login) -> terminate ->
    //     load -> scrub-approve transfer
    const created = await client.command<{ nym_id: string }>('create', {
      mode: 'persistent', transport: 'onion',
    });
    expect(created.nym_id).toBe('nym-0001');

    const storeWizard = new StoreLoadWizard(client, 'store');
    const stored = await storeWizard.run({
      backend: 'cloud', name: 'parity', password: PASSWORD,
      nymId: created.nym_id, cloudUser: 'acct', cloudSecret: CLOUD_SECRET,
    });
    expect(stored.step).toBe('done');
    await client.command('terminate', { nym_id: created.nym_id });

    const loadWizard = new StoreLoadWizard(client, 'load');
    const loaded = await loadWizard.run({
      backend: 'cloud', name: 'parity', password: PASSWORD,
      cloudUser: 'acct', cloudSecret: CLOUD_SECRET,
    });
    expect(loaded.step).toBe('done');
    const loadedId = loaded.loadedNymId!;

    // approval-gated transfer: launch, pick transforms in the dialog,
    // verify the Transfer control is disabled until the High findings
    // are covered, then approve
    const transferPromise = client.command<{ dest: string }>(
      'request-transfer',
      { nym_id: loadedId, path: '/photo.nymbmp', timeout: 20.0 });
    let pending: PendingApprovalBody[] = [];
    for (let i = 0; i < 100 && pending.length === 0; i++) {
      await new Promise((r) => setTimeout(r, 100));
      pending = (await client.command<{ pending: PendingApprovalBody[] }>(
        'pending')).pending;
    }
    expect(pending).toHaveLength(1);
    let dialog = openDialog(pending[0].request_id, loadedId,
                            pending[0].file, 'image', pending[0].findings);
    expect(canSubmit(dialog)).toBe(false); // High findings uncovered
    dialog = toggleTransform(dialog, 'strip-metadata');
    expect(canSubmit(dialog)).toBe(true);
    await client.command('approve', {
      request_id: dialog.requestId, kind: dialog.kind,
      plan: dialog.selected, override: dialog.override,
    });
    const transferred = await transferPromise;
    expect(transferred.dest).toBe('/inbound/photo.nymbmp');

    // --- CLI twin: the same sequence through the `nym` binary
    await cli(['login', 'acct', '--backend', 'cloud']);
    const cliCreate = JSON.parse(
      (await cli(['create', '--mode', 'persistent', '--transport', 'onion']))
        .stdout);
    expect(cliCreate.nym_id).toBe('nym-0001');
    await cli(['store', 'nym-0001', 'parity', '--backend', 'cloud']);
    await cli(['terminate', 'nym-0001']);
    const cliLoad = JSON.parse(
      (await cli(['load', 'parity', '--backend', 'cloud'])).stdout);
    await cli(['transfer', cliLoad.nym_id, '/photo.nymbmp',
               '--plan', 'strip-metadata']);

    // --- identical engine states
    const uiDump = await client.command('dump');
    const cliDump = await socketCommand(sockPath, 'dump');
    expect(uiDump).toEqual(cliDump);
  }, 60000);
});
