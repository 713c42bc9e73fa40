import { describe, expect, it } from 'vitest';

import {
  applyParanoia,
  blockingFindings,
  canSubmit,
  covers,
  openDialog,
  paranoiaPreset,
  setOverride,
  toggleTransform,
  transferEnabled,
} from '../src/approval.js';
import type { Finding } from '../src/protocol.js';

const gps: Finding = {
  field: 'gps.lat', severity: 'high',
  rationale: 'geolocation tag pinpoints where the file was made',
};
const serial: Finding = {
  field: 'serial', severity: 'high',
  rationale: 'device identifier links files from the same hardware',
};
const author: Finding = {
  field: 'author', severity: 'medium', rationale: 'authorship field',
};
const region: Finding = {
  field: 'region:0', severity: 'medium', rationale: 'declared region',
};
const unknownFormat: Finding = {
  field: 'format', severity: 'high', rationale: 'unrecognized format',
};

describe('transfer gating', () => {
  it('is disabled while a high finding is uncovered', () => {
    expect(transferEnabled([gps], [], false, 'image')).toBe(false);
    expect(transferEnabled([gps, serial], ['blur-regions'], false, 'image'))
      .toBe(false);
  });

  it('enables once the plan covers every high finding', () => {
    expect(transferEnabled([gps, serial], ['strip-metadata'], false, 'image'))
      .toBe(true);
  });

  it('medium findings alone never block', () => {
    expect(transferEnabled([author, region], [], false, 'image')).toBe(true);
  });

  it('override unblocks explicitly', () => {
    expect(transferEnabled([gps], [], true, 'image')).toBe(true);
    expect(transferEnabled([unknownFormat], [], true, 'unknown')).toBe(true);
  });

  it('nothing covers an unrecognized format except override', () => {
    expect(covers(unknownFormat, ['strip-metadata', 'blur-regions',
                                  'noise-downscale'], 'image')).toBe(false);
    expect(blockingFindings([unknownFormat], ['strip-metadata'], false,
                            'unknown')).toHaveLength(1);
  });

  it('rasterize covers document metadata', () => {
    expect(covers(gps, ['rasterize-document'], 'document')).toBe(true);
    expect(covers(gps, ['rasterize-document'], 'image')).toBe(false);
  });

  it('regions are covered by blur only', () => {
    expect(covers(region, ['strip-metadata'], 'image')).toBe(false);
    expect(covers(region, ['blur-regions'], 'image')).toBe(true);
  });
});

describe('paranoia presets', () => {
  it('level 0 strips only', () => {
    expect(paranoiaPreset(0, 'image')).toEqual(['strip-metadata']);
    expect(paranoiaPreset(0, 'document')).toEqual(['strip-metadata']);
  });

  it('level 2 on a document pre-selects rasterize', () => {
    expect(paranoiaPreset(2, 'document')).toEqual(['rasterize-document']);
  });

  it('level 2 on an image is the full set', () => {
    expect(paranoiaPreset(2, 'image'))
      .toEqual(['strip-metadata', 'blur-regions', 'noise-downscale']);
  });
});

describe('dialog state', () => {
  it('walks from blocked to submittable', () => {
    let dialog = openDialog('req-1', 'nym-0001', 'photo.nymbmp', 'image',
                            [gps, region]);
    expect(canSubmit(dialog)).toBe(false);
    dialog = toggleTransform(dialog, 'strip-metadata');
    expect(canSubmit(dialog)).toBe(true);
    dialog = toggleTransform(dialog, 'strip-metadata'); // untick again
    expect(canSubmit(dialog)).toBe(false);
    dialog = setOverride(dialog, true);
    expect(canSubmit(dialog)).toBe(true);
  });

  it('applying a preset replaces the selection and marks the level', () => {
    let dialog = openDialog('req-2', 'nym-0001', 'doc.nymdoc', 'document',
                            [gps]);
    dialog = applyParanoia(dialog, 2);
    expect(dialog.selected).toEqual(['rasterize-document']);
    expect(dialog.paranoia).toBe(2);
    expect(canSubmit(dialog)).toBe(true);
    dialog = toggleTransform(dialog, 'strip-metadata');
    expect(dialog.paranoia).toBeNull(); // manual edit leaves preset mode
  });
});
