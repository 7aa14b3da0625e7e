/**
 * Review-session state: cursor, verdict edits, dirty tracking.
 *
 * The session never mutates images or response text; the only writable
 * fields are verdict and adjudicator, and terminal verdicts change only
 * through an explicit override.
 */

import {
  ManifestEntry,
  ReviewManifest,
  VERDICTS,
  Verdict,
  entriesDigest,
  parseManifest,
  serializeManifest,
} from "./manifest.js";

export class TerminalVerdictError extends Error {}

export interface ReviewSession {
  manifest: ReviewManifest;
  cursor: number;
  dirty: boolean[];
  adjudicator: string;
  /** hash of entries as loaded; save-time conflict detection compares
   * the on-disk file against this */
  loadedHash: string;
}

export async function loadManifest(text: string, adjudicator = ""): Promise<ReviewSession> {
  const manifest = parseManifest(text);
  return {
    manifest,
    cursor: 0,
    dirty: manifest.entries.map(() => false),
    adjudicator,
    loadedHash: await entriesDigest(manifest.entries),
  };
}

export interface VerdictCounts {
  pending: number;
  success: number;
  failure: number;
  rejected: number;
}

export function verdictCounts(session: ReviewSession): VerdictCounts {
  const counts: VerdictCounts = { pending: 0, success: 0, failure: 0, rejected: 0 };
  for (const entry of session.manifest.entries) {
    if (entry.verdict === "") {
      counts.pending += 1;
    } else {
      counts[entry.verdict as Verdict] += 1;
    }
  }
  return counts;
}

export function currentEntry(session: ReviewSession): ManifestEntry | undefined {
  return session.manifest.entries[session.cursor];
}

export function moveCursor(session: ReviewSession, delta: number): ReviewSession {
  const n = session.manifest.entries.length;
  if (n === 0) {
    return session;
  }
  const cursor = Math.min(Math.max(session.cursor + delta, 0), n - 1);
  return { ...session, cursor };
}

export function recordVerdict(
  session: ReviewSession,
  index: number,
  verdict: Verdict,
  adjudicator: string,
  opts: { override?: boolean } = {},
): ReviewSession {
  if (!VERDICTS.includes(verdict)) {
    throw new Error(`verdict must be one of ${VERDICTS.join("/")}, got ${verdict}`);
  }
  const entries = session.manifest.entries;
  const entry = entries[index];
  if (entry === undefined) {
    throw new Error(`entry index ${index} out of bounds`);
  }
  if (entry.verdict !== "" && entry.verdict !== verdict && !opts.override) {
    throw new TerminalVerdictError(
      `entry ${entry.record_id} already has verdict ${entry.verdict}; confirm to override`,
    );
  }
  if (entry.verdict === verdict && entry.adjudicator === adjudicator) {
    return session;
  }
  const nextEntries = entries.slice();
  nextEntries[index] = { ...entry, verdict, adjudicator };
  const dirty = session.dirty.slice();
  dirty[index] = true;
  return {
    ...session,
    manifest: { ...session.manifest, entries: nextEntries },
    dirty,
    adjudicator,
  };
}

export function hasUnsavedChanges(session: ReviewSession): boolean {
  return session.dirty.some(Boolean);
}

/**
 * Serialize for writing. The returned session reflects a completed save:
 * dirty flags cleared and loadedHash moved to the saved content.
 */
export async function saveManifest(
  session: ReviewSession,
): Promise<{ text: string; session: ReviewSession }> {
  const text = await serializeManifest(session.manifest);
  const saved: ReviewSession = {
    ...session,
    manifest: parseManifest(text),
    dirty: session.manifest.entries.map(() => false),
    loadedHash: await entriesDigest(session.manifest.entries),
  };
  return { text, session: saved };
}
