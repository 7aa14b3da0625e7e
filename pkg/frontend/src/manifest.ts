/**
 * Review-manifest parsing, validation, hashing, and serialization.
 *
 * The serializer byte-matches the harness exporter (sorted keys, indent 2,
 * ASCII-escaped), so a no-edit save reproduces the input file exactly and
 * content hashes agree across both sides of the interchange.
 */

export const MANIFEST_VERSION = 1;

export const VERDICTS = ["success", "failure", "rejected"] as const;
export type Verdict = (typeof VERDICTS)[number];

export interface ManifestEntry {
  record_id: string;
  natural_image: string;
  adversarial_image: string;
  response_text: string;
  proposed_verdict: string;
  verdict: string;
  adjudicator: string;
}

export interface ReviewManifest {
  manifest_version: number;
  content_hash?: string;
  entries: ManifestEntry[];
}

export class ManifestFormatError extends Error {}

const ENTRY_STRING_FIELDS: (keyof ManifestEntry)[] = [
  "record_id",
  "natural_image",
  "adversarial_image",
  "response_text",
  "proposed_verdict",
  "verdict",
  "adjudicator",
];

export function parseManifest(text: string): ReviewManifest {
  let doc: unknown;
  try {
    doc = JSON.parse(text);
  } catch (err) {
    throw new ManifestFormatError(`manifest is not valid JSON: ${err}`);
  }
  if (typeof doc !== "object" || doc === null || Array.isArray(doc)) {
    throw new ManifestFormatError("manifest must be a JSON object");
  }
  const manifest = doc as Record<string, unknown>;
  if (manifest.manifest_version !== MANIFEST_VERSION) {
    throw new ManifestFormatError(
      `unknown manifest_version ${JSON.stringify(manifest.manifest_version)}, expected ${MANIFEST_VERSION}`,
    );
  }
  if (!Array.isArray(manifest.entries)) {
    throw new ManifestFormatError("manifest.entries must be an array");
  }
  manifest.entries.forEach((entry, i) => {
    if (typeof entry !== "object" || entry === null) {
      throw new ManifestFormatError(`entries[${i}] must be an object`);
    }
    for (const field of ENTRY_STRING_FIELDS) {
      if (typeof (entry as Record<string, unknown>)[field] !== "string") {
        throw new ManifestFormatError(`entries[${i}].${field} must be a string`);
      }
    }
    const verdict = (entry as ManifestEntry).verdict;
    if (verdict !== "" && !VERDICTS.includes(verdict as Verdict)) {
      throw new ManifestFormatError(
        `entries[${i}].verdict must be empty or one of ${VERDICTS.join("/")}, got ${JSON.stringify(verdict)}`,
      );
    }
  });
  return doc as ReviewManifest;
}

function sortKeysDeep(value: unknown): unknown {
  if (Array.isArray(value)) {
    return value.map(sortKeysDeep);
  }
  if (typeof value === "object" && value !== null) {
    const out: Record<string, unknown> = {};
    for (const key of Object.keys(value).sort()) {
      out[key] = sortKeysDeep((value as Record<string, unknown>)[key]);
    }
    return out;
  }
  return value;
}

function escapeNonAscii(json: string): string {
  return json.replace(/[-￿]/g, (ch) => {
    return "\\u" + ch.charCodeAt(0).toString(16).padStart(4, "0");
  });
}

/** Compact canonical form used for content hashing. */
export function canonicalJson(value: unknown): string {
  return escapeNonAscii(JSON.stringify(sortKeysDeep(value)));
}

/** Pretty form byte-matching the harness exporter. */
export function stableStringify(value: unknown): string {
  return escapeNonAscii(JSON.stringify(sortKeysDeep(value), null, 2));
}

export async function sha256Hex(text: string): Promise<string> {
  const data = new TextEncoder().encode(text);
  const digest = await globalThis.crypto.subtle.digest("SHA-256", data);
  return Array.from(new Uint8Array(digest))
    .map((b) => b.toString(16).padStart(2, "0"))
    .join("");
}

export async function entriesDigest(entries: ManifestEntry[]): Promise<string> {
  return sha256Hex(canonicalJson(entries));
}

export async function serializeManifest(manifest: ReviewManifest): Promise<string> {
  const out: ReviewManifest = {
    ...manifest,
    content_hash: await entriesDigest(manifest.entries),
  };
  return stableStringify(out);
}

/**
 * Concurrent-edit check: true when the manifest on disk no longer matches
 * the entries hash captured when this session loaded it.
 */
export async function detectConflict(loadedHash: string, diskText: string): Promise<boolean> {
  let disk: ReviewManifest;
  try {
    disk = parseManifest(diskText);
  } catch {
    return true; // the file changed into something we do not understand
  }
  return (await entriesDigest(disk.entries)) !== loadedHash;
}
