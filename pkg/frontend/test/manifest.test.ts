import { describe, expect, it } from "vitest";

import {
  canonicalJson,
  detectConflict,
  entriesDigest,
  ManifestEntry,
  ManifestFormatError,
  parseManifest,
  serializeManifest,
  stableStringify,
} from "../src/manifest.js";

function entry(overrides: Partial<ManifestEntry> = {}): ManifestEntry {
  return {
    record_id: "r0",
    natural_image: "natural/img0.png",
    adversarial_image: "adversarial/img0.png",
    response_text: "a photo of a dog",
    proposed_verdict: "",
    verdict: "",
    adjudicator: "",
    ...overrides,
  };
}

function manifestText(entries: ManifestEntry[]): string {
  return JSON.stringify({ manifest_version: 1, entries });
}

describe("parseManifest", () => {
  it("accepts a valid manifest", () => {
    const m = parseManifest(manifestText([entry()]));
    expect(m.entries).toHaveLength(1);
  });

  it("rejects unknown manifest_version", () => {
    const text = JSON.stringify({ manifest_version: 99, entries: [] });
    expect(() => parseManifest(text)).toThrow(ManifestFormatError);
    expect(() => parseManifest(text)).toThrow(/manifest_version/);
  });

  it("rejects malformed verdict values", () => {
    const text = manifestText([entry({ verdict: "maybe" })]);
    expect(() => parseManifest(text)).toThrow(/entries\[0\].verdict/);
  });

  it("rejects missing fields", () => {
    const bad = { manifest_version: 1, entries: [{ record_id: "r0" }] };
    expect(() => parseManifest(JSON.stringify(bad))).toThrow(/natural_image/);
  });

  it("rejects non-JSON", () => {
    expect(() => parseManifest("not json")).toThrow(ManifestFormatError);
  });
});

describe("canonical serialization", () => {
  it("sorts keys recursively and stays compact", () => {
    expect(canonicalJson({ b: 1, a: { d: 2, c: [3, { f: 4, e: 5 }] } })).toBe(
      '{"a":{"c":[3,{"e":5,"f":4}],"d":2},"b":1}',
    );
  });

  it("escapes non-ascii like the exporter", () => {
    expect(canonicalJson({ text: "café — test" })).toBe(
      '{"text":"caf\\u00e9 \\u2014 test"}',
    );
  });

  it("pretty form uses two-space indent and sorted keys", () => {
    expect(stableStringify({ b: 1, a: 2 })).toBe('{\n  "a": 2,\n  "b": 1\n}');
  });
});

describe("hashing and conflicts", () => {
  it("digest is stable under key order", async () => {
    const e1 = entry();
    const shuffled = Object.fromEntries(Object.entries(e1).reverse()) as unknown as ManifestEntry;
    expect(await entriesDigest([e1])).toBe(await entriesDigest([shuffled]));
  });

  it("serializeManifest embeds the recomputed content hash", async () => {
    const text = await serializeManifest({ manifest_version: 1, entries: [entry()] });
    const parsed = parseManifest(text);
    expect(parsed.content_hash).toBe(await entriesDigest(parsed.entries));
  });

  it("detects a concurrent edit from another session", async () => {
    const original = [entry()];
    const loadedHash = await entriesDigest(original);
    // another session recorded a verdict and saved
    const otherSessionText = await serializeManifest({
      manifest_version: 1,
      entries: [entry({ verdict: "success", adjudicator: "other" })],
    });
    expect(await detectConflict(loadedHash, otherSessionText)).toBe(true);
  });

  it("no conflict when the disk content is unchanged", async () => {
    const original = [entry()];
    const loadedHash = await entriesDigest(original);
    const diskText = await serializeManifest({ manifest_version: 1, entries: original });
    expect(await detectConflict(loadedHash, diskText)).toBe(false);
  });

  it("treats an unparseable disk file as a conflict", async () => {
    expect(await detectConflict("whatever", "not json")).toBe(true);
  });
});
