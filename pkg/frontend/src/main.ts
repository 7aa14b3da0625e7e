/**
 * DOM wiring for the adjudication tool.
 *
 * The page is a static bundle: the user picks the review-export folder
 * (manifest.json plus image directories), pages through entries, records
 * verdicts with single keystrokes, and saves the manifest back (in place
 * when the browser grants a writable folder handle, otherwise as a
 * download). Images and responses are never modified.
 */

import { SUCCESS_CRITERION, VERDICT_KEYS } from "./criterion.js";
import { detectConflict, Verdict } from "./manifest.js";
import { renderEntry } from "./render.js";
import {
  currentEntry,
  hasUnsavedChanges,
  loadManifest,
  moveCursor,
  recordVerdict,
  ReviewSession,
  saveManifest,
  TerminalVerdictError,
  verdictCounts,
} from "./session.js";

interface FileStore {
  /** path (relative to the picked folder, "/"-separated) -> file reader */
  files: Map<string, () => Promise<Blob>>;
  manifestPath: string | null;
  /** present only when picked via the File System Access API */
  dirHandle: FileSystemDirectoryHandle | null;
}

let session: ReviewSession | null = null;
let store: FileStore | null = null;
let flicker = false;
let flickerShowsAdversarial = true;
const objectUrls: string[] = [];

function $(id: string): HTMLElement {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el;
}

function setStatus(text: string, isError = false): void {
  const el = $("status");
  el.textContent = text;
  el.className = isError ? "status error" : "status";
}

function normalizePath(base: string, relative: string): string {
  const parts = (base ? base.split("/").slice(0, -1) : []).concat(relative.split("/"));
  const out: string[] = [];
  for (const part of parts) {
    if (part === "" || part === ".") continue;
    if (part === "..") out.pop();
    else out.push(part);
  }
  return out.join("/");
}

function storeFromFileList(files: FileList): FileStore {
  const map = new Map<string, () => Promise<Blob>>();
  let manifestPath: string | null = null;
  for (const file of Array.from(files)) {
    const rel = (file as File & { webkitRelativePath?: string }).webkitRelativePath || file.name;
    const path = rel.split("/").slice(1).join("/") || file.name; // drop picked root dir
    map.set(path, async () => file);
    if (path.endsWith("manifest.json") && (manifestPath === null || path.length < manifestPath.length)) {
      manifestPath = path;
    }
  }
  return { files: map, manifestPath, dirHandle: null };
}

async function storeFromDirectoryHandle(dir: FileSystemDirectoryHandle): Promise<FileStore> {
  const map = new Map<string, () => Promise<Blob>>();
  let manifestPath: string | null = null;

  async function walk(handle: FileSystemDirectoryHandle, prefix: string): Promise<void> {
    for await (const [name, child] of handle as unknown as AsyncIterable<
      [string, FileSystemHandle]
    >) {
      const path = prefix ? `${prefix}/${name}` : name;
      if (child.kind === "file") {
        map.set(path, () => (child as FileSystemFileHandle).getFile());
        if (path.endsWith("manifest.json") && (manifestPath === null || path.length < manifestPath.length)) {
          manifestPath = path;
        }
      } else {
        await walk(child as FileSystemDirectoryHandle, path);
      }
    }
  }

  await walk(dir, "");
  return { files: map, manifestPath, dirHandle: dir };
}

async function openStore(newStore: FileStore): Promise<void> {
  if (!newStore.manifestPath) {
    setStatus("no manifest.json found in the selected folder", true);
    return;
  }
  const blob = await newStore.files.get(newStore.manifestPath)!();
  const text = await blob.text();
  try {
    session = await loadManifest(text, (($("adjudicator") as HTMLInputElement).value || "").trim());
  } catch (err) {
    setStatus(String(err), true);
    return;
  }
  store = newStore;
  flicker = false;
  setStatus(`loaded ${session.manifest.entries.length} entries from ${newStore.manifestPath}`);
  render();
}

async function imageUrl(path: string): Promise<string | null> {
  if (!store || !store.manifestPath) return null;
  const resolved = normalizePath(store.manifestPath, path);
  const reader = store.files.get(resolved);
  if (!reader) return null;
  const url = URL.createObjectURL(await reader());
  objectUrls.push(url);
  return url;
}

function releaseObjectUrls(): void {
  while (objectUrls.length) URL.revokeObjectURL(objectUrls.pop()!);
}

async function render(): Promise<void> {
  releaseObjectUrls();
  const app = $("app");
  if (!session) {
    app.innerHTML = `<p class="hint">Open a review-export folder to begin.</p>`;
    return;
  }
  const counts = verdictCounts(session);
  const entry = currentEntry(session);
  $("counts").textContent =
    `${session.cursor + 1}/${session.manifest.entries.length} | ` +
    `pending ${counts.pending} · success ${counts.success} · ` +
    `failure ${counts.failure} · rejected ${counts.rejected}` +
    (hasUnsavedChanges(session) ? " · unsaved changes" : "");
  if (!entry) {
    app.innerHTML = `<p class="hint">Manifest has no entries.</p>`;
    return;
  }

  app.innerHTML = renderEntry(entry, {
    naturalUrl: await imageUrl(entry.natural_image),
    adversarialUrl: await imageUrl(entry.adversarial_image),
    flicker,
    flickerShowsAdversarial,
  });
  for (const btn of Array.from(app.querySelectorAll<HTMLButtonElement>(".verdict-btn"))) {
    btn.addEventListener("click", () => applyVerdict(btn.dataset.verdict as Verdict));
  }
}

function applyVerdict(verdict: Verdict): void {
  if (!session) return;
  const adjudicator = (($("adjudicator") as HTMLInputElement).value || "").trim();
  if (!adjudicator) {
    setStatus("enter an adjudicator name before recording verdicts", true);
    return;
  }
  try {
    session = recordVerdict(session, session.cursor, verdict, adjudicator);
  } catch (err) {
    if (err instanceof TerminalVerdictError) {
      if (window.confirm(`${err.message}. Override?`)) {
        session = recordVerdict(session, session.cursor, verdict, adjudicator, { override: true });
      } else {
        return;
      }
    } else {
      setStatus(String(err), true);
      return;
    }
  }
  session = moveCursor(session, 1);
  void render();
}

async function save(): Promise<void> {
  if (!session || !store) return;
  const { text, session: saved } = await saveManifest(session);
  if (store.dirHandle && store.manifestPath) {
    const onDisk = await store.files.get(store.manifestPath)!();
    const conflict = await detectConflict(session.loadedHash, await onDisk.text());
    if (conflict && !window.confirm("The manifest changed on disk since it was loaded (another session?). Overwrite?")) {
      setStatus("save cancelled: concurrent edit detected", true);
      return;
    }
    const parts = store.manifestPath.split("/");
    let dir = store.dirHandle;
    for (const part of parts.slice(0, -1)) {
      dir = await dir.getDirectoryHandle(part);
    }
    const fileHandle = await dir.getFileHandle(parts[parts.length - 1]);
    const writable = await (fileHandle as unknown as {
      createWritable(): Promise<{ write(d: string): Promise<void>; close(): Promise<void> }>;
    }).createWritable();
    await writable.write(text);
    await writable.close();
    setStatus(`saved in place: ${store.manifestPath}`);
  } else {
    const blob = new Blob([text], { type: "application/json" });
    const a = document.createElement("a");
    a.href = URL.createObjectURL(blob);
    a.download = "manifest.json";
    a.click();
    URL.revokeObjectURL(a.href);
    setStatus("downloaded manifest.json; move it over the original to persist verdicts");
  }
  session = saved;
  void render();
}

function onKey(event: KeyboardEvent): void {
  if (!session) return;
  if ((event.target as HTMLElement | null)?.tagName === "INPUT") return;
  const key = event.key;
  if (key in VERDICT_KEYS) {
    applyVerdict(VERDICT_KEYS[key] as Verdict);
  } else if (key === "ArrowRight" || key === "j") {
    session = moveCursor(session, 1);
    void render();
  } else if (key === "ArrowLeft" || key === "k") {
    session = moveCursor(session, -1);
    void render();
  } else if (key === "x") {
    flicker = !flicker;
    void render();
  } else if (key === " " && flicker) {
    event.preventDefault();
    flickerShowsAdversarial = !flickerShowsAdversarial;
    void render();
  } else if (key === "w") {
    void save();
  }
}

export function init(): void {
  $("criterion-banner").textContent = SUCCESS_CRITERION;
  const folderInput = $("folder-input") as HTMLInputElement;
  folderInput.addEventListener("change", () => {
    if (folderInput.files && folderInput.files.length) {
      void openStore(storeFromFileList(folderInput.files));
    }
  });
  const pickButton = $("pick-folder");
  if ("showDirectoryPicker" in window) {
    pickButton.addEventListener("click", async () => {
      const dir = await (window as unknown as {
        showDirectoryPicker(opts: { mode: string }): Promise<FileSystemDirectoryHandle>;
      }).showDirectoryPicker({ mode: "readwrite" });
      await openStore(await storeFromDirectoryHandle(dir));
    });
  } else {
    (pickButton as HTMLButtonElement).disabled = true;
    pickButton.title = "File System Access API unavailable; use the folder input";
  }
  $("save-button").addEventListener("click", () => void save());
  document.addEventListener("keydown", onKey);
  window.addEventListener("beforeunload", (event) => {
    if (session && hasUnsavedChanges(session)) {
      event.preventDefault();
    }
  });
  void render();
}

if (typeof document !== "undefined") {
  document.addEventListener("DOMContentLoaded", init);
}
