/**
 * Pure HTML builders for the entry view; the DOM layer only injects the
 * result and binds events, which keeps display logic testable.
 */

import { renderVerdictPanel } from "./criterion.js";
import { ManifestEntry } from "./manifest.js";

export interface EntryView {
  naturalUrl: string | null;
  adversarialUrl: string | null;
  flicker: boolean;
  flickerShowsAdversarial: boolean;
}

function escapeHtml(text: string): string {
  return text.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}

export function missingImages(entry: ManifestEntry, view: EntryView): string[] {
  const missing: string[] = [];
  if (!view.naturalUrl) missing.push(entry.natural_image);
  if (!view.adversarialUrl) missing.push(entry.adversarial_image);
  return missing;
}

export function renderEntry(entry: ManifestEntry, view: EntryView): string {
  const missing = missingImages(entry, view);
  const imageHtml = view.flicker
    ? `<figure class="slot single">
         <img src="${(view.flickerShowsAdversarial ? view.adversarialUrl : view.naturalUrl) ?? ""}" alt="">
         <figcaption>${view.flickerShowsAdversarial ? "adversarial" : "natural"}
           (space swaps, x leaves flicker)</figcaption>
       </figure>`
    : `<figure class="slot"><img src="${view.naturalUrl ?? ""}" alt=""><figcaption>natural</figcaption></figure>
       <figure class="slot"><img src="${view.adversarialUrl ?? ""}" alt=""><figcaption>adversarial</figcaption></figure>`;
  const flag = missing.length
    ? `<p class="flag">image file missing: ${escapeHtml(missing.join(", "))}; review via response text</p>`
    : "";
  return `
    ${flag}
    <div class="images ${view.flicker ? "flicker" : ""}">${imageHtml}</div>
    <div class="response"><h3>target response</h3><pre>${escapeHtml(entry.response_text)}</pre></div>
    ${renderVerdictPanel(entry)}
    <p class="hint">record ${escapeHtml(entry.record_id)} | keys: s/f/r verdicts, arrows or j/k navigate, x flicker</p>
  `;
}
