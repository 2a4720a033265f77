/** Pure HTML renderers: every view is a function of the fetched payload,
 * so the output can be pinned with golden snapshots. */

import type { HitView, Progress, SpanRef } from "./types.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

function highlightSpan(hit: HitView): SpanRef | null {
  if (hit.stage === 2 && hit.payload.personal) return hit.payload.personal;
  if (hit.stage === 3 && hit.payload.mention) return hit.payload.mention;
  return null;
}

function renderTurn(tokens: string[], speaker: string, turnIndex: number,
                    mark: SpanRef | null): string {
  const words = tokens.map((tok, i) => {
    const inside = mark !== null && mark.turn === turnIndex &&
      i >= mark.start_tok && i < mark.end_tok;
    const word = escapeHtml(tok);
    return inside ? `<mark>${word}</mark>` : word;
  });
  const cls = speaker === "USER" ? "turn user" : "turn system";
  return `<div class="${cls}"><span class="speaker">${speaker}</span> ` +
    `<span class="words">${words.join(" ")}</span></div>`;
}

export function renderDialogue(hit: HitView): string {
  const mark = highlightSpan(hit);
  const turns = hit.dialogue.map((turn, t) =>
    renderTurn(turn.tokens, turn.speaker, t, mark));
  return `<div class="dialogue">${turns.join("")}</div>`;
}

const STAGE_PROMPTS: Record<number, string> = {
  1: "Select the personal entity mention in this dialogue.",
  2: "Select the explicit entity mention this personal mention refers to.",
  3: "Select the entity this mention refers to.",
};

export function renderOptions(hit: HitView, selected: string | null): string {
  const items = hit.options.map((option) => {
    const checked = option.id === selected ? " checked" : "";
    return (
      `<label class="option"><input type="radio" name="option" ` +
      `value="${escapeHtml(option.id)}"${checked}> ` +
      `${escapeHtml(option.label)}</label>`
    );
  });
  return `<div class="options">${items.join("")}</div>`;
}

export function renderHit(hit: HitView, selected: string | null): string {
  const prompt = STAGE_PROMPTS[hit.stage] ?? "Select an option.";
  const followUp = hit.payload.follow_up
    ? `<p class="follow-up">Is there another corresponding mention?</p>`
    : "";
  const disabled = selected === null ? " disabled" : "";
  return [
    `<section class="hit" data-hit="${escapeHtml(hit.id)}">`,
    `<h2>Stage ${hit.stage}</h2>`,
    `<p class="prompt">${escapeHtml(prompt)}</p>`,
    followUp,
    renderDialogue(hit),
    renderOptions(hit, selected),
    `<button id="submit"${disabled}>Submit</button>`,
    `<p class="hit-meta">${hit.n_responses}/${hit.required} responses ` +
      `collected</p>`,
    `</section>`,
  ].join("\n");
}

export function renderProgress(progress: Progress): string {
  const rows = Object.keys(progress).sort().map((stage) => {
    const p = progress[stage]!;
    return `<li>Stage ${stage}: ${p.closed} done, ${p.open} open</li>`;
  });
  return `<ul class="progress">${rows.join("")}</ul>`;
}

export function renderAllDone(): string {
  return `<section class="done"><h2>All done</h2>` +
    `<p>No open questions for you right now. Thank you!</p></section>`;
}

export function renderError(message: string): string {
  return `<div class="error" role="alert">${escapeHtml(message)} ` +
    `<button id="retry">Retry</button></div>`;
}
