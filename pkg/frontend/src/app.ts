/** Browser wiring: load a packet file, walk the queue, export ratings.
 *
 * Static single-page app; everything stays on the rater's machine.
 * The sealed key file is never loaded here.
 */

import { serializeRatings } from "./exporter.js";
import { PacketError, parsePacketsJson } from "./packets.js";
import { RUBRIC_LINES } from "./rubric.js";
import { DuplicateSubmissionError, LIKERT_MAX, LIKERT_MIN, RatingSession } from "./session.js";
import { displayOrder } from "./shuffle.js";
import type { Packet, Slot, SlotScores } from "./types.js";

interface UiState {
  session: RatingSession | null;
  cursor: number;
  pending: Partial<SlotScores>;
}

const state: UiState = { session: null, cursor: 0, pending: {} };

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) {
    throw new Error(`missing element #${id}`);
  }
  return node as T;
}

function banner(message: string, kind: "error" | "info"): void {
  const node = el<HTMLDivElement>("banner");
  node.textContent = message;
  node.className = `banner ${kind}`;
  node.hidden = message === "";
}

function renderRubric(): void {
  const list = el<HTMLUListElement>("rubric");
  list.innerHTML = "";
  for (const line of RUBRIC_LINES) {
    const item = document.createElement("li");
    item.textContent = line;
    list.appendChild(item);
  }
}

function scoreButtons(slot: Slot, selected: number | undefined): HTMLDivElement {
  const wrap = document.createElement("div");
  wrap.className = "scores";
  for (let value = LIKERT_MIN; value <= LIKERT_MAX; value++) {
    const button = document.createElement("button");
    button.type = "button";
    button.textContent = String(value);
    button.className = selected === value ? "score selected" : "score";
    button.addEventListener("click", () => {
      state.pending[slot] = value;
      renderCurrent();
    });
    wrap.appendChild(button);
  }
  return wrap;
}

function explanationCard(packet: Packet, slot: Slot, position: number): HTMLDivElement {
  const card = document.createElement("div");
  card.className = "card";
  const heading = document.createElement("h3");
  heading.textContent = `System ${slot}`;
  const body = document.createElement("p");
  body.textContent = slot === "A" ? packet.explanation_a : packet.explanation_b;
  card.append(heading, body, scoreButtons(slot, state.pending[slot]));
  card.style.order = String(position);
  return card;
}

function clipBlock(packet: Packet): HTMLElement {
  const wrap = document.createElement("div");
  wrap.className = "clip";
  const caption = document.createElement("p");
  caption.textContent = `Clip: ${packet.clip_path ?? "(no path)"} — ${packet.clip_context ?? ""}`;
  wrap.appendChild(caption);
  if (packet.clip_path) {
    const video = document.createElement("video");
    video.controls = true;
    video.src = packet.clip_path;
    video.addEventListener("error", () => video.remove());
    wrap.appendChild(video);
  }
  return wrap;
}

function renderCurrent(): void {
  const session = state.session;
  const stage = el<HTMLDivElement>("stage");
  stage.innerHTML = "";
  if (!session) {
    return;
  }
  if (session.queue.length === 0) {
    stage.textContent = "Nothing to rate: the packet file is empty.";
    return;
  }
  if (state.cursor >= session.queue.length) {
    state.cursor = session.queue.length - 1;
  }
  const packet = session.queue[state.cursor];

  const progress = document.createElement("p");
  progress.className = "progress";
  progress.textContent =
    `Sample ${state.cursor + 1} of ${session.queue.length} ` +
    `(${session.records().length} rated) — ${packet.sample_id} [${packet.modality}]`;
  stage.appendChild(progress);

  const question = document.createElement("h2");
  question.textContent = packet.question;
  stage.appendChild(question);

  if (packet.modality === "video") {
    stage.appendChild(clipBlock(packet));
  }

  const options = document.createElement("ul");
  for (const [optionId, text] of Object.entries(packet.options)) {
    const item = document.createElement("li");
    item.textContent = `${optionId}: ${text}`;
    options.appendChild(item);
  }
  stage.appendChild(options);

  const cards = document.createElement("div");
  cards.className = "cards";
  const [first, second] = displayOrder();
  cards.append(explanationCard(packet, first, 0), explanationCard(packet, second, 1));
  stage.appendChild(cards);

  const controls = document.createElement("div");
  controls.className = "controls";

  const previous = document.createElement("button");
  previous.textContent = "Previous";
  previous.disabled = state.cursor === 0;
  previous.addEventListener("click", () => {
    state.cursor -= 1;
    state.pending = {};
    renderCurrent();
  });

  const submit = document.createElement("button");
  submit.textContent = "Submit scores";
  submit.disabled = !session.canSubmit(state.pending);
  submit.addEventListener("click", () => {
    try {
      session.submit(packet.sample_id, state.pending);
    } catch (error) {
      if (error instanceof DuplicateSubmissionError) {
        if (window.confirm("This sample is already rated. Overwrite?")) {
          session.submit(packet.sample_id, state.pending, true);
        } else {
          return;
        }
      } else {
        banner(String(error), "error");
        return;
      }
    }
    banner("", "info");
    state.pending = {};
    state.cursor = Math.min(session.progress, session.queue.length - 1);
    renderCurrent();
  });

  const next = document.createElement("button");
  next.textContent = "Next";
  next.disabled = state.cursor >= session.queue.length - 1;
  next.addEventListener("click", () => {
    state.cursor += 1;
    state.pending = {};
    renderCurrent();
  });

  controls.append(previous, submit, next);
  stage.appendChild(controls);

  const existing = session.rated(packet.sample_id);
  if (existing) {
    const note = document.createElement("p");
    note.className = "note";
    note.textContent = `Already rated: A=${existing.A}, B=${existing.B}. Submitting again overwrites.`;
    stage.appendChild(note);
  }

  el<HTMLButtonElement>("export").disabled = session.records().length === 0;
}

async function loadPacketsFile(file: File): Promise<void> {
  const raterId = el<HTMLInputElement>("rater").value.trim();
  if (!raterId) {
    banner("Enter a rater id before loading packets.", "error");
    return;
  }
  try {
    const queue = parsePacketsJson(await file.text());
    state.session = RatingSession.resume(raterId, queue, window.localStorage);
    state.cursor = Math.min(state.session.progress, Math.max(queue.length - 1, 0));
    state.pending = {};
    banner(
      state.session.records().length > 0
        ? `Resumed session with ${state.session.records().length} rated samples.`
        : `Loaded ${queue.length} samples.`,
      "info",
    );
    renderCurrent();
  } catch (error) {
    state.session = null;
    const message = error instanceof PacketError ? error.message : String(error);
    banner(`Packet file rejected: ${message}`, "error");
  }
}

function exportRatings(): void {
  const session = state.session;
  if (!session) {
    return;
  }
  const blob = new Blob([serializeRatings(session.records())], {
    type: "application/json",
  });
  const link = document.createElement("a");
  link.href = URL.createObjectURL(blob);
  link.download = `ratings-${session.raterId}.json`;
  link.click();
  URL.revokeObjectURL(link.href);
}

export function start(): void {
  renderRubric();
  el<HTMLInputElement>("packets").addEventListener("change", (event) => {
    const input = event.target as HTMLInputElement;
    if (input.files && input.files[0]) {
      void loadPacketsFile(input.files[0]);
    }
  });
  el<HTMLButtonElement>("export").addEventListener("click", exportRatings);
}

if (typeof document !== "undefined") {
  document.addEventListener("DOMContentLoaded", start);
}
