/**
 * Annotation tool frontend: document list, token chips with per-target
 * scope highlights, boundary editing, re-propose preview, save with
 * optimistic concurrency, and a live stats panel.
 */

import { ApiClient, ConflictError, ValidationError } from "./api.js";
import { adjustEdge, bioToSpan, clickToken, spanToBio, targetRange, validateBio } from "./spans.js";
import type { DocDetail, Span } from "./types.js";
import type { EdgeOp } from "./spans.js";

const TARGET_COLORS = ["#2563eb", "#d97706", "#059669", "#db2777", "#7c3aed"];

interface EditorState {
  doc: DocDetail;
  selected: number;           // target index
  spans: (Span | null)[];     // working copy per target
  dirty: boolean[];
  preview: Span | null;       // un-saved re-propose suggestion
}

const api = new ApiClient();
let state: EditorState | null = null;

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function app(): HTMLElement {
  return document.getElementById("app") as HTMLElement;
}

function banner(message: string, kind: "error" | "info" = "error"): void {
  const box = document.getElementById("banner") as HTMLElement;
  box.textContent = message;
  box.className = message ? `banner ${kind}` : "banner hidden";
}

async function refreshStats(): Promise<void> {
  const box = document.getElementById("stats") as HTMLElement;
  try {
    const stats = await api.stats();
    box.textContent =
      `${stats.total} targets · ${stats.human} human · ${stats.auto} auto · ` +
      `${stats.auto_weak} weak · adjusted ${(stats.adjustment_ratio * 100).toFixed(1)}%`;
  } catch (err) {
    box.textContent = "stats unavailable";
  }
}

// ---------------------------------------------------------------------------
// document list

async function renderList(): Promise<void> {
  state = null;
  const root = app();
  root.replaceChildren();
  banner("");
  const heading = el("h2", undefined, "Documents");
  root.appendChild(heading);
  const list = el("div", "doc-list");
  root.appendChild(list);
  const docs = await api.listDocs();
  for (const doc of docs) {
    const row = el("a", doc.done ? "doc-row done" : "doc-row");
    row.href = `#/doc/${doc.id}`;
    row.appendChild(el("span", "doc-id", `#${doc.id}`));
    row.appendChild(el("span", "doc-text", doc.tokens.join(" ")));
    row.appendChild(
      el("span", "doc-progress", `${doc.human}/${doc.targets} confirmed`),
    );
    list.appendChild(row);
  }
}

// ---------------------------------------------------------------------------
// editor

function workingSpan(): Span | null {
  if (!state) return null;
  return state.preview ?? state.spans[state.selected];
}

function renderTokens(container: HTMLElement): void {
  if (!state) return;
  const doc = state.doc;
  const target = doc.targets[state.selected];
  const tRange = targetRange(target.span);
  const span = workingSpan();
  container.replaceChildren();
  doc.tokens.forEach((token, i) => {
    const chip = el("button", "token", token);
    const inScope = span !== null && span.start <= i && i < span.stop;
    if (inScope) {
      chip.classList.add("in-scope");
      const color = TARGET_COLORS[state!.selected % TARGET_COLORS.length];
      chip.style.setProperty("--scope-color", color);
      const record = target.record;
      chip.classList.add(
        state!.preview ? "preview" : record.provenance === "human" ? "confirmed" : "proposed",
      );
    }
    if (tRange.start <= i && i < tRange.stop) chip.classList.add("target");
    chip.addEventListener("click", () => {
      if (!state || span === null) return;
      const next = clickToken(span, tRange, i, doc.tokens.length);
      commitSpan(next);
    });
    container.appendChild(chip);
  });
}

function commitSpan(next: Span): void {
  if (!state) return;
  state.preview = null;
  state.spans[state.selected] = next;
  state.dirty[state.selected] = true;
  renderEditor();
}

function renderTargetTabs(container: HTMLElement): void {
  if (!state) return;
  container.replaceChildren();
  state.doc.targets.forEach((target, k) => {
    const [i, j] = target.span;
    const words = state!.doc.tokens.slice(i, j + 1).join(" ");
    const tab = el("button", k === state!.selected ? "target-tab active" : "target-tab");
    tab.style.setProperty("--scope-color", TARGET_COLORS[k % TARGET_COLORS.length]);
    tab.appendChild(el("span", "target-words", words));
    tab.appendChild(el("span", `polarity ${target.polarity}`, target.polarity));
    tab.appendChild(el("span", "provenance", target.record.provenance));
    tab.addEventListener("click", () => {
      state!.selected = k;
      state!.preview = null;
      renderEditor();
    });
    container.appendChild(tab);
  });
}

async function saveCurrent(): Promise<void> {
  if (!state) return;
  const doc = state.doc;
  const k = state.selected;
  const span = workingSpan();
  if (span === null) {
    banner("nothing to save");
    return;
  }
  const bio = spanToBio(span, doc.tokens.length);
  const problem = validateBio(bio, doc.tokens.length, doc.targets[k].span);
  if (problem) {
    banner(problem); // the UI should never get here; guard anyway
    return;
  }
  try {
    await api.saveScope(doc.id, k, bio, doc.targets[k].record.version);
    await openDoc(doc.id, k);
    banner("saved", "info");
  } catch (err) {
    if (err instanceof ConflictError) {
      banner("someone edited this target first; reload to continue");
    } else if (err instanceof ValidationError) {
      banner(`rejected: ${err.detail}`);
    } else {
      banner(String(err));
    }
  }
  void refreshStats();
}

async function repropose(): Promise<void> {
  if (!state) return;
  try {
    const proposal = await api.preAnnotate(state.doc.id, state.selected);
    const span = bioToSpan(proposal.bio);
    if (span) {
      state.preview = span;
      banner(`suggestion shown (${proposal.provenance}); save to keep it`, "info");
      renderEditor();
    }
  } catch (err) {
    banner(String(err));
  }
}

function renderEditor(): void {
  if (!state) return;
  const root = app();
  root.replaceChildren();

  const header = el("div", "editor-header");
  const back = el("a", "back", "← documents");
  back.href = "#/";
  header.appendChild(back);
  header.appendChild(el("h2", undefined, `Document #${state.doc.id}`));
  root.appendChild(header);

  const tabs = el("div", "target-tabs");
  renderTargetTabs(tabs);
  root.appendChild(tabs);

  const tokens = el("div", "tokens");
  renderTokens(tokens);
  root.appendChild(tokens);

  const controls = el("div", "controls");
  const ops: [EdgeOp, string][] = [
    ["grow-left", "⟵ grow"],
    ["shrink-left", "shrink ⟶"],
    ["shrink-right", "⟵ shrink"],
    ["grow-right", "grow ⟶"],
  ];
  for (const [op, label] of ops) {
    const button = el("button", "edge", label);
    button.addEventListener("click", () => {
      const span = workingSpan();
      if (!state || span === null) return;
      const tRange = targetRange(state.doc.targets[state.selected].span);
      commitSpan(adjustEdge(span, tRange, op, state.doc.tokens.length));
    });
    controls.appendChild(button);
  }
  const reproposeButton = el("button", "secondary", "re-propose");
  reproposeButton.addEventListener("click", () => void repropose());
  controls.appendChild(reproposeButton);
  const save = el("button", "primary", "save");
  save.addEventListener("click", () => void saveCurrent());
  controls.appendChild(save);
  root.appendChild(controls);

  const meta = state.doc.targets[state.selected].record;
  const info = el("div", "record-info",
    `provenance ${meta.provenance} · version ${meta.version} · ` +
    `${meta.history.length} earlier revision(s)`);
  root.appendChild(info);

  const treeBox = el("details", "tree");
  treeBox.appendChild(el("summary", undefined, "constituency tree"));
  treeBox.appendChild(el("pre", undefined, state.doc.ptb));
  root.appendChild(treeBox);
}

async function openDoc(id: number, selected = 0): Promise<void> {
  const doc = await api.getDoc(id);
  state = {
    doc,
    selected: Math.min(selected, doc.targets.length - 1),
    spans: doc.targets.map((t) => bioToSpan(t.record.bio)),
    dirty: doc.targets.map(() => false),
    preview: null,
  };
  banner("");
  renderEditor();
}

// ---------------------------------------------------------------------------
// routing

async function route(): Promise<void> {
  const hash = window.location.hash;
  const docMatch = /^#\/doc\/(\d+)$/.exec(hash);
  try {
    if (docMatch) {
      await openDoc(Number(docMatch[1]));
    } else {
      await renderList();
    }
  } catch (err) {
    banner(String(err));
  }
  void refreshStats();
}

window.addEventListener("hashchange", () => void route());
window.addEventListener("DOMContentLoaded", () => void route());
