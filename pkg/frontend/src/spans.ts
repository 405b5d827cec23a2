/**
 * Span editing and BIO conversion.
 *
 * The UI edits a scope as a contiguous half-open token range that must
 * contain the target; every edit operation preserves that invariant, so
 * any BIO sequence produced here passes the server's validator.
 */

import type { Span } from "./types.js";

/** Inclusive -> half-open conversion for target spans from the API. */
export function targetRange(span: [number, number]): Span {
  return { start: span[0], stop: span[1] + 1 };
}

export function spanToBio(span: Span, length: number): string[] {
  if (!(0 <= span.start && span.start < span.stop && span.stop <= length)) {
    throw new Error(`span [${span.start}, ${span.stop}) outside 0..${length}`);
  }
  const bio = new Array<string>(length).fill("O");
  bio[span.start] = "B";
  for (let i = span.start + 1; i < span.stop; i++) bio[i] = "I";
  return bio;
}

/** Single contiguous span of a BIO sequence, or null when it has none. */
export function bioToSpan(bio: string[]): Span | null {
  let start = -1;
  let stop = -1;
  for (let i = 0; i < bio.length; i++) {
    if (bio[i] === "B" || bio[i] === "I") {
      if (start === -1) start = i;
      stop = i + 1;
    } else if (start !== -1 && stop === i) {
      break; // first gap after the run; trailing tags are validated elsewhere
    }
  }
  return start === -1 ? null : { start, stop };
}

/** Mirror of the server's rules; returns the violated rule or null. */
export function validateBio(
  bio: string[],
  length: number,
  target: [number, number],
): string | null {
  if (bio.length !== length) {
    return `length ${bio.length} != token count ${length}`;
  }
  let prev = "O";
  for (let i = 0; i < bio.length; i++) {
    const tag = bio[i];
    if (tag !== "B" && tag !== "I" && tag !== "O") {
      return `unknown tag ${tag} at position ${i}`;
    }
    if (tag === "I" && prev === "O") {
      return `I without preceding B at position ${i}`;
    }
    prev = tag;
  }
  for (let i = target[0]; i <= target[1]; i++) {
    if (bio[i] === "O") {
      return `target token ${i} tagged O, must be inside the scope`;
    }
  }
  // The I-after-O rule already forbids gaps inside a run, so contiguity
  // reduces to having exactly one B.
  const spans = bio.filter((tag) => tag === "B").length;
  if (spans !== 1) return "scope must be a single contiguous span";
  return null;
}

/**
 * Click-to-edit semantics on token `index`:
 *  - outside the span: grow the nearest boundary to include it;
 *  - on a span edge: shrink that edge inward;
 *  - strictly inside: no change (interior clicks would split the span).
 * Returns a new span; the target stays covered and bounds stay legal.
 */
export function clickToken(
  span: Span,
  target: Span,
  index: number,
  length: number,
): Span {
  if (index < 0 || index >= length) return span;
  if (index < span.start) return { start: index, stop: span.stop };
  if (index >= span.stop) return { start: span.start, stop: index + 1 };
  const next = { ...span };
  if (index === span.start && span.start < target.start) {
    next.start = span.start + 1;
  } else if (index === span.stop - 1 && span.stop > target.stop) {
    next.stop = span.stop - 1;
  }
  return next;
}

export type EdgeOp = "grow-left" | "shrink-left" | "grow-right" | "shrink-right";

/** Boundary buttons; clamped so the span always covers the target. */
export function adjustEdge(span: Span, target: Span, op: EdgeOp, length: number): Span {
  switch (op) {
    case "grow-left":
      return { start: Math.max(0, span.start - 1), stop: span.stop };
    case "shrink-left":
      return { start: Math.min(target.start, span.start + 1), stop: span.stop };
    case "grow-right":
      return { start: span.start, stop: Math.min(length, span.stop + 1) };
    case "shrink-right":
      return { start: span.start, stop: Math.max(target.stop, span.stop - 1) };
  }
}
