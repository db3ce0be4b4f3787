/** Keyboard-first labeling: one key per reference class, one distance toggle. */

import type { ReferenceClass } from "./types.js";

export const REFERENCE_KEYS: Record<string, ReferenceClass> = {
  h: "hand",
  c: "coin_or_bottle_cap",
  r: "ruler",
  s: "small_household_object",
  f: "fruit",
  u: "unspecified_or_other",
};

export type KeyAction =
  | { kind: "reference"; reference: ReferenceClass }
  | { kind: "toggle_distance" }
  | { kind: "confirm" }
  | { kind: "next" }
  | { kind: "prev" }
  | { kind: "flag" };

export function actionForKey(key: string): KeyAction | null {
  const lower = key.length === 1 ? key.toLowerCase() : key;
  const reference = REFERENCE_KEYS[lower];
  if (reference) return { kind: "reference", reference };
  switch (lower) {
    case "d":
      return { kind: "toggle_distance" };
    case "Enter":
    case " ":
      return { kind: "confirm" };
    case "ArrowRight":
    case "j":
      return { kind: "next" };
    case "ArrowLeft":
    case "k":
      return { kind: "prev" };
    case "x":
      return { kind: "flag" };
    default:
      return null;
  }
}

export const KEY_HELP: Array<[string, string]> = [
  ["h", "hand"],
  ["c", "coin / bottle cap"],
  ["r", "ruler"],
  ["s", "small household object"],
  ["f", "fruit"],
  ["u", "unspecified / other"],
  ["d", "toggle close-up / distant"],
  ["Enter", "save + next"],
  ["j / k", "next / previous"],
  ["x", "flag for re-run"],
];
