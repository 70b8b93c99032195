/** Per-render slot ordering to blunt position bias.
 *
 * Scores always map back to the canonical A/B slots; only the on-screen
 * order of the two explanation cards is randomized, fresh at each render.
 */

import type { Slot } from "./types.js";

export function displayOrder(rng: () => number = Math.random): [Slot, Slot] {
  return rng() < 0.5 ? ["A", "B"] : ["B", "A"];
}
