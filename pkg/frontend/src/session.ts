/** Rating session state: queue position, collected scores, persistence.
 *
 * A sample is submittable only when both anonymous slots carry an
 * integer score in [1, 5]. Sessions persist after every submission and
 * resume at the first unrated sample on reload.
 */

import type { Packet, RatingRecord, SlotScores, StorageLike } from "./types.js";

export const LIKERT_MIN = 1;
export const LIKERT_MAX = 5;

export class ScoreRangeError extends Error {}
export class DuplicateSubmissionError extends Error {}

export function isValidScore(value: unknown): value is number {
  return (
    typeof value === "number" &&
    Number.isInteger(value) &&
    value >= LIKERT_MIN &&
    value <= LIKERT_MAX
  );
}

interface PersistedSession {
  rater_id: string;
  scores: Record<string, SlotScores>;
}

function storageKey(raterId: string): string {
  return `refpanel-rating-session:${raterId}`;
}

export class RatingSession {
  readonly raterId: string;
  readonly queue: readonly Packet[];
  private scores: Map<string, SlotScores>;
  private storage?: StorageLike;

  constructor(raterId: string, queue: readonly Packet[], storage?: StorageLike) {
    if (!raterId) {
      throw new Error("rater id must be non-empty");
    }
    this.raterId = raterId;
    this.queue = queue;
    this.scores = new Map();
    this.storage = storage;
  }

  /** Rebuild a session from persisted state, if any. */
  static resume(raterId: string, queue: readonly Packet[], storage: StorageLike): RatingSession {
    const session = new RatingSession(raterId, queue, storage);
    const raw = storage.getItem(storageKey(raterId));
    if (raw) {
      try {
        const persisted = JSON.parse(raw) as PersistedSession;
        if (persisted.rater_id === raterId) {
          const known = new Set(queue.map((p) => p.sample_id));
          for (const [sampleId, slotScores] of Object.entries(persisted.scores)) {
            if (known.has(sampleId) && isValidScore(slotScores.A) && isValidScore(slotScores.B)) {
              session.scores.set(sampleId, { A: slotScores.A, B: slotScores.B });
            }
          }
        }
      } catch {
        // Corrupt persisted state is discarded; the session starts clean.
      }
    }
    return session;
  }

  /** Index of the next unrated sample (queue length when all are rated). */
  get progress(): number {
    for (let i = 0; i < this.queue.length; i++) {
      if (!this.scores.has(this.queue[i].sample_id)) {
        return i;
      }
    }
    return this.queue.length;
  }

  get complete(): boolean {
    return this.progress === this.queue.length && this.queue.length > 0;
  }

  current(): Packet | undefined {
    return this.queue[this.progress];
  }

  rated(sampleId: string): SlotScores | undefined {
    const scores = this.scores.get(sampleId);
    return scores ? { ...scores } : undefined;
  }

  canSubmit(scores: Partial<SlotScores>): boolean {
    return isValidScore(scores.A) && isValidScore(scores.B);
  }

  /** Store both slot scores for a sample; duplicates need overwrite=true. */
  submit(sampleId: string, scores: Partial<SlotScores>, overwrite = false): void {
    if (!this.queue.some((p) => p.sample_id === sampleId)) {
      throw new Error(`unknown sample ${sampleId}`);
    }
    if (!isValidScore(scores.A) || !isValidScore(scores.B)) {
      throw new ScoreRangeError(
        `both slots need integer scores in [${LIKERT_MIN}, ${LIKERT_MAX}]`,
      );
    }
    if (this.scores.has(sampleId) && !overwrite) {
      throw new DuplicateSubmissionError(
        `sample ${sampleId} already rated; confirm to overwrite`,
      );
    }
    this.scores.set(sampleId, { A: scores.A, B: scores.B });
    this.persist();
  }

  records(): RatingRecord[] {
    const out: RatingRecord[] = [];
    for (const packet of this.queue) {
      const scores = this.scores.get(packet.sample_id);
      if (scores) {
        out.push({
          sample_id: packet.sample_id,
          rater_id: this.raterId,
          scores: { ...scores },
        });
      }
    }
    return out;
  }

  reset(): void {
    this.scores.clear();
    this.storage?.removeItem(storageKey(this.raterId));
  }

  private persist(): void {
    if (!this.storage) {
      return;
    }
    const persisted: PersistedSession = {
      rater_id: this.raterId,
      scores: Object.fromEntries(this.scores),
    };
    this.storage.setItem(storageKey(this.raterId), JSON.stringify(persisted));
  }
}
