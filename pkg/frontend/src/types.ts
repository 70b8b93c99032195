/** Shared shapes for the rating interface. */

export type Modality = "text" | "video";

/** One masked sample: two anonymous explanations for the same question. */
export interface Packet {
  sample_id: string;
  modality: Modality;
  question: string;
  options: Record<string, string>;
  explanation_a: string;
  explanation_b: string;
  clip_path?: string;
  clip_context?: string;
}

export interface PacketFile {
  format: string;
  packets: Packet[];
}

/** Anonymous slot identifiers; unmasking happens elsewhere. */
export type Slot = "A" | "B";

export interface SlotScores {
  A: number;
  B: number;
}

export interface RatingRecord {
  sample_id: string;
  rater_id: string;
  scores: SlotScores;
}

export interface RatingsFile {
  format: "refpanel-ratings/v1";
  ratings: RatingRecord[];
}

/** Minimal storage surface so sessions can persist to localStorage or a stub. */
export interface StorageLike {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
  removeItem(key: string): void;
}
