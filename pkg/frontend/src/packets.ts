/** Packet file loading with defense-in-depth blindness checks.
 *
 * The UI never learns real system identities; the enforceable half of
 * the blindness contract here is schema strictness (unknown keys refuse
 * the load, since that is where identity fields would have to hide) plus
 * an optional forbidden-term byte scan supplied by the operator.
 */

import type { Packet, PacketFile } from "./types.js";

export const PACKETS_FORMAT = "refpanel-packets/v1";

const REQUIRED_KEYS = [
  "sample_id",
  "modality",
  "question",
  "options",
  "explanation_a",
  "explanation_b",
] as const;

const ALLOWED_KEYS = new Set<string>([...REQUIRED_KEYS, "clip_path", "clip_context"]);

const MODALITIES: ReadonlySet<string> = new Set(["text", "video"]);

export class PacketError extends Error {}

export interface LoadOptions {
  /** Strings that must not appear anywhere in the packet payload. */
  forbiddenTerms?: string[];
}

function describe(sample: unknown, index: number): string {
  if (sample && typeof sample === "object" && "sample_id" in sample) {
    return `sample ${(sample as { sample_id: unknown }).sample_id}`;
  }
  return `packet #${index + 1}`;
}

function validatePacket(raw: unknown, index: number): Packet {
  const label = describe(raw, index);
  if (raw === null || typeof raw !== "object" || Array.isArray(raw)) {
    throw new PacketError(`${label}: not an object`);
  }
  const record = raw as Record<string, unknown>;
  for (const key of Object.keys(record)) {
    if (!ALLOWED_KEYS.has(key)) {
      throw new PacketError(`${label}: unexpected field "${key}" (load refused)`);
    }
  }
  for (const key of REQUIRED_KEYS) {
    if (!(key in record)) {
      throw new PacketError(`${label}: missing field "${key}"`);
    }
  }
  for (const key of ["sample_id", "question", "explanation_a", "explanation_b"] as const) {
    if (typeof record[key] !== "string" || record[key] === "") {
      throw new PacketError(`${label}: field "${key}" must be a non-empty string`);
    }
  }
  if (typeof record.modality !== "string" || !MODALITIES.has(record.modality)) {
    throw new PacketError(`${label}: modality must be "text" or "video"`);
  }
  const options = record.options;
  if (options === null || typeof options !== "object" || Array.isArray(options)) {
    throw new PacketError(`${label}: options must be an object`);
  }
  for (const [optionId, text] of Object.entries(options as Record<string, unknown>)) {
    if (typeof text !== "string") {
      throw new PacketError(`${label}: option "${optionId}" must be a string`);
    }
  }
  return record as unknown as Packet;
}

/** Parse and validate a packet document; returns the render queue in file order. */
export function parsePackets(payload: unknown, options: LoadOptions = {}): Packet[] {
  if (payload === null || typeof payload !== "object" || Array.isArray(payload)) {
    throw new PacketError("packet file must be a JSON object");
  }
  const doc = payload as Partial<PacketFile>;
  if (doc.format !== PACKETS_FORMAT) {
    throw new PacketError(`packet file format must be "${PACKETS_FORMAT}"`);
  }
  if (!Array.isArray(doc.packets)) {
    throw new PacketError("packet file has no packets array");
  }

  const forbidden = options.forbiddenTerms ?? [];
  if (forbidden.length > 0) {
    const blob = JSON.stringify(doc.packets);
    for (const term of forbidden) {
      if (term && blob.includes(term)) {
        throw new PacketError(`packet payload contains masked term "${term}" (load refused)`);
      }
    }
  }

  const seen = new Set<string>();
  const queue = doc.packets.map((raw, index) => validatePacket(raw, index));
  for (const packet of queue) {
    if (seen.has(packet.sample_id)) {
      throw new PacketError(`sample ${packet.sample_id}: duplicated in packet file`);
    }
    seen.add(packet.sample_id);
  }
  return queue;
}

export function parsePacketsJson(text: string, options: LoadOptions = {}): Packet[] {
  let payload: unknown;
  try {
    payload = JSON.parse(text);
  } catch (error) {
    throw new PacketError(`packet file is not valid JSON: ${String(error)}`);
  }
  return parsePackets(payload, options);
}
