/** Ratings export in the exact schema the aggregation CLI ingests. */

import type { RatingRecord, RatingsFile } from "./types.js";

export const RATINGS_FORMAT = "refpanel-ratings/v1";

export function buildRatingsFile(records: RatingRecord[]): RatingsFile {
  return { format: RATINGS_FORMAT, ratings: records };
}

export function serializeRatings(records: RatingRecord[]): string {
  return JSON.stringify(buildRatingsFile(records), null, 2) + "\n";
}
