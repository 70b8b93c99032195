/** The 1-5 scoring rubric, displayed verbatim next to every sample. */

export const RUBRIC_LINES: readonly string[] = [
  "5 - Perfect: Precisely identifies the foul or answers the theory question with correct legal citations. The causal logic is clear, and the terminology is professional.",
  "4 - Good: The verdict and key descriptions are correct. May contain minor terminological imprecisions or verbose explanations, but the core reasoning is valid.",
  "3 - Fair: The conclusion is correct, but the explanation contains slight hallucinations or misses rule support.",
  "2 - Poor: Cites incorrect rules or describes actions significantly inconsistent with the video evidence.",
  "1 - Nonsense: Contains severe hallucinations or chaotic logic that contradicts basic football common sense.",
];

export function rubricText(): string {
  return RUBRIC_LINES.join("\n") + "\n";
}
