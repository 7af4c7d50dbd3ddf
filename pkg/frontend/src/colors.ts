/** Diverging token-highlight scale, anchored at zero.
 *
 * Scores arrive already normalized to [-1, 1] by the service; this module
 * only maps sign to hue and magnitude to opacity. Zero (and anything
 * unrenderable like NaN) is neutral, |1| is full intensity, and values
 * outside the range are clamped rather than extrapolated.
 */

export const NEUTRAL = "transparent";

const POSITIVE_RGB = "214, 69, 48";   // warm: pushes toward the scored class
const NEGATIVE_RGB = "47, 102, 197";  // cool: pushes away from it

export function scoreColor(score: number): string {
  if (!Number.isFinite(score) || score === 0) {
    return NEUTRAL;
  }
  const magnitude = Math.min(Math.abs(score), 1);
  const alpha = +(magnitude * 0.9).toFixed(3);
  if (alpha === 0) {
    return NEUTRAL;
  }
  const rgb = score > 0 ? POSITIVE_RGB : NEGATIVE_RGB;
  return `rgba(${rgb}, ${alpha})`;
}

/** Opacity component of scoreColor, exposed for intensity assertions. */
export function scoreAlpha(score: number): number {
  if (!Number.isFinite(score)) {
    return 0;
  }
  return +(Math.min(Math.abs(score), 1) * 0.9).toFixed(3);
}
