const LOW_COLOR = { r: 0x2b, g: 0x6c, b: 0xb0 };
const MID_COLOR = { r: 0xf5, g: 0xf5, b: 0xf5 };
const HIGH_COLOR = { r: 0xc6, g: 0x2f, b: 0x2f };

function hex(channel: number): string {
  return Math.round(channel).toString(16).padStart(2, "0");
}

function blend(
  a: { r: number; g: number; b: number },
  b: { r: number; g: number; b: number },
  t: number
): string {
  const r = a.r + (b.r - a.r) * t;
  const g = a.g + (b.g - a.g) * t;
  const bl = a.b + (b.b - a.b) * t;
  return `#${hex(r)}${hex(g)}${hex(bl)}`;
}

/** Maps a quantile rank in [0, 1] onto a blue-white-red diverging ramp. */
export function divergingColor(rank: number): string {
  const t = Math.min(1, Math.max(0, rank));
  if (t <= 0.5) {
    return blend(LOW_COLOR, MID_COLOR, t * 2);
  }
  return blend(MID_COLOR, HIGH_COLOR, (t - 0.5) * 2);
}

export interface ColorScale {
  colorFor(value: number): string;
  rankFor(value: number): number;
}

/**
 * Builds a quantile-based color scale from a reference sample of scores, so
 * the ramp adapts to whatever range the model actually produces.
 */
export function buildColorScale(referenceValues: number[]): ColorScale {
  const sorted = [...referenceValues].sort((a, b) => a - b);
  const rankFor = (value: number): number => {
    if (sorted.length === 0) {
      return 0.5;
    }
    let below = 0;
    for (const v of sorted) {
      if (v <= value) {
        below += 1;
      } else {
        break;
      }
    }
    return sorted.length === 1 ? 0.5 : (below - 0.5) / sorted.length;
  };
  return {
    rankFor,
    colorFor: (value: number) => divergingColor(rankFor(value)),
  };
}

export function renderLegend(): string {
  const stops = [0, 0.25, 0.5, 0.75, 1]
    .map(
      (t) =>
        `<span class="legend-stop" style="background:${divergingColor(t)}"></span>`
    )
    .join("");
  return (
    `<div class="legend"><span class="legend-label">lower risk</span>` +
    `${stops}<span class="legend-label">higher risk</span></div>`
  );
}
