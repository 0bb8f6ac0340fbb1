/**
 * SVG path math for survival curves: bold mean line, shaded credible
 * band, the horizon marker and the decision-threshold reference line.
 * Pure string/number helpers so they test without a DOM.
 */

export interface ChartLayout {
  width: number;
  height: number;
  marginLeft: number;
  marginRight: number;
  marginTop: number;
  marginBottom: number;
  /** time axis upper bound in days */
  tMax: number;
}

export const DEFAULT_LAYOUT: ChartLayout = {
  width: 720,
  height: 360,
  marginLeft: 48,
  marginRight: 16,
  marginTop: 12,
  marginBottom: 32,
  tMax: 365,
};

export const HORIZON_DAYS = 180;
export const THRESHOLD_REFERENCE = 0.61;

export function xScale(layout: ChartLayout): (t: number) => number {
  const inner = layout.width - layout.marginLeft - layout.marginRight;
  return (t) => layout.marginLeft + (t / layout.tMax) * inner;
}

export function yScale(layout: ChartLayout): (s: number) => number {
  const inner = layout.height - layout.marginTop - layout.marginBottom;
  return (s) => layout.marginTop + (1 - s) * inner;
}

function point(x: number, y: number): string {
  return `${x.toFixed(2)},${y.toFixed(2)}`;
}

/** Polyline path for the survival estimate. */
export function curvePath(
  t: number[],
  s: number[],
  layout: ChartLayout = DEFAULT_LAYOUT,
): string {
  if (t.length === 0) return "";
  const sx = xScale(layout);
  const sy = yScale(layout);
  const parts = t.map((ti, i) => point(sx(ti), sy(s[i]!)));
  return `M${parts.join("L")}`;
}

/** Closed region between the band edges, drawable as one filled path. */
export function bandPath(
  t: number[],
  lo: number[],
  hi: number[],
  layout: ChartLayout = DEFAULT_LAYOUT,
): string {
  if (t.length === 0) return "";
  const sx = xScale(layout);
  const sy = yScale(layout);
  const upper = t.map((ti, i) => point(sx(ti), sy(hi[i]!)));
  const lower = [...t]
    .map((ti, i) => point(sx(ti), sy(lo[i]!)))
    .reverse();
  return `M${upper.join("L")}L${lower.join("L")}Z`;
}

/** True when the payload's estimate never rises along the grid. */
export function isMonotoneNonIncreasing(s: number[], tolerance = 1e-9): boolean {
  for (let i = 1; i < s.length; i += 1) {
    if (s[i]! > s[i - 1]! + tolerance) return false;
  }
  return true;
}

export interface MarkerPosition {
  x: number;
  y0: number;
  y1: number;
}

export function horizonMarker(
  layout: ChartLayout = DEFAULT_LAYOUT,
  horizon = HORIZON_DAYS,
): MarkerPosition {
  const sx = xScale(layout);
  return {
    x: sx(horizon),
    y0: yScale(layout)(1),
    y1: yScale(layout)(0),
  };
}

export function thresholdLineY(
  layout: ChartLayout = DEFAULT_LAYOUT,
  threshold = THRESHOLD_REFERENCE,
): number {
  return yScale(layout)(threshold);
}

export const SCENARIO_COLORS = [
  "#1262b3",
  "#c2410c",
  "#15803d",
  "#7c3aed",
  "#be185d",
];

export function scenarioColor(index: number): string {
  return SCENARIO_COLORS[index % SCENARIO_COLORS.length]!;
}
