/** Hand-rolled SVG chart primitives: linear and log-10 scales, axis ticks,
 * polyline paths. Output depends only on the inputs, so identical data
 * yields identical bytes. */

export interface Box {
  width: number;
  height: number;
  margin: { top: number; right: number; bottom: number; left: number };
}

export const DEFAULT_BOX: Box = {
  width: 640,
  height: 420,
  margin: { top: 28, right: 24, bottom: 46, left: 64 },
};

export interface Scale {
  (v: number): number;
  ticks: number[];
  kind: "linear" | "log";
}

export function linearScale(lo: number, hi: number, outLo: number, outHi: number): Scale {
  if (!(hi > lo)) hi = lo + 1;
  const f = ((v: number) => outLo + ((v - lo) / (hi - lo)) * (outHi - outLo)) as Scale;
  f.kind = "linear";
  const step = niceStep(hi - lo);
  const ticks: number[] = [];
  for (let t = Math.ceil(lo / step) * step; t <= hi + 1e-12 * Math.abs(hi); t += step) {
    ticks.push(roundTo(t, step));
  }
  f.ticks = ticks;
  return f;
}

export function logScale(lo: number, hi: number, outLo: number, outHi: number): Scale {
  if (!(lo > 0) || !(hi > 0)) {
    throw new Error("log scale needs positive bounds");
  }
  const llo = Math.log10(lo);
  const lhi = Math.log10(hi);
  const f = ((v: number) =>
    outLo + ((Math.log10(v) - llo) / (lhi - llo || 1)) * (outHi - outLo)) as Scale;
  f.kind = "log";
  const ticks: number[] = [];
  for (let e = Math.ceil(llo); e <= Math.floor(lhi); e++) {
    ticks.push(Math.pow(10, e));
  }
  if (ticks.length === 0) ticks.push(lo, hi);
  f.ticks = ticks;
  return f;
}

function niceStep(span: number): number {
  const raw = span / 6;
  const mag = Math.pow(10, Math.floor(Math.log10(raw)));
  for (const m of [1, 2, 5, 10]) {
    if (raw <= m * mag) return m * mag;
  }
  return 10 * mag;
}

function roundTo(v: number, step: number): number {
  const d = Math.max(0, -Math.floor(Math.log10(step)) + 1);
  return Number(v.toFixed(d));
}

export function fmtTick(v: number, kind: "linear" | "log"): string {
  if (kind === "log") {
    const e = Math.round(Math.log10(v));
    return `1e${e}`;
  }
  return Math.abs(v) >= 1e4 || (v !== 0 && Math.abs(v) < 1e-3)
    ? v.toExponential(0)
    : String(v);
}

export const PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

export function polyline(xs: number[], ys: number[]): string {
  const pts: string[] = [];
  for (let i = 0; i < xs.length; i++) {
    if (Number.isFinite(xs[i]) && Number.isFinite(ys[i])) {
      pts.push(`${xs[i].toFixed(2)},${ys[i].toFixed(2)}`);
    }
  }
  return pts.join(" ");
}

export interface Series {
  label: string;
  points: string;
  color: string;
  dashed?: boolean;
  cssClass?: string;
}

export function renderChart(opts: {
  box: Box;
  title: string;
  xLabel: string;
  yLabel: string;
  x: Scale;
  y: Scale;
  series: Series[];
}): string {
  const { box, x, y } = opts;
  const { width, height, margin } = box;
  const plotW = width - margin.left - margin.right;
  const plotH = height - margin.top - margin.bottom;
  const parts: string[] = [];
  parts.push(
    `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}" ` +
    `viewBox="0 0 ${width} ${height}" font-family="sans-serif" font-size="12">`);
  parts.push(`<rect width="${width}" height="${height}" fill="white"/>`);
  parts.push(`<text x="${margin.left + plotW / 2}" y="16" text-anchor="middle" font-size="14">${esc(opts.title)}</text>`);

  // gridlines + ticks
  for (const t of x.ticks) {
    const px = x(t);
    parts.push(`<line x1="${px.toFixed(2)}" y1="${margin.top}" x2="${px.toFixed(2)}" y2="${margin.top + plotH}" stroke="#e5e5e5"/>`);
    parts.push(`<text x="${px.toFixed(2)}" y="${margin.top + plotH + 16}" text-anchor="middle">${fmtTick(t, x.kind)}</text>`);
  }
  for (const t of y.ticks) {
    const py = y(t);
    parts.push(`<line x1="${margin.left}" y1="${py.toFixed(2)}" x2="${margin.left + plotW}" y2="${py.toFixed(2)}" stroke="#e5e5e5"/>`);
    parts.push(`<text x="${margin.left - 6}" y="${(py + 4).toFixed(2)}" text-anchor="end">${fmtTick(t, y.kind)}</text>`);
  }
  // axes
  parts.push(`<g class="axis axis-x" data-scale="${x.kind}"><line x1="${margin.left}" y1="${margin.top + plotH}" x2="${margin.left + plotW}" y2="${margin.top + plotH}" stroke="black"/></g>`);
  parts.push(`<g class="axis axis-y" data-scale="${y.kind}"><line x1="${margin.left}" y1="${margin.top}" x2="${margin.left}" y2="${margin.top + plotH}" stroke="black"/></g>`);
  parts.push(`<text x="${margin.left + plotW / 2}" y="${height - 8}" text-anchor="middle">${esc(opts.xLabel)}</text>`);
  parts.push(`<text transform="translate(14,${margin.top + plotH / 2}) rotate(-90)" text-anchor="middle">${esc(opts.yLabel)}</text>`);

  // series + legend
  opts.series.forEach((s, i) => {
    const dash = s.dashed ? ` stroke-dasharray="6 4"` : "";
    const cls = s.cssClass ? ` class="${s.cssClass}"` : "";
    parts.push(`<polyline${cls} fill="none" stroke="${s.color}" stroke-width="1.8"${dash} points="${s.points}"/>`);
    const ly = margin.top + 14 + 16 * i;
    const lx = margin.left + plotW - 150;
    parts.push(`<line x1="${lx}" y1="${ly - 4}" x2="${lx + 22}" y2="${ly - 4}" stroke="${s.color}" stroke-width="1.8"${dash}/>`);
    parts.push(`<text x="${lx + 28}" y="${ly}">${esc(s.label)}</text>`);
  });
  parts.push("</svg>");
  return parts.join("\n");
}

function esc(s: string): string {
  return s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}
