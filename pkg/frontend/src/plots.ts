/** The two chart kinds the harness CSVs feed: thread-count speedup curves
 * (with the ideal-linear reference) and log-scale loss-residual-vs-time
 * curves. Pure functions of the parsed tables; nothing is recomputed. */

import { Table, column } from "./csv.js";
import {
  Box,
  DEFAULT_BOX,
  PALETTE,
  Scale,
  Series,
  linearScale,
  logScale,
  polyline,
  renderChart,
} from "./svg.js";

export const RESIDUAL_FLOOR = 1e-15;

export interface NamedTable {
  label: string;
  table: Table;
}

export function speedupPlot(table: Table, box: Box = DEFAULT_BOX): string {
  const threads = column(table, "threads");
  const speedup = column(table, "speedup");
  const reached = column(table, "reached");
  const pts: Array<[number, number]> = [];
  for (let i = 0; i < threads.length; i++) {
    if (reached[i] !== 0 && Number.isFinite(speedup[i])) {
      pts.push([threads[i], speedup[i]]);
    }
  }
  if (pts.length === 0) {
    throw new Error("speedup table has no reached rows to plot");
  }
  const maxT = Math.max(...pts.map((p) => p[0]));
  const maxS = Math.max(maxT, ...pts.map((p) => p[1]));
  const { margin, width, height } = box;
  const x = linearScale(1, maxT, margin.left, width - margin.right);
  const y = linearScale(0, maxS, height - margin.bottom, margin.top);
  const series: Series[] = [
    {
      label: "ideal linear",
      color: "#888888",
      dashed: true,
      cssClass: "ideal-line",
      points: polyline([x(1), x(maxT)], [y(1), y(maxT)]),
    },
    {
      label: "measured",
      color: PALETTE[0],
      points: polyline(pts.map((p) => x(p[0])), pts.map((p) => y(p[1]))),
    },
  ];
  return renderChart({
    box,
    title: "Speedup vs worker count",
    xLabel: "threads",
    yLabel: "speedup (t1 / tP)",
    x,
    y,
    series,
  });
}

export function residualPlot(traces: NamedTable[], box: Box = DEFAULT_BOX): string {
  if (traces.length === 0) {
    throw new Error("no traces given");
  }
  const curves: Array<{ label: string; xs: number[]; ys: number[] }> = [];
  for (const { label, table } of traces) {
    const wall = column(table, "wall_seconds");
    const sub = column(table, "suboptimality");
    if (wall.length === 0) {
      throw new Error(`trace "${label}" is empty; nothing to plot`);
    }
    const xs: number[] = [];
    const ys: number[] = [];
    for (let i = 0; i < wall.length; i++) {
      if (Number.isFinite(sub[i])) {
        xs.push(wall[i]);
        ys.push(Math.max(sub[i], RESIDUAL_FLOOR));
      }
    }
    if (xs.length === 0) {
      throw new Error(`trace "${label}" has no finite residuals`);
    }
    curves.push({ label, xs, ys });
  }
  const allX = curves.flatMap((c) => c.xs);
  const allY = curves.flatMap((c) => c.ys);
  const { margin, width, height } = box;
  const x = linearScale(0, Math.max(...allX), margin.left, width - margin.right);
  const yLo = Math.max(Math.min(...allY), RESIDUAL_FLOOR);
  const yHi = Math.max(...allY);
  const y: Scale = logScale(yLo, yHi > yLo ? yHi : yLo * 10,
                            height - margin.bottom, margin.top);
  const series: Series[] = curves.map((c, i) => ({
    label: c.label,
    color: PALETTE[i % PALETTE.length],
    points: polyline(c.xs.map(x), c.ys.map((v) => y(v))),
  }));
  return renderChart({
    box,
    title: "Training loss residual vs time",
    xLabel: "seconds",
    yLabel: "objective - optimum",
    x,
    y,
    series,
  });
}
