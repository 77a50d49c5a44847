import { existsSync, mkdirSync, readFileSync, readdirSync, writeFileSync } from "node:fs";
import { join } from "node:path";
import { describe, expect, it } from "vitest";
import { column, parseCsv, requireColumn } from "../src/csv.js";
import { RESIDUAL_FLOOR, residualPlot, speedupPlot } from "../src/plots.js";

const FIXTURES = join(__dirname, "fixtures");
const ARTIFACTS = join(__dirname, "..", "..", "artifacts", "acceptance");
const OUT = join(__dirname, "..", "dist-test");

function fixture(name: string) {
  return parseCsv(readFileSync(join(FIXTURES, name), "utf8"));
}

describe("csv", () => {
  it("parses the harness trace contract", () => {
    const t = fixture("trace_small.csv");
    expect(t.columns[0]).toBe("epoch");
    expect(column(t, "suboptimality")).toHaveLength(t.rows.length);
  });

  it("names the missing column", () => {
    const t = fixture("trace_small.csv");
    expect(() => requireColumn(t, "bogus")).toThrow(/missing column "bogus"/);
  });

  it("rejects ragged rows and empty files", () => {
    expect(() => parseCsv("a,b\n1\n")).toThrow(/expected 2 cells/);
    expect(() => parseCsv("")).toThrow(/empty CSV/);
  });
});

describe("speedup plot", () => {
  it("draws the measured curve plus the ideal reference line", () => {
    const svg = speedupPlot(fixture("speedup_small.csv"));
    expect(svg).toContain("<svg");
    expect(svg).toContain('class="ideal-line"');
    expect(svg).toContain("ideal linear");
    mkdirSync(OUT, { recursive: true });
    writeFileSync(join(OUT, "speedup_fixture.svg"), svg);
  });

  it("keeps unreached rows off the curve", () => {
    const svg = speedupPlot(fixture("speedup_unreached.csv"));
    // the unreached P=8 row contributes no vertex: the measured polyline has 3 points
    const measured = svg.match(/points="([^"]+)"/g) ?? [];
    expect(measured.length).toBeGreaterThanOrEqual(2);
    const curve = measured[measured.length - 1];
    expect(curve.split(" ").length).toBe(3);
  });

  it("errors when nothing was reached", () => {
    expect(() =>
      speedupPlot(parseCsv("threads,median_seconds,speedup,reached\n1,nan,nan,0\n")),
    ).toThrow(/no reached rows/);
  });
});

describe("residual plot", () => {
  it("is log-scale in y and clips at the floor", () => {
    const svg = residualPlot([{ label: "vr", table: fixture("trace_small.csv") }]);
    expect(svg).toContain('class="axis axis-y" data-scale="log"');
    expect(svg).toMatch(/1e-\d+/);
    expect(RESIDUAL_FLOOR).toBe(1e-15);
    mkdirSync(OUT, { recursive: true });
    writeFileSync(join(OUT, "residual_fixture.svg"), svg);
  });

  it("overlays several traces with a legend", () => {
    const svg = residualPlot([
      { label: "fast", table: fixture("trace_small.csv") },
      { label: "slow", table: fixture("trace_slow.csv") },
    ]);
    expect(svg).toContain(">fast<");
    expect(svg).toContain(">slow<");
  });

  it("errors on an empty trace instead of writing an empty image", () => {
    const empty = parseCsv(
      "epoch,wall_seconds,objective_tilde,objective_last,suboptimality,lyapunov,max_staleness\n");
    expect(() => residualPlot([{ label: "empty", table: empty }])).toThrow(/empty/);
  });

  it("is a pure function of its inputs", () => {
    const t = fixture("trace_small.csv");
    expect(residualPlot([{ label: "vr", table: t }]))
      .toBe(residualPlot([{ label: "vr", table: t }]));
  });
});

describe("acceptance artifacts from the solver suite", () => {
  const have = existsSync(ARTIFACTS) && readdirSync(ARTIFACTS).length > 0;
  it.skipIf(!have)("renders the exported speedup table", () => {
    const svg = speedupPlot(parseCsv(readFileSync(join(ARTIFACTS, "speedup.csv"), "utf8")));
    expect(svg).toContain('class="ideal-line"');
    mkdirSync(OUT, { recursive: true });
    writeFileSync(join(OUT, "speedup_acceptance.svg"), svg);
  });

  it.skipIf(!have)("renders the exported residual traces on a log axis", () => {
    const names = ["trace_svrg_lockfree.csv", "trace_dsgd.csv", "trace_csgd.csv"];
    const traces = names.map((n) => ({
      label: n.replace("trace_", "").replace(".csv", ""),
      table: parseCsv(readFileSync(join(ARTIFACTS, n), "utf8")),
    }));
    const svg = residualPlot(traces);
    expect(svg).toContain('data-scale="log"');
    mkdirSync(OUT, { recursive: true });
    writeFileSync(join(OUT, "residual_acceptance.svg"), svg);
  });
});
