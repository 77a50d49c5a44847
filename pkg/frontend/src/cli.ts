#!/usr/bin/env node
/** vrsgd-plots: render harness CSVs as SVG.
 *
 *   vrsgd-plots --kind speedup --input speedup.csv --out speedup.svg
 *   vrsgd-plots --kind residual --input a.csv b.csv --labels vr sgd --out r.svg
 */

import { readFileSync, writeFileSync } from "node:fs";
import { basename } from "node:path";
import yargs from "yargs";
import { hideBin } from "yargs/helpers";
import { parseCsv } from "./csv.js";
import { residualPlot, speedupPlot } from "./plots.js";

export function run(argv: string[]): number {
  const args = yargs(argv)
    .option("kind", {
      choices: ["speedup", "residual"] as const,
      demandOption: true,
      describe: "speedup: threads vs t1/tP with the ideal line; residual: log-scale objective gap vs seconds",
    })
    .option("input", {
      type: "string",
      array: true,
      demandOption: true,
      describe: "harness CSV path(s); residual accepts several",
    })
    .option("labels", {
      type: "string",
      array: true,
      describe: "legend labels (default: file names)",
    })
    .option("out", { type: "string", demandOption: true, describe: "output SVG path" })
    .strict()
    .exitProcess(false)
    .parseSync();

  try {
    let svg: string;
    if (args.kind === "speedup") {
      if (args.input.length !== 1) {
        throw new Error("speedup takes exactly one CSV");
      }
      svg = speedupPlot(parseCsv(readFileSync(args.input[0], "utf8")));
    } else {
      const labels = args.labels ?? args.input.map((p) => basename(p, ".csv"));
      if (labels.length !== args.input.length) {
        throw new Error("need one label per input");
      }
      const traces = args.input.map((p, i) => ({
        label: labels[i],
        table: parseCsv(readFileSync(p, "utf8")),
      }));
      svg = residualPlot(traces);
    }
    writeFileSync(args.out, svg);
    console.log(`wrote ${args.out}`);
    return 0;
  } catch (e) {
    console.error(`error: ${(e as Error).message}`);
    return 1;
  }
}

const isMain = process.argv[1] !== undefined &&
  import.meta.url.endsWith(basename(process.argv[1]));
if (isMain) {
  process.exit(run(hideBin(process.argv)));
}
