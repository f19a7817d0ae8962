/**
 * Emitted-C agreement: every kernel-grid cell compiles warning-clean
 * and matches the interpreter within 1e-10 absolute.
 *
 * Cells come from cases/grid.json (the same combinations the primary
 * acceptance grid runs); invalid combinations are skipped by the same
 * diagnostics that skip them there. DYNTEN_CVERIFY_LIMIT caps the cell
 * count for quick runs.
 */

import * as assert from "node:assert/strict";
import * as fs from "node:fs";
import * as path from "node:path";
import { HarnessCase, harnessBuildRun, pool, HarnessResult } from "../src/harness";

interface GridCell {
  name: string;
  kernel: string;
  expr: string;
  formats: Record<string, string>;
  assemble: string;
}

const SEED = 1234;

function caseOf(cell: GridCell): HarnessCase {
  const inputs: Record<string, string> = {};
  for (const t of Object.keys(cell.formats)) {
    const isOut = t === "C" || t === "y";
    if (isOut) continue;
    const order = cell.formats[t].split(",").length;
    inputs[t] = order === 2 ? "random:100x100:0.05" : "random:100";
  }
  return {
    name: cell.name,
    expr: cell.expr,
    formats: cell.formats,
    assemble: cell.assemble,
    inputs,
    seed: SEED,
    reps: 1,
  };
}

async function main() {
  const gridPath = path.join(__dirname, "..", "..", "cases", "grid.json");
  let cells: GridCell[] = JSON.parse(fs.readFileSync(gridPath, "utf8"));
  const limit = Number(process.env.DYNTEN_CVERIFY_LIMIT ?? 0);
  if (limit > 0) cells = cells.slice(0, limit);

  const results = await pool(cells, 4, (cell) =>
    harnessBuildRun(caseOf(cell)).then(
      (r) => r,
      (err): HarnessResult => ({
        name: cell.name, pass: false, maxAbsDiff: NaN, medianNs: 0,
        entries: 0, warnings: String(err.message ?? err),
      }),
    ),
  );

  let ran = 0;
  let skipped = 0;
  const failures: string[] = [];
  for (const r of results) {
    if (r.skipped) {
      skipped++;
      continue;
    }
    ran++;
    if (!r.pass) {
      failures.push(`${r.name}: max abs diff ${r.maxAbsDiff}\n${r.warnings}`);
    } else if (r.warnings) {
      failures.push(`${r.name}: compiler warnings:\n${r.warnings}`);
    }
  }
  console.log(`emitted-C agreement: ${ran} cells ran, ${skipped} invalid ` +
              `combinations skipped, ${failures.length} failures`);
  assert.equal(failures.length, 0,
               "cells out of agreement or noisy:\n" + failures.join("\n---\n"));
  if (!limit) assert.ok(ran >= 40, `only ${ran} cells ran`);
  console.log("AGREEMENT SUITE PASSED");
}

main().catch((err) => {
  console.error(err);
  process.exit(1);
});
