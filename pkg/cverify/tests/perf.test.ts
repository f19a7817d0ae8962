/**
 * Performance smoke (informational threshold): emitted-C SpMV over a
 * BST-stored matrix with ~10^5 nonzeros should land within 10x of the
 * CSR kernel. Hardware varies, so breaching the threshold prints a
 * warning rather than failing; correctness of both kernels is asserted.
 */

import * as assert from "node:assert/strict";
import { harnessBuildRun } from "../src/harness";

const SPMV = "forall(i) forall(j) y(i) += A(i,j) * x(j)";
const INPUTS = { A: "random:1000x1000:0.1", x: "random:1000" };  // ~1e5 nnz

async function main() {
  const bst = await harnessBuildRun({
    name: "spmv_bst_1e5", expr: SPMV, inputs: INPUTS, seed: 99, reps: 9,
    formats: { A: "dense,bst", x: "dense", y: "dense" },
  });
  const csr = await harnessBuildRun({
    name: "spmv_csr_1e5", expr: SPMV, inputs: INPUTS, seed: 99, reps: 9,
    formats: { A: "dense,compressed", x: "dense", y: "dense" },
  });
  assert.ok(bst.pass && !bst.warnings, `bst kernel: diff ${bst.maxAbsDiff}`);
  assert.ok(csr.pass && !csr.warnings, `csr kernel: diff ${csr.maxAbsDiff}`);
  const ratio = bst.medianNs / csr.medianNs;
  console.log(`CSR median ${csr.medianNs} ns, BST median ${bst.medianNs} ns, ` +
              `ratio ${ratio.toFixed(2)}x`);
  if (ratio > 10) {
    console.warn(`WARNING: BST/CSR ratio ${ratio.toFixed(2)}x exceeds the ` +
                 "informational 10x threshold (not a failure)");
  }
  console.log("PERF SMOKE DONE");
}

main().catch((err) => {
  console.error(err);
  process.exit(1);
});
