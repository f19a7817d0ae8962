/** CLI: `dynten-cverify CASE.json` builds, runs, and checks one case. */

import * as fs from "node:fs";
import * as path from "node:path";
import { HarnessCase, harnessBuildRun } from "./harness";

async function main(): Promise<number> {
  const caseFile = process.argv[2];
  if (!caseFile) {
    console.error("usage: dynten-cverify CASE.json");
    return 2;
  }
  const c: HarnessCase = JSON.parse(fs.readFileSync(caseFile, "utf8"));
  // relative input/kernel/expected paths resolve against the case file
  const base = path.dirname(path.resolve(caseFile));
  const rel = (p?: string) =>
    p && !p.startsWith("random:") && !path.isAbsolute(p)
      ? path.join(base, p) : p;
  c.kernel = rel(c.kernel);
  c.expected = rel(c.expected);
  for (const [t, src] of Object.entries(c.inputs ?? {})) {
    c.inputs![t] = rel(src)!;
  }
  c.name = c.name ?? path.basename(caseFile, ".json");

  const result = await harnessBuildRun(c);
  console.log(JSON.stringify(result, null, 1));
  if (result.skipped) {
    console.error(`skipped: ${result.skipped}`);
    return 0;
  }
  if (result.warnings) {
    console.error(`compiler warnings:\n${result.warnings}`);
    return 1;
  }
  if (!result.pass) {
    console.error(`mismatch: max abs diff ${result.maxAbsDiff} exceeds 1e-10`);
    return 1;
  }
  return 0;
}

main().then(
  (code) => process.exit(code),
  (err) => {
    console.error(String(err.message ?? err));
    process.exit(1);
  },
);
