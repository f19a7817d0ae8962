/**
 * Build-and-run harness for emitted kernels.
 *
 * Each case compiles a kernel (either a given C source or one emitted
 * through the `dynten` CLI with its self-contained loader driver),
 * feeds it the same inputs the interpreter saw (structure dumps written
 * by `dynten run --dump-inputs`), and compares outputs entry by entry
 * against the interpreter's .tns result. Timing is the median over the
 * requested repetitions, as reported by the driver itself.
 */

import { execFile } from "node:child_process";
import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";
import { promisify } from "node:util";

const run = promisify(execFile);

export interface HarnessCase {
  name?: string;
  expr?: string;
  formats?: Record<string, string>;
  assemble?: string;
  schemas?: string[];
  inputs?: Record<string, string>;
  seed?: number;
  kernel?: string;    // precompiled kernel source; emitted when absent
  expected?: string;  // expected .tns; produced by the interpreter when absent
  reps?: number;
  parallel?: boolean;
}

export interface HarnessResult {
  name: string;
  pass: boolean;
  skipped?: string;
  maxAbsDiff: number;
  medianNs: number;
  entries: number;
  warnings: string;
}

const ABS_TOLERANCE = 1e-10;

function compileArgs(c: HarnessCase): string[] {
  const args: string[] = ["--expr", c.expr ?? ""];
  for (const [t, levels] of Object.entries(c.formats ?? {})) {
    args.push("--format", `${t}=${levels}`);
  }
  for (const s of c.schemas ?? []) {
    args.push("--schema", s);
  }
  if (c.assemble) args.push("--assemble", c.assemble);
  if (c.parallel) args.push("--parallel");
  if (c.seed !== undefined) args.push("--seed", String(c.seed));
  return args;
}

function inputArgs(c: HarnessCase): string[] {
  const args: string[] = [];
  for (const [t, src] of Object.entries(c.inputs ?? {})) {
    if (!src.startsWith("random:") && !fs.existsSync(src)) {
      throw new Error(`case input ${t}: no such file ${src}`);
    }
    args.push("--input", `${t}=${src}`);
  }
  return args;
}

async function dynten(args: string[]): Promise<{ code: number; out: string; err: string }> {
  try {
    const { stdout, stderr } = await run("dynten", args, { maxBuffer: 1 << 28 });
    return { code: 0, out: stdout, err: stderr };
  } catch (e: any) {
    if (typeof e.code === "number") {
      return { code: e.code, out: e.stdout ?? "", err: e.stderr ?? "" };
    }
    throw e;
  }
}

function parseEntries(text: string): Map<string, number> {
  const out = new Map<string, number>();
  for (const line of text.split("\n")) {
    const parts = line.trim().split(/\s+/);
    if (parts.length < 2) continue;
    out.set(parts.slice(0, -1).join(" "), Number(parts[parts.length - 1]));
  }
  return out;
}

export function maxAbsDiff(a: Map<string, number>, b: Map<string, number>): number {
  let worst = 0;
  const keys = new Set([...a.keys(), ...b.keys()]);
  for (const k of keys) {
    const d = Math.abs((a.get(k) ?? 0) - (b.get(k) ?? 0));
    if (d > worst) worst = d;
  }
  return worst;
}

export async function harnessBuildRun(
  c: HarnessCase,
  workdir?: string,
): Promise<HarnessResult> {
  const name = c.name ?? "case";
  const reps = c.reps ?? 1;
  if (reps < 1) throw new Error(`${name}: repetition count must be >= 1`);
  const wd = workdir ?? fs.mkdtempSync(path.join(os.tmpdir(), "cverify-"));
  fs.mkdirSync(wd, { recursive: true });

  // interpreter reference run; also writes the input structure dumps
  const expectedPath = path.join(wd, "expected.tns");
  const ref = await dynten([
    "run", ...compileArgs(c), ...inputArgs(c),
    "--output", expectedPath, "--dump-inputs", wd,
  ]);
  if (ref.code === 1) {
    return { name, pass: true, skipped: ref.err.trim().split("\n").pop(),
             maxAbsDiff: 0, medianNs: 0, entries: 0, warnings: "" };
  }
  if (ref.code !== 0) {
    throw new Error(`${name}: interpreter run failed:\n${ref.err}`);
  }
  const expectedFile = c.expected ?? expectedPath;
  if (!fs.existsSync(expectedFile)) {
    throw new Error(`${name}: expected output ${expectedFile} does not exist`);
  }

  // kernel source: given, or emitted with the loader driver appended
  const kernelPath = path.join(wd, "kernel.c");
  if (c.kernel) {
    if (!fs.existsSync(c.kernel)) {
      throw new Error(`${name}: kernel source ${c.kernel} does not exist`);
    }
    fs.copyFileSync(c.kernel, kernelPath);
  } else {
    const emit = await dynten([
      "emit-c", "--harness", ...compileArgs(c), "--output", kernelPath,
    ]);
    if (emit.code !== 0) {
      throw new Error(`${name}: emit-c failed:\n${emit.err}`);
    }
  }

  // native build; compiler output is reported verbatim on failure and
  // collected as `warnings` on success (the suite requires it empty)
  const bin = path.join(wd, "kernel");
  const cc = process.env.CC ?? "cc";
  const ccArgs = ["-std=c11", "-O2", "-Wall"];
  if (c.parallel) ccArgs.push("-fopenmp");
  let warnings = "";
  try {
    const res = await run(cc, [...ccArgs, kernelPath, "-o", bin]);
    warnings = (res.stderr ?? "").trim();
  } catch (e: any) {
    throw new Error(`${name}: compile failure:\n${e.stderr ?? e.message}`);
  }

  // the driver prints its expected dump order in the usage message
  const usage = await new Promise<string>((resolve) => {
    execFile(bin, [], (_err, _out, stderr) => resolve(stderr));
  });
  const m = usage.match(/usage: \S+ (.*?) ?\[reps\]/);
  if (!m) throw new Error(`${name}: cannot parse driver usage: ${usage}`);
  const dumpArgs = m[1]
    .split(/\s+/)
    .filter(Boolean)
    .map((f) => path.join(wd, f));

  const exec = await run(bin, [...dumpArgs, String(reps)],
                         { maxBuffer: 1 << 28 });
  const med = (exec.stderr ?? "").match(/median_ns (\d+)/);
  if (!med) throw new Error(`${name}: driver reported no timing: ${exec.stderr}`);

  const got = parseEntries(exec.stdout);
  const want = parseEntries(fs.readFileSync(expectedFile, "utf8"));
  const diff = maxAbsDiff(got, want);
  return {
    name,
    pass: diff <= ABS_TOLERANCE,
    maxAbsDiff: diff,
    medianNs: Number(med[1]),
    entries: new Set([...got.keys(), ...want.keys()]).size,
    warnings,
  };
}

export async function pool<T, R>(
  items: T[],
  width: number,
  fn: (item: T) => Promise<R>,
): Promise<R[]> {
  const results: R[] = new Array(items.length);
  let next = 0;
  async function worker() {
    for (;;) {
      const i = next++;
      if (i >= items.length) return;
      results[i] = await fn(items[i]);
    }
  }
  await Promise.all(Array.from({ length: width }, worker));
  return results;
}
