/**
 * Thin driver for the engine's command-line interface: the scripting
 * layer builds and serialises models, the engine does all the numerics.
 * The engine command defaults to `python3 -m vbblocks` and can be
 * overridden with the VBBLOCKS_CLI environment variable.
 */

import { spawnSync } from "node:child_process";
import { mkdirSync, writeFileSync } from "node:fs";
import { dirname } from "node:path";

import { Net } from "./graph.js";

export interface RunResult {
  status: number;
  stdout: string;
  stderr: string;
}

function engineCommand(): string[] {
  const custom = process.env.VBBLOCKS_CLI;
  if (custom) return custom.split(" ");
  return ["python3", "-m", "vbblocks"];
}

export function runEngine(args: string[]): RunResult {
  const [cmd, ...prefix] = engineCommand();
  const proc = spawnSync(cmd, [...prefix, ...args], { encoding: "utf-8" });
  if (proc.error) throw proc.error;
  return { status: proc.status ?? -1, stdout: proc.stdout, stderr: proc.stderr };
}

export function writeGraph(net: Net, path: string): void {
  mkdirSync(dirname(path), { recursive: true });
  writeFileSync(path, net.toJson(), "utf-8");
}

export interface TrainOptions {
  sweeps?: number;
  tol?: number;
  patternEvery?: number;
  seed?: number;
  pruneEvery?: number;
}

export function train(
  graphPath: string,
  dataPath: string,
  outDir: string,
  opts: TrainOptions = {}
): RunResult {
  const args = ["train", graphPath, dataPath, outDir];
  if (opts.sweeps !== undefined) args.push("--sweeps", String(opts.sweeps));
  if (opts.tol !== undefined) args.push("--tol", String(opts.tol));
  if (opts.patternEvery !== undefined) args.push("--pattern-every", String(opts.patternEvery));
  if (opts.seed !== undefined) args.push("--seed", String(opts.seed));
  if (opts.pruneEvery !== undefined) args.push("--prune-every", String(opts.pruneEvery));
  return runEngine(args);
}

export function predict(graphPath: string, dataPath: string, outDir: string): RunResult {
  return runEngine(["predict", graphPath, dataPath, outDir]);
}

export function generate(
  outDir: string,
  opts: { xdim?: number; sdim?: number; tdim?: number; seed?: number; motion?: string } = {}
): RunResult {
  const args = ["gen", outDir];
  if (opts.xdim !== undefined) args.push("--xdim", String(opts.xdim));
  if (opts.sdim !== undefined) args.push("--sdim", String(opts.sdim));
  if (opts.tdim !== undefined) args.push("--tdim", String(opts.tdim));
  if (opts.seed !== undefined) args.push("--seed", String(opts.seed));
  if (opts.motion !== undefined) args.push("--motion", opts.motion);
  return runEngine(args);
}
