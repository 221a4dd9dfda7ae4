/**
 * Session export: every decompilable function becomes one ast-v1 JSONL
 * line, ordered by address. Per-function failures are reported and
 * skipped; they never abort the batch.
 */

import { readFileSync } from "fs";
import {
  AstJsonNode,
  CtreeNode,
  KindTable,
  collectCallees,
  defaultKinds,
  walkCtree,
} from "./walk.js";

export interface SessionFunction {
  address: number;
  name: string;
  /** instruction count, the size proxy for the inlining filter */
  size: number;
  ctree?: CtreeNode | null;
  /** set by the recorder when decompilation failed */
  error?: string;
}

export interface Session {
  binary: string;
  arch: string;
  functions: SessionFunction[];
}

export interface SkipNote {
  name: string;
  address: number;
  reason: string;
}

export interface ExportResult {
  lines: string[];
  skipped: SkipNote[];
}

export class SessionError extends Error {}

export function loadSession(path: string | URL): Session {
  const raw = JSON.parse(readFileSync(path, "utf8"));
  for (const field of ["binary", "arch", "functions"] as const) {
    if (!(field in raw)) {
      throw new SessionError(`session is missing '${field}'`);
    }
  }
  return raw as Session;
}

/** Serialize with the consumer's canonical key order, byte for byte. */
export function recordToLine(
  name: string,
  origin: string,
  arch: string,
  callees: [string, number][],
  root: AstJsonNode,
): string {
  return JSON.stringify({ schema: "ast-v1", name, origin, arch, callees, root });
}

export function exportAll(session: Session, kinds: KindTable = defaultKinds()): ExportResult {
  if (session.arch.toLowerCase() === "mips") {
    throw new SessionError("the decompiler cannot handle MIPS binaries; refusing the session");
  }
  const sizeOf = new Map<string, number>();
  for (const fn of session.functions) {
    sizeOf.set(fn.name, fn.size);
  }

  const ordered = [...session.functions].sort((a, b) => a.address - b.address);
  const lines: string[] = [];
  const skipped: SkipNote[] = [];
  for (const fn of ordered) {
    if (fn.error || !fn.ctree) {
      skipped.push({
        name: fn.name,
        address: fn.address,
        reason: fn.error ?? "no ctree recorded",
      });
      continue;
    }
    try {
      const root = walkCtree(fn.ctree, kinds);
      const callees: [string, number][] = collectCallees(fn.ctree).map((callee) => [
        callee,
        sizeOf.get(callee) ?? 0,
      ]);
      lines.push(recordToLine(fn.name, session.binary, session.arch, callees, root));
    } catch (err) {
      skipped.push({ name: fn.name, address: fn.address, reason: String(err) });
    }
  }
  return { lines, skipped };
}
