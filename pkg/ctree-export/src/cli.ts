#!/usr/bin/env node
/**
 * Standalone runner: exports a recorded decompiler session to ast-v1
 * JSONL. Inside the host tool the same exportAll() is called with a
 * live session object instead.
 *
 *   ctree-export session.json [-o out.jsonl] [--kinds table.json]
 */

import { writeFileSync } from "fs";
import { exportAll, loadSession } from "./export.js";
import { defaultKinds, loadKinds } from "./walk.js";

function usage(): never {
  console.error("usage: ctree-export <session.json> [-o out.jsonl] [--kinds table.json]");
  process.exit(2);
}

export function main(argv: string[]): number {
  let sessionPath: string | null = null;
  let outPath: string | null = null;
  let kindsPath: string | null = null;
  for (let i = 0; i < argv.length; i++) {
    const arg = argv[i]!;
    if (arg === "-o" || arg === "--out") {
      outPath = argv[++i] ?? usage();
    } else if (arg === "--kinds") {
      kindsPath = argv[++i] ?? usage();
    } else if (arg.startsWith("-")) {
      usage();
    } else if (sessionPath === null) {
      sessionPath = arg;
    } else {
      usage();
    }
  }
  if (sessionPath === null) {
    usage();
  }

  const session = loadSession(sessionPath);
  const kinds = kindsPath ? loadKinds(kindsPath) : defaultKinds();
  const { lines, skipped } = exportAll(session, kinds);
  for (const note of skipped) {
    const addr = "0x" + note.address.toString(16);
    console.error(`skip ${note.name}@${addr}: ${note.reason}`);
  }

  const text = lines.map((line) => line + "\n").join("");
  if (outPath) {
    writeFileSync(outPath, text);
    console.error(`wrote ${lines.length} functions (${skipped.length} skipped) to ${outPath}`);
  } else {
    process.stdout.write(text);
  }
  return 0;
}

const entry = process.argv[1];
if (entry && import.meta.url === new URL(`file://${entry}`).href) {
  try {
    process.exit(main(process.argv.slice(2)));
  } catch (err) {
    console.error(`error: ${err instanceof Error ? err.message : err}`);
    process.exit(1);
  }
}
