import { spawnSync } from "child_process";
import { mkdtempSync, readFileSync, rmSync } from "fs";
import { tmpdir } from "os";
import { join } from "path";
import { afterAll, describe, expect, it } from "vitest";

import { main } from "../src/cli.js";
import { SessionError, exportAll, loadSession, recordToLine } from "../src/export.js";
import { collectCallees, defaultKinds, walkCtree } from "../src/walk.js";

const SESSION = new URL("../fixtures/session.json", import.meta.url);
const GOLDEN = new URL("../fixtures/golden.jsonl", import.meta.url);

const session = loadSession(SESSION);
const result = exportAll(session);

describe("fixture export", () => {
  it("matches the golden JSONL byte for byte", () => {
    const text = result.lines.map((line) => line + "\n").join("");
    expect(text).toBe(readFileSync(GOLDEN, "utf8"));
  });

  it("orders functions by address regardless of session order", () => {
    const names = result.lines.map((line) => JSON.parse(line).name);
    expect(names).toEqual(["clamp", "crc_update", "set_limit", "parse_hdr", "tbl_init_µ"]);
  });

  it("skips failed functions without aborting", () => {
    expect(result.skipped).toEqual([
      {
        name: "broken_fn",
        address: 0x10f0,
        reason: "decompilation failed: call analysis limit reached",
      },
    ]);
  });

  it("emits an empty callee list for leaf functions", () => {
    const clamp = JSON.parse(result.lines[0]!);
    expect(clamp.callees).toEqual([]);
  });

  it("takes callee sizes from the session, zero for externals", () => {
    const setLimit = JSON.parse(result.lines[2]!);
    expect(setLimit.callees).toEqual([
      ["clamp", 12],
      ["log", 0],
    ]);
  });

  it("emits exotic ops verbatim", () => {
    const parseHdr = result.lines[3]!;
    expect(parseHdr).toContain('"k":"cot_cast"');
    expect(parseHdr).toContain('"k":"cot_memref"');
  });

  it("splices expression wrappers and drops markers", () => {
    for (const line of result.lines) {
      expect(line).not.toContain("cit_expr");
      expect(line).not.toContain("cit_label");
    }
  });
});

describe("walk rules", () => {
  it("maps do loops onto while", () => {
    const node = walkCtree(
      { op: "cit_do", children: [{ op: "cit_block" }, { op: "cot_ne" }] },
      defaultKinds(),
    );
    expect(node.k).toBe("while");
  });

  it("keeps a transparent op with an unexpected child count", () => {
    const node = walkCtree(
      { op: "cit_expr", children: [{ op: "cot_var" }, { op: "cot_var" }] },
      defaultKinds(),
    );
    expect(node.k).toBe("cit_expr");
    expect(node.c).toHaveLength(2);
  });

  it("collects call targets in first-use order, once each", () => {
    const tree = {
      op: "cit_block",
      children: [
        { op: "cot_call", target: "b", children: [{ op: "cot_call", target: "a" }] },
        { op: "cot_call", target: "a" },
      ],
    };
    expect(collectCallees(tree)).toEqual(["b", "a"]);
  });

  it("rejects nodes without an op", () => {
    expect(() => walkCtree({} as any, defaultKinds())).toThrow("no 'op'");
  });

  it("the mapping table is swappable data", () => {
    const custom = { map: { cit_if: "other" }, transparent: [], drop: [] };
    expect(walkCtree({ op: "cit_if" }, custom).k).toBe("other");
  });
});

describe("session handling", () => {
  it("refuses MIPS sessions", () => {
    expect(() => exportAll({ binary: "a.bin", arch: "mips", functions: [] })).toThrow(
      SessionError,
    );
  });

  it("a malformed ctree skips only its own function", () => {
    const out = exportAll({
      binary: "b.bin",
      arch: "x86",
      functions: [
        { address: 1, name: "bad", size: 3, ctree: { children: [] } as any },
        { address: 2, name: "good", size: 4, ctree: { op: "cit_return" } },
      ],
    });
    expect(out.lines).toHaveLength(1);
    expect(JSON.parse(out.lines[0]!).name).toBe("good");
    expect(out.skipped[0]!.name).toBe("bad");
    expect(out.skipped[0]!.reason).toContain("no 'op'");
  });

  it("serializes in the consumer's canonical key order", () => {
    const line = recordToLine("f", "o.bin", "x86", [["g", 7]], { k: "block", c: [] });
    expect(line).toBe(
      '{"schema":"ast-v1","name":"f","origin":"o.bin","arch":"x86","callees":[["g",7]],"root":{"k":"block","c":[]}}',
    );
  });
});

describe("cli", () => {
  const dir = mkdtempSync(join(tmpdir(), "ctree-export-"));
  afterAll(() => rmSync(dir, { recursive: true, force: true }));

  it("writes the golden bytes to the output file", () => {
    const out = join(dir, "out.jsonl");
    expect(main([SESSION.pathname, "-o", out])).toBe(0);
    expect(readFileSync(out, "utf8")).toBe(readFileSync(GOLDEN, "utf8"));
  });
});

describe("consumer acceptance", () => {
  it("every emitted line is accepted by the consumer without warnings", () => {
    const script = [
      "import sys",
      "from astsim.ast_core import ast_to_json, json_to_ast",
      "for line in sys.stdin.read().splitlines():",
      "    ast = json_to_ast(line)",
      "    assert ast_to_json(ast) == line, 'not canonical'",
      "print('ok')",
    ].join("\n");
    const proc = spawnSync("python3", ["-W", "error", "-c", script], {
      input: result.lines.map((line) => line + "\n").join(""),
      encoding: "utf8",
    });
    expect(proc.stderr).toBe("");
    expect(proc.status).toBe(0);
    expect(proc.stdout.trim()).toBe("ok");
  });
});
