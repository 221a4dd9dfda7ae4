/**
 * Ctree walking: decompiler-shaped trees in, shared ast-v1 nodes out.
 *
 * The op-name mapping ships as data (data/kinds.json) because it varies
 * by decompiler version; unmapped ops pass through verbatim and the
 * consumer folds them onto its catch-all label.
 */

import { readFileSync } from "fs";

export interface CtreeNode {
  op: string;
  children?: CtreeNode[];
  /** direct-call target name, when the decompiler resolved one */
  target?: string;
}

export interface AstJsonNode {
  k: string;
  c: AstJsonNode[];
}

export interface KindTable {
  map: Record<string, string>;
  transparent: string[];
  drop: string[];
}

let cachedDefault: KindTable | null = null;

export function defaultKinds(): KindTable {
  if (!cachedDefault) {
    cachedDefault = loadKinds(new URL("../data/kinds.json", import.meta.url));
  }
  return cachedDefault;
}

export function loadKinds(path: URL | string): KindTable {
  const raw = JSON.parse(readFileSync(path, "utf8"));
  return {
    map: raw.map ?? {},
    transparent: raw.transparent ?? [],
    drop: raw.drop ?? [],
  };
}

/**
 * Convert one ctree to the shared node shape.
 *
 * Transparent ops are spliced out when they wrap exactly one child
 * (an expression-statement wrapper); otherwise they fall through to
 * the normal mapping so a malformed tree still exports.
 */
export function walkCtree(node: CtreeNode, kinds: KindTable): AstJsonNode {
  if (typeof node.op !== "string") {
    throw new Error("ctree node has no 'op' string");
  }
  const children = node.children ?? [];
  if (kinds.transparent.includes(node.op) && children.length === 1) {
    return walkCtree(children[0]!, kinds);
  }
  const kept = children.filter((c) => !kinds.drop.includes(c.op));
  return {
    k: kinds.map[node.op] ?? node.op,
    c: kept.map((c) => walkCtree(c, kinds)),
  };
}

/** Resolved call target names in first-use (preorder) order. */
export function collectCallees(root: CtreeNode): string[] {
  const seen = new Set<string>();
  const order: string[] = [];
  const stack: CtreeNode[] = [root];
  while (stack.length > 0) {
    const node = stack.pop()!;
    if (node.op === "cot_call" && typeof node.target === "string" && !seen.has(node.target)) {
      seen.add(node.target);
      order.push(node.target);
    }
    const children = node.children ?? [];
    for (let i = children.length - 1; i >= 0; i--) {
      stack.push(children[i]!);
    }
  }
  return order;
}
