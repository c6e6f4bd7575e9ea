/**
 * Scripting-side model graph: a net of typed nodes with role-tagged
 * edges, built through a label-uniquifying node factory, and serialised
 * to the engine's graph-document format.
 *
 * The net performs only the structural bookkeeping needed to write a
 * valid document; all numerics (validation, cost evaluation, training)
 * happen in the engine, reached through its command-line interface.
 */

import { Float, canonicalJson } from "./serialize.js";

export type Arity = "scalar" | "vector";

export type NodeKind =
  | "constant"
  | "gaussian"
  | "rectified_gaussian"
  | "mixture_of_gaussians"
  | "dirichlet"
  | "evidence"
  | "sum"
  | "product"
  | "nonlin_exp_square"
  | "nonlin_cut"
  | "delay"
  | "proxy";

export interface EvidenceSpec {
  value: number;
  precision: number;
  fadeSweeps: number;
}

export class BlocksNode {
  value: number | null = null;
  target: string | null = null;
  k: number | null = null;
  evidence: EvidenceSpec | null = null;

  constructor(
    public readonly id: number,
    public readonly kind: NodeKind,
    public readonly label: string,
    public arity: Arity
  ) {}
}

export interface Edge {
  child: number;
  parent: number;
  role: string;
}

export function labelOf(base: string, ...indices: Array<number | string>): string {
  return [base, ...indices.map(String)].join("_");
}

export class Net {
  readonly nodes: BlocksNode[] = [];
  readonly edges: Edge[] = [];
  modelMeta: Record<string, unknown> | null = null;
  private byLabel = new Map<string, BlocksNode>();

  constructor(public readonly sampleCount: number) {
    if (!Number.isInteger(sampleCount) || sampleCount < 1) {
      throw new Error("sampleCount must be a positive integer");
    }
  }

  createNode(
    kind: NodeKind,
    label: string,
    arity: Arity = "scalar",
    extra: { value?: number; target?: string; k?: number; evidence?: EvidenceSpec } = {}
  ): BlocksNode {
    if (!label) throw new Error("node label must be nonempty");
    if (this.byLabel.has(label)) throw new Error(`duplicate label '${label}'`);
    const node = new BlocksNode(this.nodes.length, kind, label, arity);
    if (kind === "constant") {
      if (extra.value === undefined) throw new Error("constant node needs a value");
      node.value = extra.value;
    }
    if (kind === "proxy") {
      if (!extra.target) throw new Error("proxy node needs a target label");
      node.target = extra.target;
    }
    if (kind === "mixture_of_gaussians" || kind === "dirichlet") {
      if (!extra.k || extra.k < 1) throw new Error(`${kind} node needs k >= 1`);
      node.k = extra.k;
    }
    if (kind === "evidence") {
      if (!extra.evidence) throw new Error("evidence node needs a schedule");
      node.evidence = extra.evidence;
    }
    this.nodes.push(node);
    this.byLabel.set(label, node);
    return node;
  }

  connect(child: BlocksNode, parent: BlocksNode, role: string): void {
    this.edges.push({ child: child.id, parent: parent.id, role });
  }

  /** Resolve every proxy's target label; throws on dangling references. */
  connectProxies(): void {
    const dangling: string[] = [];
    for (const node of this.nodes) {
      if (node.kind !== "proxy") continue;
      const target = this.byLabel.get(node.target!);
      if (!target || target === node) {
        dangling.push(node.target!);
        continue;
      }
      node.arity = target.arity;
    }
    if (dangling.length) {
      throw new Error(`unresolved proxy targets: ${[...new Set(dangling)].sort().join(", ")}`);
    }
  }

  toDocument(): Record<string, unknown> {
    const nodes = this.nodes.map((n) => {
      const doc: Record<string, unknown> = {
        id: n.id,
        kind: n.kind,
        label: n.label,
        arity: n.arity,
      };
      if (n.kind === "constant") doc.value = new Float(n.value!);
      if (n.kind === "proxy") doc.target = n.target;
      if (n.k !== null) doc.k = n.k;
      if (n.evidence) {
        doc.evidence = {
          value: new Float(n.evidence.value),
          precision: new Float(n.evidence.precision),
          fade_sweeps: n.evidence.fadeSweeps,
        };
      }
      return doc;
    });
    const doc: Record<string, unknown> = {
      format: "vbblocks-graph-v1",
      sample_count: this.sampleCount,
      nodes,
      edges: this.edges.map((e) => ({ child: e.child, parent: e.parent, role: e.role })),
    };
    if (this.modelMeta) doc.model = this.modelMeta;
    return doc;
  }

  toJson(): string {
    return canonicalJson(this.toDocument());
  }
}

/** Label-uniquifying construction helper mirroring the engine's factory:
 * repeated base labels get deterministic `.n` suffixes. */
export class NodeFactory {
  private counts = new Map<string, number>();

  constructor(public readonly net: Net) {}

  private nextLabel(base: string): string {
    const count = this.counts.get(base) ?? 0;
    this.counts.set(base, count + 1);
    return count === 0 ? base : `${base}.${count}`;
  }

  getConstant(label: string, value: number): BlocksNode {
    return this.net.createNode("constant", this.nextLabel(label), "scalar", { value });
  }

  private variable(
    kind: NodeKind,
    label: string,
    arity: Arity,
    mean: BlocksNode | null,
    variance: BlocksNode
  ): BlocksNode {
    const node = this.net.createNode(kind, this.nextLabel(label), arity);
    if (mean) this.net.connect(node, mean, "mean");
    this.net.connect(node, variance, "variance");
    return node;
  }

  getGaussian(label: string, mean: BlocksNode, variance: BlocksNode): BlocksNode {
    return this.variable("gaussian", label, "scalar", mean, variance);
  }

  getGaussianV(label: string, mean: BlocksNode, variance: BlocksNode): BlocksNode {
    return this.variable("gaussian", label, "vector", mean, variance);
  }

  getRectified(label: string, variance: BlocksNode, arity: Arity = "scalar"): BlocksNode {
    return this.variable("rectified_gaussian", label, arity, null, variance);
  }

  getSum(label: string, arity: Arity = "scalar"): BlocksNode {
    return this.net.createNode("sum", this.nextLabel(label), arity);
  }

  getSumNV(label: string): BlocksNode {
    return this.getSum(label, "vector");
  }

  getProd(label: string, a: BlocksNode, b: BlocksNode, arity: Arity = "scalar"): BlocksNode {
    const node = this.net.createNode("product", this.nextLabel(label), arity);
    this.net.connect(node, a, "factor");
    this.net.connect(node, b, "factor");
    return node;
  }

  getProdV(label: string, a: BlocksNode, b: BlocksNode): BlocksNode {
    return this.getProd(label, a, b, "vector");
  }

  getDelayV(label: string, init: BlocksNode, source: BlocksNode): BlocksNode {
    const node = this.net.createNode("delay", this.nextLabel(label), "vector");
    this.net.connect(node, source, "delay_input");
    this.net.connect(node, init, "delay_init");
    return node;
  }

  getProxy(label: string, targetLabel: string): BlocksNode {
    return this.net.createNode("proxy", this.nextLabel(label), "scalar", {
      target: targetLabel,
    });
  }

  getEvidence(
    label: string,
    target: BlocksNode,
    value: number,
    precision: number,
    fadeSweeps: number
  ): BlocksNode {
    const node = this.net.createNode("evidence", this.nextLabel(label), target.arity, {
      evidence: { value, precision, fadeSweeps },
    });
    this.net.connect(node, target, "mean");
    return node;
  }
}
