/**
 * Script-style construction of the variance-dynamics sequence model,
 * following the top-down idiom: a linmap helper assembles weights,
 * products and sums; proxies stand in for the sources and log precisions
 * until the delays are wired, then resolve in one pass.
 *
 * The resulting net serialises to the same bytes as the engine's own
 * builder, so it can be trained and analysed interchangeably.
 */

import { BlocksNode, labelOf, Net, NodeFactory } from "./graph.js";

export interface Linmap {
  sums: BlocksNode[];
  weights: Array<Array<BlocksNode | null>>;
}

export function linmap(
  f: NodeFactory,
  inputs: BlocksNode[],
  outdim: number,
  mask: boolean[][] | null,
  weightMean: BlocksNode,
  weightLogPrec: BlocksNode
): Linmap {
  const sums: BlocksNode[] = [];
  const weights: Array<Array<BlocksNode | null>> = [];
  for (let i = 0; i < outdim; i++) {
    const sum = f.getSumNV("sum");
    const row: Array<BlocksNode | null> = [];
    for (let j = 0; j < inputs.length; j++) {
      if (mask === null || mask[i][j]) {
        const a = f.getGaussian("a", weightMean, weightLogPrec);
        const p = f.getProdV("prod", a, inputs[j]);
        f.net.connect(sum, p, "summand");
        row.push(a);
      } else {
        row.push(null);
      }
    }
    sums.push(sum);
    weights.push(row);
  }
  return { sums, weights };
}

export interface DynVarSpec {
  xdim: number;
  sdim: number;
  tdim: number;
  mask?: boolean[][] | null;
}

export interface DynVarHandles {
  net: Net;
  a: Linmap;
  b: Linmap;
  s: BlocksNode[];
  u: BlocksNode[];
  vu: BlocksNode[];
  vx: BlocksNode[];
  x: BlocksNode[];
}

export function buildDynVar(spec: DynVarSpec): DynVarHandles {
  const { xdim, sdim, tdim } = spec;
  const mask =
    spec.mask ?? Array.from({ length: xdim }, () => Array.from({ length: sdim }, () => true));

  const net = new Net(tdim);
  const f = new NodeFactory(net);
  const c0 = f.getConstant("const0", 0.0);
  const cn5 = f.getConstant("constneg5", -5.0);

  const pu = Array.from({ length: sdim }, (_, j) => f.getProxy("pu", labelOf("u", j)));
  const b = linmap(f, pu, sdim, null, c0, c0);

  const s: BlocksNode[] = [];
  const u: BlocksNode[] = [];
  const vu: BlocksNode[] = [];
  for (let j = 0; j < sdim; j++) {
    const vuj = f.getGaussian("vu", c0, cn5);
    const du = f.getDelayV("du", c0, b.sums[j]);
    const uj = f.getGaussianV(labelOf("u", j), du, vuj);
    const ps = f.getProxy("ps", labelOf("s", j));
    const ds = f.getDelayV("ds", c0, ps);
    const sj = f.getGaussianV(labelOf("s", j), ds, uj);
    vu.push(vuj);
    u.push(uj);
    s.push(sj);
  }

  const a = linmap(f, s, xdim, mask, c0, c0);
  const vx: BlocksNode[] = [];
  const x: BlocksNode[] = [];
  for (let i = 0; i < xdim; i++) {
    const vxi = f.getGaussian("vx", c0, cn5);
    x.push(f.getGaussianV("x", a.sums[i], vxi));
    vx.push(vxi);
  }

  net.connectProxies();
  net.modelMeta = modelMeta("dynvar", spec, mask, { a, b, s, u, vu, vx, x });
  return { net, a, b, s, u, vu, vx, x };
}

function modelMeta(
  type: string,
  spec: DynVarSpec,
  mask: boolean[][],
  h: Omit<DynVarHandles, "net">
): Record<string, unknown> {
  const ids = (nodes: BlocksNode[]) => nodes.map((n) => n.id);
  const rows = (weights: Array<Array<BlocksNode | null>>) =>
    weights.map((row) => row.map((w) => (w === null ? null : w.id)));
  return {
    type,
    xdim: spec.xdim,
    sdim: spec.sdim,
    tdim: spec.tdim,
    mask: mask.map((row) => row.map(Boolean)),
    data_map: ids(h.x),
    nodes: {
      a: rows(h.a.weights),
      a_sums: ids(h.a.sums),
      b: rows(h.b.weights),
      b_sums: ids(h.b.sums),
      s: ids(h.s),
      u: ids(h.u),
      vu: ids(h.vu),
      vx: ids(h.vx),
      x: ids(h.x),
      mu_u: null,
    },
  };
}
