export { canonicalJson, Float, pyFloatRepr } from "./serialize.js";
export {
  Arity,
  BlocksNode,
  Edge,
  EvidenceSpec,
  labelOf,
  Net,
  NodeFactory,
  NodeKind,
} from "./graph.js";
export { buildDynVar, DynVarHandles, DynVarSpec, Linmap, linmap } from "./dynvar.js";
export { generate, predict, runEngine, train, writeGraph } from "./runner.js";
