/**
 * Canonical JSON writer matching the core library's graph documents
 * byte for byte: two-space indent, lexicographically sorted keys, a
 * trailing newline, and Python-repr float formatting.
 *
 * JSON numbers are ambiguous between int and float, so float-valued
 * fields are wrapped in `Float` by the document builder.
 */

export class Float {
  constructor(public readonly value: number) {}
}

/** Shortest round-trip decimal form as produced by Python's repr(). */
export function pyFloatRepr(x: number): string {
  if (!Number.isFinite(x)) {
    throw new Error(`cannot serialise non-finite float ${x}`);
  }
  if (Number.isInteger(x) && Math.abs(x) < 1e16) {
    if (Object.is(x, -0)) return "-0.0";
    return `${x.toFixed(0)}.0`;
  }
  let s: string;
  const abs = Math.abs(x);
  if (abs !== 0 && (abs >= 1e16 || abs < 1e-4)) {
    s = x.toExponential();
  } else {
    s = String(x);
  }
  const eIdx = s.indexOf("e");
  if (eIdx < 0) return s;
  // pad the exponent to two digits with an explicit sign
  const mantissa = s.slice(0, eIdx);
  let exp = s.slice(eIdx + 1);
  let sign = "+";
  if (exp.startsWith("-") || exp.startsWith("+")) {
    sign = exp[0];
    exp = exp.slice(1);
  }
  if (exp.length < 2) exp = "0" + exp;
  return `${mantissa}e${sign}${exp}`;
}

function serialiseAtom(value: unknown): string {
  if (value === null) return "null";
  if (value instanceof Float) return pyFloatRepr(value.value);
  if (typeof value === "boolean") return value ? "true" : "false";
  if (typeof value === "number") {
    if (!Number.isInteger(value)) {
      throw new Error(`bare number ${value} is not an integer; wrap floats in Float`);
    }
    return value.toFixed(0);
  }
  if (typeof value === "string") return JSON.stringify(value);
  throw new Error(`cannot serialise ${typeof value}`);
}

function serialise(value: unknown, indent: number): string {
  const pad = " ".repeat(indent);
  const inner = " ".repeat(indent + 2);
  if (Array.isArray(value)) {
    if (value.length === 0) return "[]";
    const items = value.map((v) => inner + serialise(v, indent + 2));
    return "[\n" + items.join(",\n") + "\n" + pad + "]";
  }
  if (value !== null && typeof value === "object" && !(value instanceof Float)) {
    const keys = Object.keys(value as object).sort();
    if (keys.length === 0) return "{}";
    const items = keys.map(
      (k) => `${inner}${JSON.stringify(k)}: ${serialise((value as any)[k], indent + 2)}`
    );
    return "{\n" + items.join(",\n") + "\n" + pad + "}";
  }
  return serialiseAtom(value);
}

export function canonicalJson(doc: unknown): string {
  return serialise(doc, 0) + "\n";
}
