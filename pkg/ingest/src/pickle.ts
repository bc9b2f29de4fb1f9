/**
 * A constrained pickle virtual machine for the citation benchmark files.
 *
 * Supports protocols 0-2 plus the handful of protocol-4 opcodes modern
 * writers emit, and refuses anything outside a fixed constructor registry:
 * numpy arrays and dtypes, scipy CSR matrices, collections.defaultdict, the
 * builtin list factory, and the _codecs.encode byte round-trip. Unknown
 * globals or opcodes fail closed.
 */

const MARK_SENTINEL = Symbol("mark");

/** Little-endian typed payload reconstructed from a numpy array pickle. */
export interface NdArray {
  kind: "ndarray";
  shape: number[];
  dtype: string;
  data: Uint8Array;
}

/** Compressed sparse rows payload reconstructed from a scipy pickle. */
export interface CsrPayload {
  kind: "csr";
  shape: [number, number];
  data: NdArray;
  indices: NdArray;
  indptr: NdArray;
}

interface Dtype {
  kind: "dtype";
  code: string;
  byteorder: string;
}

interface Placeholder {
  kind: "placeholder";
  ctor: string;
  args: unknown[];
  state?: unknown;
}

type Value = unknown;

const GLOBAL_ALIASES: Record<string, string> = {
  "numpy.core.multiarray._reconstruct": "ndarray_reconstruct",
  "numpy._core.multiarray._reconstruct": "ndarray_reconstruct",
  "numpy.ndarray": "ndarray_class",
  "numpy.dtype": "dtype_class",
  "numpy.core.multiarray.scalar": "numpy_scalar",
  "numpy._core.multiarray.scalar": "numpy_scalar",
  "scipy.sparse.csr.csr_matrix": "csr_class",
  "scipy.sparse._csr.csr_matrix": "csr_class",
  "scipy.sparse.csr_matrix.csr_matrix": "csr_class",
  "collections.defaultdict": "defaultdict_class",
  "__builtin__.list": "list_factory",
  "builtins.list": "list_factory",
  "_codecs.encode": "codecs_encode",
};

function latin1Bytes(text: string): Uint8Array {
  const out = new Uint8Array(text.length);
  for (let i = 0; i < text.length; i++) {
    const code = text.charCodeAt(i);
    if (code > 0xff) {
      throw new PickleError(`non-latin1 code point ${code} in byte-carrying string`);
    }
    out[i] = code;
  }
  return out;
}

function asBytes(value: Value, what: string): Uint8Array {
  if (value instanceof Uint8Array) return value;
  if (typeof value === "string") return latin1Bytes(value);
  throw new PickleError(`${what}: expected bytes, got ${typeof value}`);
}

export class PickleError extends Error {}

const DTYPE_SIZES: Record<string, number> = {
  f4: 4, f8: 8, i1: 1, i2: 2, i4: 4, i8: 8,
  u1: 1, u2: 2, u4: 4, u8: 8, b1: 1,
};

function normalizeDtype(code: string): string {
  // numpy spells e.g. '<f4', '|b1', 'float32'; strip order prefix, map names
  const named: Record<string, string> = {
    float32: "f4", float64: "f8", int8: "i1", int16: "i2", int32: "i4",
    int64: "i8", uint8: "u1", uint16: "u2", uint32: "u4", uint64: "u8",
    bool: "b1",
  };
  let body = code;
  if (body.length && "<>|=".includes(body[0])) {
    if (body[0] === ">") throw new PickleError("big-endian arrays are not supported");
    body = body.slice(1);
  }
  if (named[body]) return named[body];
  if (!(body in DTYPE_SIZES)) throw new PickleError(`unsupported dtype ${code}`);
  return body;
}

function applyReduce(ctor: string, args: unknown[]): Value {
  switch (ctor) {
    case "ndarray_reconstruct":
      return { kind: "placeholder", ctor: "ndarray", args } satisfies Placeholder;
    case "dtype_class": {
      const code = args[0];
      const text = typeof code === "string" ? code : new TextDecoder().decode(asBytes(code, "dtype code"));
      return { kind: "dtype", code: normalizeDtype(text), byteorder: "=" } satisfies Dtype;
    }
    case "defaultdict_class":
      return new Map<Value, Value>();
    case "codecs_encode": {
      const [text, encoding] = args as [string, string];
      if (encoding !== "latin1" && encoding !== "latin-1") {
        throw new PickleError(`unsupported byte encoding ${encoding}`);
      }
      return latin1Bytes(text);
    }
    case "numpy_scalar": {
      const dtype = args[0] as Dtype;
      const bytes = asBytes(args[1], "numpy scalar");
      return readScalar(dtype.code, bytes);
    }
    default:
      throw new PickleError(`constructor ${ctor} is not callable via REDUCE`);
  }
}

function readScalar(code: string, bytes: Uint8Array): number | bigint {
  const view = new DataView(bytes.buffer, bytes.byteOffset, bytes.byteLength);
  switch (code) {
    case "f4": return view.getFloat32(0, true);
    case "f8": return view.getFloat64(0, true);
    case "i4": return view.getInt32(0, true);
    case "i8": return view.getBigInt64(0, true);
    case "u1": return view.getUint8(0);
    default: throw new PickleError(`unsupported scalar dtype ${code}`);
  }
}

function buildNdarray(ph: Placeholder, state: unknown): NdArray {
  if (!Array.isArray(state) || state.length < 5) {
    throw new PickleError("unexpected ndarray state");
  }
  const [, shape, dtype, fortran, raw] = state as [number, number[], Dtype, boolean, Value];
  if (fortran) throw new PickleError("Fortran-ordered arrays are not supported");
  if (!dtype || (dtype as Dtype).kind !== "dtype") {
    throw new PickleError("ndarray state lacks a dtype");
  }
  let data: Uint8Array;
  if (Array.isArray(raw)) {
    // object arrays would land here; only plain numeric lists are meaningful
    throw new PickleError("object ndarrays are not supported");
  } else {
    data = asBytes(raw, "ndarray data");
  }
  const size = shape.reduce((a, b) => a * b, 1) * DTYPE_SIZES[(dtype as Dtype).code];
  if (data.length !== size) {
    throw new PickleError(`ndarray payload is ${data.length} bytes, expected ${size}`);
  }
  return { kind: "ndarray", shape: [...shape], dtype: (dtype as Dtype).code, data };
}

function buildCsr(state: unknown): CsrPayload {
  if (!(state instanceof Map)) throw new PickleError("unexpected csr state");
  const shape = state.get("_shape") as number[] | undefined;
  const data = state.get("data") as NdArray | undefined;
  const indices = state.get("indices") as NdArray | undefined;
  const indptr = state.get("indptr") as NdArray | undefined;
  if (!shape || !data || !indices || !indptr) {
    throw new PickleError("csr state is missing _shape/data/indices/indptr");
  }
  return { kind: "csr", shape: [shape[0], shape[1]], data, indices, indptr };
}

/** Decode one pickled object from the buffer. */
export function loads(buf: Uint8Array): Value {
  const view = new DataView(buf.buffer, buf.byteOffset, buf.byteLength);
  const utf8 = new TextDecoder("utf-8", { fatal: true });
  let pos = 0;
  const stack: Value[] = [];
  const memo: Value[] = [];

  const u8 = () => buf[pos++];
  const u16 = () => { const v = view.getUint16(pos, true); pos += 2; return v; };
  const u32 = () => { const v = view.getUint32(pos, true); pos += 4; return v; };
  const i32 = () => { const v = view.getInt32(pos, true); pos += 4; return v; };
  const f64be = () => { const v = view.getFloat64(pos, false); pos += 8; return v; };
  const take = (n: number) => { const v = buf.subarray(pos, pos + n); pos += n; return v; };
  const line = () => {
    const end = buf.indexOf(0x0a, pos);
    if (end < 0) throw new PickleError("unterminated text line");
    const text = utf8.decode(buf.subarray(pos, end));
    pos = end + 1;
    return text;
  };
  const popMark = (): Value[] => {
    const idx = stack.lastIndexOf(MARK_SENTINEL);
    if (idx < 0) throw new PickleError("no MARK on stack");
    const items = stack.splice(idx + 1);
    stack.pop();
    return items;
  };
  const setItems = (target: Value, items: Value[]) => {
    if (!(target instanceof Map)) throw new PickleError("SETITEMS on a non-dict");
    for (let i = 0; i + 1 < items.length; i += 2) target.set(items[i], items[i + 1]);
  };

  for (;;) {
    if (pos >= buf.length) throw new PickleError("ran off the end of the stream");
    const op = u8();
    switch (op) {
      case 0x80: { const proto = u8(); if (proto > 5) throw new PickleError(`bad protocol ${proto}`); break; }
      case 0x95: pos += 8; break;                       // FRAME: length hint only
      case 0x2e: {                                      // STOP
        if (stack.length !== 1) throw new PickleError("stack not singular at STOP");
        return stack[0];
      }
      case 0x28: stack.push(MARK_SENTINEL); break;      // MARK
      case 0x30: stack.pop(); break;                    // POP
      case 0x32: stack.push(stack[stack.length - 1]); break;  // DUP

      // integers and floats
      case 0x4a: stack.push(i32()); break;              // BININT
      case 0x4b: stack.push(u8()); break;               // BININT1
      case 0x4d: stack.push(u16()); break;              // BININT2
      case 0x49: {                                      // INT (text)
        const text = line();
        stack.push(text === "01" ? true : text === "00" ? false : parseInt(text, 10));
        break;
      }
      case 0x4c: {                                      // LONG (text)
        const text = line().replace(/L$/, "");
        stack.push(Number(BigInt(text)));
        break;
      }
      case 0x8a: {                                      // LONG1
        const n = u8();
        const bytes = take(n);
        let value = 0n;
        for (let i = n - 1; i >= 0; i--) value = (value << 8n) | BigInt(bytes[i]);
        if (n > 0 && bytes[n - 1] & 0x80) value -= 1n << BigInt(8 * n);
        stack.push(Number(value));
        break;
      }
      case 0x47: stack.push(f64be()); break;            // BINFLOAT
      case 0x46: stack.push(parseFloat(line())); break; // FLOAT (text)
      case 0x4e: stack.push(null); break;               // NONE
      case 0x88: stack.push(true); break;               // NEWTRUE
      case 0x89: stack.push(false); break;              // NEWFALSE

      // strings and bytes
      case 0x55: { const n = u8(); stack.push(latin1ToString(take(n))); break; }   // SHORT_BINSTRING
      case 0x54: { const n = u32(); stack.push(latin1ToString(take(n))); break; }  // BINSTRING
      case 0x53: {                                      // STRING (text, quoted)
        const text = line();
        stack.push(text.replace(/^['"]|['"]$/g, ""));
        break;
      }
      case 0x58: { const n = u32(); stack.push(utf8.decode(take(n))); break; }     // BINUNICODE
      case 0x8c: { const n = u8(); stack.push(utf8.decode(take(n))); break; }      // SHORT_BINUNICODE
      case 0x56: stack.push(line()); break;             // UNICODE (text)
      case 0x43: { const n = u8(); stack.push(new Uint8Array(take(n))); break; }   // SHORT_BINBYTES
      case 0x42: { const n = u32(); stack.push(new Uint8Array(take(n))); break; }  // BINBYTES

      // memo
      case 0x70: line(); memo[memo.length] = stack[stack.length - 1]; break;       // PUT (text)
      case 0x71: memo[u8()] = stack[stack.length - 1]; break;                      // BINPUT
      case 0x72: memo[u32()] = stack[stack.length - 1]; break;                     // LONG_BINPUT
      case 0x94: memo.push(stack[stack.length - 1]); break;                        // MEMOIZE
      case 0x67: stack.push(memo[parseInt(line(), 10)]); break;                    // GET (text)
      case 0x68: stack.push(memo[u8()]); break;                                    // BINGET
      case 0x6a: stack.push(memo[u32()]); break;                                   // LONG_BINGET

      // tuples
      case 0x29: stack.push([]); break;                 // EMPTY_TUPLE
      case 0x85: stack.push([stack.pop()]); break;      // TUPLE1
      case 0x86: { const b = stack.pop(); const a = stack.pop(); stack.push([a, b]); break; }
      case 0x87: { const c = stack.pop(); const b = stack.pop(); const a = stack.pop(); stack.push([a, b, c]); break; }
      case 0x74: stack.push(popMark()); break;          // TUPLE

      // lists
      case 0x5d: stack.push([]); break;                 // EMPTY_LIST
      case 0x6c: stack.push(popMark()); break;          // LIST
      case 0x61: {                                      // APPEND
        const item = stack.pop();
        (stack[stack.length - 1] as Value[]).push(item);
        break;
      }
      case 0x65: {                                      // APPENDS
        const items = popMark();
        (stack[stack.length - 1] as Value[]).push(...items);
        break;
      }

      // dicts
      case 0x7d: stack.push(new Map()); break;          // EMPTY_DICT
      case 0x64: {                                      // DICT
        const items = popMark();
        const map = new Map();
        for (let i = 0; i + 1 < items.length; i += 2) map.set(items[i], items[i + 1]);
        stack.push(map);
        break;
      }
      case 0x73: {                                      // SETITEM
        const value = stack.pop();
        const key = stack.pop();
        (stack[stack.length - 1] as Map<Value, Value>).set(key, value);
        break;
      }
      case 0x75: {                                      // SETITEMS
        const items = popMark();
        setItems(stack[stack.length - 1], items);
        break;
      }

      // objects
      case 0x63: {                                      // GLOBAL
        const module = line();
        const name = line();
        const alias = GLOBAL_ALIASES[`${module}.${name}`];
        if (!alias) throw new PickleError(`refusing unknown global ${module}.${name}`);
        stack.push({ kind: "global", alias } as const);
        break;
      }
      case 0x93: {                                      // STACK_GLOBAL
        const name = stack.pop() as string;
        const module = stack.pop() as string;
        const alias = GLOBAL_ALIASES[`${module}.${name}`];
        if (!alias) throw new PickleError(`refusing unknown global ${module}.${name}`);
        stack.push({ kind: "global", alias } as const);
        break;
      }
      case 0x52: {                                      // REDUCE
        const args = stack.pop() as Value[];
        const fn = stack.pop() as { kind: string; alias: string };
        if (!fn || (fn as { kind?: string }).kind !== "global") {
          throw new PickleError("REDUCE callee is not a registered global");
        }
        stack.push(applyReduce(fn.alias, args));
        break;
      }
      case 0x81: {                                      // NEWOBJ
        const args = stack.pop() as Value[];
        const cls = stack.pop() as { kind: string; alias: string };
        if (cls.alias === "csr_class") {
          stack.push({ kind: "placeholder", ctor: "csr", args } satisfies Placeholder);
        } else if (cls.alias === "defaultdict_class") {
          stack.push(new Map());
        } else {
          throw new PickleError(`NEWOBJ of unsupported class ${cls.alias}`);
        }
        break;
      }
      case 0x62: {                                      // BUILD
        const state = stack.pop();
        const target = stack.pop();
        const ph = target as Placeholder;
        if (ph && ph.kind === "placeholder" && ph.ctor === "ndarray") {
          stack.push(buildNdarray(ph, state));
        } else if (ph && ph.kind === "placeholder" && ph.ctor === "csr") {
          stack.push(buildCsr(state));
        } else if (target && (target as Dtype).kind === "dtype") {
          // dtype state carries the byte order at index 1
          const order = Array.isArray(state) ? (state as Value[])[1] : "=";
          if (order === ">") throw new PickleError("big-endian arrays are not supported");
          (target as Dtype).byteorder = typeof order === "string" ? order : "=";
          stack.push(target);
        } else if (target instanceof Map && state instanceof Map) {
          for (const [k, v] of state) target.set(k, v);
          stack.push(target);
        } else {
          throw new PickleError("BUILD on an unsupported object");
        }
        break;
      }
      default:
        throw new PickleError(`unsupported opcode 0x${op.toString(16)} at ${pos - 1}`);
    }
  }
}

function latin1ToString(bytes: Uint8Array): string {
  let out = "";
  for (let i = 0; i < bytes.length; i++) out += String.fromCharCode(bytes[i]);
  return out;
}

// typed accessors ----------------------------------------------------------

export function ndarrayToNumbers(arr: NdArray): number[] {
  const view = new DataView(arr.data.buffer, arr.data.byteOffset, arr.data.byteLength);
  const total = arr.shape.reduce((a, b) => a * b, 1);
  const out = new Array<number>(total);
  const readers: Record<string, (i: number) => number> = {
    f4: (i) => view.getFloat32(4 * i, true),
    f8: (i) => view.getFloat64(8 * i, true),
    i1: (i) => view.getInt8(i),
    i2: (i) => view.getInt16(2 * i, true),
    i4: (i) => view.getInt32(4 * i, true),
    i8: (i) => Number(view.getBigInt64(8 * i, true)),
    u1: (i) => view.getUint8(i),
    u2: (i) => view.getUint16(2 * i, true),
    u4: (i) => view.getUint32(4 * i, true),
    u8: (i) => Number(view.getBigUint64(8 * i, true)),
    b1: (i) => view.getUint8(i),
  };
  const read = readers[arr.dtype];
  if (!read) throw new PickleError(`no reader for dtype ${arr.dtype}`);
  for (let i = 0; i < total; i++) out[i] = read(i);
  return out;
}

/** Densify a CSR payload into a row-major Float64Array. */
export function csrToDense(m: CsrPayload): { rows: number; cols: number; values: Float64Array } {
  const [rows, cols] = m.shape;
  const indptr = ndarrayToNumbers(m.indptr);
  const indices = ndarrayToNumbers(m.indices);
  const data = ndarrayToNumbers(m.data);
  const values = new Float64Array(rows * cols);
  for (let r = 0; r < rows; r++) {
    for (let k = indptr[r]; k < indptr[r + 1]; k++) {
      values[r * cols + indices[k]] = data[k];
    }
  }
  return { rows, cols, values };
}
