import json
import sys

_I64_MIN = -(1 << 63)
_I64_MAX = (1 << 63) - 1


def _dec(o):
    t = o["t"]
    if t == "none":
        return None
    v = o["v"]
    if t in ("bool", "int", "float", "str"):
        return v
    if t == "list":
        return [_dec(x) for x in v]
    if t == "tuple":
        return tuple(_dec(x) for x in v)
    if t == "dict":
        return {_dec(k): _dec(x) for k, x in v}
    raise ValueError("unknown literal tag " + t)


def _enc(v, depth=0):
    if depth > 100:
        raise ValueError("value nested too deeply")
    if v is None:
        return {"t": "none"}
    if isinstance(v, bool):
        return {"t": "bool", "v": v}
    if isinstance(v, int):
        if not _I64_MIN <= v <= _I64_MAX:
            raise OverflowError("integer outside the 64-bit range")
        return {"t": "int", "v": v}
    if isinstance(v, float):
        if v != v or v in (float("inf"), float("-inf")):
            raise ValueError("non-finite float")
        return {"t": "float", "v": v}
    if isinstance(v, str):
        return {"t": "str", "v": v}
    if isinstance(v, list):
        return {"t": "list", "v": [_enc(x, depth + 1) for x in v]}
    if isinstance(v, tuple):
        return {"t": "tuple", "v": [_enc(x, depth + 1) for x in v]}
    if isinstance(v, dict):
        return {"t": "dict", "v": [[_enc(k, depth + 1), _enc(x, depth + 1)] for k, x in v.items()]}
    raise TypeError("unsupported return type " + type(v).__name__)


def _main():
    mode, func, result_path = sys.argv[1], sys.argv[2], sys.argv[3]
    with open("candidate.py") as f:
        src = f.read()
    ns = {"__name__": "candidate"}
    try:
        exec(compile(src, "candidate.py", "exec"), ns)
    except BaseException as e:
        out = {"status": "load_error", "kind": type(e).__name__, "message": str(e)}
    else:
        fn = ns.get(func)
        if not callable(fn):
            out = {"status": "load_error", "kind": "NameError", "message": "function %s is not defined" % func}
        elif mode == "load":
            out = {"status": "loaded"}
        else:
            with open("input.json") as f:
                args = [_dec(a) for a in json.load(f)]
            try:
                out = {"status": "value", "value": _enc(fn(*args))}
            except BaseException as e:
                out = {"status": "error", "kind": type(e).__name__, "message": str(e)[:500]}
    with open(result_path, "w") as f:
        json.dump(out, f)


_main()
