"""Command-line driver: ``coopgain <command> [channel] [options]``.

Channels are JSON spec files (or the name of a bundled one: mod3,
mod3_marginalized, trivial_identity). Exit codes: 0 ok, 1 domain error,
2 usage or parse error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
import time
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .bounds import BoundOptions, CoutBudget, baseline_sum_capacity, inner_sum_rate
from .channel import Costs, Independent, JointConditional, StateMac, policy_to_dict
from .gain import check_class, functional_representation, slope_profile
from .gaussian import GaussianParams, gaussian_baseline, gaussian_gain_bound, gaussian_slope_profile
from .prob import MAX_ALPHABET
from .sim import CodeConfig, run_trials

BUNDLED = ("mod3", "mod3_marginalized", "trivial_identity")
AXES = ("S1", "S2", "X1", "X2", "Y")


class SpecError(ValueError):
    """Malformed channel spec file (exit code 2)."""


# ---------------------------------------------------------------- spec files


def _locate(path: str) -> str:
    if path in BUNDLED:
        return resources.files("coopgain").joinpath("data", f"{path}.json").read_text()
    p = Path(path)
    if not p.is_file():
        raise SpecError(f"{path}: no such file (bundled channels: {', '.join(BUNDLED)})")
    return p.read_text()


def parse_channel_spec(path: str) -> StateMac:
    return channel_from_text(_locate(path), source=str(path))


def channel_from_text(text: str, source: str = "<spec>") -> StateMac:
    if not text.strip():
        raise SpecError(f"{source}: empty file")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise SpecError(f"{source}: line {e.lineno}, column {e.colno}: {e.msg}") from e
    if not isinstance(doc, dict):
        raise SpecError(f"{source}: top level must be an object")

    def need(key):
        if key not in doc:
            raise SpecError(f"{source}: missing field '{key}'")
        return doc[key]

    sizes = need("sizes")
    try:
        dims = tuple(int(sizes[a]) for a in AXES)
    except (KeyError, TypeError, ValueError) as e:
        raise SpecError(f"{source}: field 'sizes' needs integer entries for {', '.join(AXES)}") from e
    for a, k in zip(AXES, dims):
        if not 1 <= k <= MAX_ALPHABET:
            raise SpecError(f"{source}: field 'sizes.{a}' = {k} outside 1..{MAX_ALPHABET}")

    def entries(key, width):
        out = []
        for i, row in enumerate(need(key)):
            if not isinstance(row, list) or len(row) != width:
                raise SpecError(f"{source}: field '{key}'[{i}] must be a list of {width} numbers")
            *idx, prob = row
            if any(not isinstance(v, int) for v in idx):
                raise SpecError(f"{source}: field '{key}'[{i}] has non-integer indices")
            out.append((tuple(idx), float(prob), i))
        return out

    ps = np.zeros(dims[:2])
    for idx, prob, i in entries("state_law", 3):
        if not all(0 <= v < d for v, d in zip(idx, dims[:2])):
            raise SpecError(f"{source}: field 'state_law'[{i}] index {list(idx)} out of range")
        ps[idx] += prob
    w = np.zeros(dims)
    for idx, prob, i in entries("kernel", 6):
        if not all(0 <= v < d for v, d in zip(idx, dims)):
            raise SpecError(f"{source}: field 'kernel'[{i}] index {list(idx)} out of range")
        w[idx] += prob

    costs = None
    if doc.get("costs") is not None:
        c = doc["costs"]
        try:
            costs = Costs(np.array(c["b1"], float), np.array(c["b2"], float), float(c["B1"]), float(c["B2"]))
        except (KeyError, TypeError, ValueError) as e:
            raise SpecError(f"{source}: field 'costs': {e}") from e
    try:
        return StateMac(ps, w, costs=costs, name=str(doc.get("name", "custom")))
    except ValueError as e:
        raise SpecError(f"{source}: {e}") from e


def channel_to_dict(mac: StateMac) -> dict:
    doc = {
        "name": mac.name,
        "sizes": dict(zip(AXES, map(int, mac.sizes))),
        "state_law": [[*map(int, i), float(mac.state_law[i])] for i in zip(*np.nonzero(mac.state_law))],
        "kernel": [[*map(int, i), float(mac.kernel[i])] for i in zip(*np.nonzero(mac.kernel))],
    }
    if mac.costs is not None:
        c = mac.costs
        doc["costs"] = {"b1": c.b1.tolist(), "b2": c.b2.tolist(), "B1": c.B1, "B2": c.B2}
    return doc


def channel_to_text(mac: StateMac) -> str:
    """JSON text with one sparse entry per line."""
    doc = channel_to_dict(mac)
    parts = []
    for k, v in doc.items():
        if k in ("state_law", "kernel"):
            rows = ",\n    ".join(json.dumps(r) for r in v)
            parts.append(f'  "{k}": [\n    {rows}\n  ]')
        else:
            parts.append(f"  {json.dumps(k)}: {json.dumps(v)}")
    return "{\n" + ",\n".join(parts) + "\n}\n"


# ---------------------------------------------------------------- reports


def _canon(x):
    if isinstance(x, dict):
        return {str(k): _canon(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_canon(v) for v in x]
    if isinstance(x, np.ndarray):
        return _canon(x.tolist())
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def make_report(command: str, inputs: dict, result: dict, seed, wall: float) -> dict:
    blob = json.dumps(_canon(inputs), sort_keys=True).encode()
    return {
        "command": command,
        "inputs": _canon(inputs),
        "inputs_digest": hashlib.sha256(blob).hexdigest(),
        "result": _canon(result),
        "wall_clock_s": wall,
        "version": __version__,
        "seed": seed,
    }


def _fmt(v) -> str:
    if isinstance(v, bool) or v is None:
        return str(v).lower()
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        return f"{v:.6g}"
    if isinstance(v, list):
        return "[" + ", ".join(_fmt(u) for u in v) + "]"
    return str(v)


def emit_report(report: dict, fmt: str = "table", out=None) -> str:
    """Render a report; writes to ``out`` when given and returns the text."""
    res = report["result"]
    if fmt == "json":
        text = json.dumps(report, indent=1, sort_keys=True) + "\n"
    elif fmt == "csv":
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        if "rows" in res:
            wr.writerow(["h", "gain_bits", "ratio"])
            for h, g, r in res["rows"]:
                wr.writerow([repr(float(h)), repr(float(g)), repr(float(r))])
        else:
            wr.writerow(["key", "value"])
            for k in sorted(res):
                if not isinstance(res[k], (dict, list)):
                    wr.writerow([k, res[k]])
        text = buf.getvalue()
    elif fmt == "table":
        lines = [f"{report['command']}  (coopgain {report['version']}, digest {report['inputs_digest'][:12]})"]
        for k, v in res.items():
            if k == "rows":
                lines.append(f"{'h':>14} {'gain_bits':>14} {'ratio':>14}")
                lines += [f"{_fmt(h):>14} {_fmt(g):>14} {_fmt(r):>14}" for h, g, r in v]
            elif not isinstance(v, dict):
                lines.append(f"  {k:<22} {_fmt(v)}")
        text = "\n".join(lines) + "\n"
    else:
        raise ValueError(f"unknown format {fmt!r}")
    if out is not None:
        out.write(text)
    return text


# ---------------------------------------------------------------- commands


def _opts(a) -> BoundOptions:
    return BoundOptions(starts=a.starts, seed=a.seed)


def cmd_capacity(a):
    mac = parse_channel_spec(a.channel)
    b = baseline_sum_capacity(mac, a.tau, _opts(a))
    return channel_to_dict(mac), {"tau": a.tau, "sum_capacity_bits": b.value,
                                  "policy": policy_to_dict(b.achieving_policy), **b.optimizer_report}


def cmd_inner(a):
    mac = parse_channel_spec(a.channel)
    b = inner_sum_rate(mac, a.tau, CoutBudget(a.cout1, a.cout2), _opts(a))
    base = baseline_sum_capacity(mac, a.tau, _opts(a)).value
    return channel_to_dict(mac), {"tau": a.tau, "cout": [a.cout1, a.cout2], "inner_sum_rate_bits": b.value,
                                  "baseline_bits": base, "gain_bits": b.value - base,
                                  "slacks": b.constraint_slacks, "policy": policy_to_dict(b.achieving_policy)}


def cmd_check(a):
    mac = parse_channel_spec(a.channel)
    r = check_class(mac, a.tau, _opts(a))
    d = r.to_dict()
    pi = r.witness_p1.conditional(mac)
    pairs = {tuple(np.unravel_index(np.argmax(pi[s]), pi.shape[2:])) for s in np.ndindex(pi.shape[:2])}
    point = np.allclose(pi.max(axis=(2, 3)), 1.0)
    d["witness"] = list(map(int, pairs.pop())) if point and len(pairs) == 1 else None
    return channel_to_dict(mac), d


def cmd_slope(a):
    mac = parse_channel_spec(a.channel)
    sp = slope_profile(mac, a.tau, (a.v1, a.v2), a.h0, a.halvings, _opts(a))
    ratio = sp.ratios[-1] / sp.ratios[0] if sp.ratios[0] else math.inf
    return channel_to_dict(mac), {"tau": a.tau, "verdict": sp.verdict, "final_over_initial": ratio,
                                  "rows": [list(r) for r in sp.rows()]}


def _sim_policy(a, mac):
    if a.policy == "uniform":
        return Independent(np.full(mac.nX1, 1 / mac.nX1), np.full(mac.nX2, 1 / mac.nX2))
    try:
        t = np.array(json.loads(Path(a.policy).read_text()), float)
    except (OSError, ValueError) as e:
        raise SpecError(f"{a.policy}: cannot read policy table ({e})") from e
    if t.shape == (mac.nX1, mac.nX2):
        t = np.broadcast_to(t, (mac.nS1, mac.nS2) + t.shape).copy()
    return JointConditional(t)


def cmd_simulate(a):
    mac = parse_channel_spec(a.channel)
    cfg = CodeConfig(mac, _sim_policy(a, mac), a.n, (a.r1, a.r2), CoutBudget(a.cout1, a.cout2),
                     delta=a.delta, eps_dec=a.eps, tau=a.tau, seed=a.seed, trials=a.trials,
                     search_cap=a.search_cap, threads=a.threads)
    res = run_trials(cfg).to_dict()
    return {"channel": channel_to_dict(mac), "policy": policy_to_dict(cfg.policy)}, res


def cmd_gaussian(a):
    p = GaussianParams(a.p1, a.p2, a.noise, (a.v1, a.v2))
    sp = gaussian_slope_profile(p, a.tau, a.h0, a.halvings, a.factor)
    extra = {f"gain_at_{h:g}": gaussian_gain_bound(p, a.tau, h) for h in (1e-6, 1e-8)}
    return {"params": vars(p)}, {"tau": a.tau, "baseline_bits": gaussian_baseline(p), **extra,
                                 "verdict": sp.verdict, "rows": [list(r) for r in sp.rows()]}


def cmd_frl(a):
    try:
        doc = json.loads(Path(a.kernel).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise SpecError(f"{a.kernel}: {e}") from e
    k = np.array(doc["kernel"] if isinstance(doc, dict) else doc, float)
    fr = functional_representation(k)
    err = float(np.max(np.abs(fr.reconstruct()[:, : k.shape[1]] - k))) if fr.size else 0.0
    return {"kernel": k}, {"U": fr.size, "p_u": fr.p_u, "g": fr.g, "max_reconstruction_error": err}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="coopgain", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, channel=True, tau="0"):
        if channel:
            p.add_argument("channel", help="spec file or bundled name (" + ", ".join(BUNDLED) + ")")
        p.add_argument("--tau", default=tau)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--starts", type=int, default=32)
        p.add_argument("--format", choices=("table", "json", "csv"), default="table")
        p.add_argument("--threads", type=int, default=int(os.environ.get("COOPGAIN_THREADS", "1")))
        return p

    common(sub.add_parser("capacity", help="no-cooperation sum-capacity")).set_defaults(fn=cmd_capacity)
    p = common(sub.add_parser("inner-bound", help="cooperation inner bound on the sum-rate"))
    p.add_argument("--cout1", type=float, default=0.0)
    p.add_argument("--cout2", type=float, default=0.0)
    p.set_defaults(fn=cmd_inner)
    common(sub.add_parser("check-class", help="exact class-membership check")).set_defaults(fn=cmd_check)
    p = common(sub.add_parser("slope", help="gain/h profile as h -> 0"))
    p.add_argument("--v1", type=float, default=1.0)
    p.add_argument("--v2", type=float, default=1.0)
    p.add_argument("--h0", type=float, default=2**-6)
    p.add_argument("--halvings", type=int, default=10)
    p.set_defaults(fn=cmd_slope)
    p = common(sub.add_parser("simulate", help="Monte Carlo run of the coding scheme"))
    for flag, typ, dflt in (("--n", int, 200), ("--r1", float, 0.5), ("--r2", float, 0.5), ("--cout1", float, 0.0),
                            ("--cout2", float, 0.0), ("--delta", float, 0.1), ("--eps", float, 0.1),
                            ("--trials", int, 100), ("--search-cap", int, 2**20)):
        p.add_argument(flag, type=typ, default=dflt)
    p.add_argument("--policy", default="uniform", help="'uniform' or a JSON file with a joint p(x1,x2[|s]) table")
    p.set_defaults(fn=cmd_simulate)
    p = common(sub.add_parser("gaussian", help="closed-form Gaussian fading bounds"), channel=False)
    for flag, dflt in (("--p1", 1.0), ("--p2", 1.0), ("--noise", 1.0), ("--v1", 0.5), ("--v2", 0.5),
                       ("--h0", 1e-2), ("--factor", 10.0)):
        p.add_argument(flag, type=float, default=dflt)
    p.add_argument("--halvings", type=int, default=6, help="number of ladder steps K")
    p.set_defaults(fn=cmd_gaussian)
    p = common(sub.add_parser("frl", help="functional representation of a kernel p(x|s)"), channel=False)
    p.add_argument("kernel", help="JSON file holding a row-stochastic (S, X) array")
    p.set_defaults(fn=cmd_frl)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        a = ap.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    t0 = time.perf_counter()
    try:
        inputs, result = a.fn(a)
    except SpecError as e:
        print(f"coopgain: error: {e}", file=sys.stderr)
        return 2
    except (ValueError, ArithmeticError) as e:
        print(f"coopgain: {a.command}: {e}", file=sys.stderr)
        return 1
    flags = {k: v for k, v in vars(a).items() if k not in ("fn", "format", "threads")}
    report = make_report(a.command, {"flags": flags, **inputs}, result, a.seed, time.perf_counter() - t0)
    emit_report(report, a.format, sys.stdout)
    return 0


if __name__ == "__main__":
    sys.exit(main())
