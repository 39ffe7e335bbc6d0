"""Command-line front end: bound tables, family build/verify, simulations, hashing.

Exit codes: 0 success, 1 usage error, 2 verification failure, 3 build failure.
Patterns are comma-separated 0-based user indices.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

from cfsched import bounds
from cfsched.codes import build_verified_family, decode, greedy_encode
from cfsched.core import ActivityPattern, CodeParams, deserialize_family, serialize_family
from cfsched.covering import DEFAULT_PATTERN_CAP, first_uncovered, minimal_family_size
from cfsched.errors import BuildExhausted, BuildFailed, CfschedError, Uncovered
from cfsched.phash import (
    DEFAULT_LAMBDA,
    DEFAULT_MAX_DISPLACEMENT,
    parse_feedback,
    phash_build_retry,
    phash_eval_many,
    phash_rate_experiment,
)
from cfsched.rng import fresh_seed
from cfsched.sim import CODES, DEFAULT_TRIALS, empirical_vs_eq25, run_trials

MANIFEST_VERSION = 1

EXIT_OK, EXIT_USAGE, EXIT_VERIFY, EXIT_BUILD = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _bits(x) -> str:
    return "n/a" if x is None else f"{x:.1f}"


def _seed(args) -> int:
    seed = args.seed if args.seed is not None else fresh_seed()
    print(f"seed={seed}", file=sys.stderr)
    return seed


def _emit_rows(rows: list[dict], args, columns=bounds.CSV_COLUMNS):
    if args.format == "json":
        text = json.dumps(rows, indent=2) + "\n"
    elif args.format == "csv" or getattr(args, "out", None):
        text = bounds.write_csv(rows)
    else:
        text = "".join("  ".join(f"{c}={_cell(r[c])}" for c in columns) + "\n" for r in rows)
    if getattr(args, "out", None):
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def _cell(v) -> str:
    if v is None:
        return "n/a"
    return str(v) if isinstance(v, int) else f"{v:.1f}"


# ---------------------------------------------------------------------------
# bounds


def cmd_bounds(args) -> int:
    rep = bounds.bound_report(args.n, args.k, args.b, args.m, multislot=args.multislot)
    vals = rep.values()
    if args.format == "json":
        out = {"n": rep.n, "k": rep.k, "b": rep.b, "m": rep.m, "regime": rep.regime, **vals}
        print(json.dumps(out, indent=2))
    elif args.format == "csv":
        sys.stdout.write(bounds.write_csv([bounds.report_row(rep)]))
    else:
        print(f"n={rep.n} k={rep.k} b={rep.b} m={rep.m} regime={rep.regime}")
        for name, v in vals.items():
            print(f"  {name:24s} {_cell(v)}")
    return EXIT_OK


def cmd_tradeoff(args) -> int:
    rows = bounds.tradeoff_table(args.n, args.k, args.b_min, args.b_max, args.step)
    _emit_rows(rows, args)
    return EXIT_OK


def cmd_multislot(args) -> int:
    m_set = [int(x) for x in args.m_list.split(",") if x.strip()]
    _emit_rows(bounds.multislot_table(args.n, args.k, m_set), args)
    return EXIT_OK


def cmd_table1(args) -> int:
    seed = _seed(args)
    rows = [r._asdict() for r in bounds.table1_factors()]
    for beta in bounds.TABLE1_BETAS:
        b = math.ceil(beta * args.k)
        rep = phash_rate_experiment(args.n, args.k, b, args.trials, seed, workers=args.threads)
        rows.append({"beta": beta, "method": "phash (measured)", "bits_per_key": rep.mean_bits_per_key,
                     "source": f"k={args.k}, {args.trials} trials"})
    rows.sort(key=lambda r: r["beta"])
    if args.format == "json":
        print(json.dumps({"seed": seed, "rows": rows}, indent=2))
    elif args.format == "csv":
        print("beta,method,bits_per_key,source")
        for r in rows:
            print(f"{r['beta']!r},{r['method']},{r['bits_per_key']!r},{r['source']}")
    else:
        print(f"{'beta':>5}  {'method':<17} {'bits/key':>8}  source")
        for r in rows:
            print(f"{r['beta']:5.2f}  {r['method']:<17} {r['bits_per_key']:8.2f}  {r['source']}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# families


def _manifest_path(family_path: str, given: str | None) -> Path:
    return Path(given) if given else Path(str(family_path) + ".json")


def cmd_build(args) -> int:
    params = CodeParams(args.n, args.k, args.b, args.m)
    seed = _seed(args)
    try:
        vf = build_verified_family(
            params, seed, max_rounds=args.max_rounds, epsilon=args.epsilon, T=args.T,
            trim=args.trim, cap=args.cap, workers=args.threads,
        )
    except BuildFailed as exc:
        print(f"build failed: {exc}", file=sys.stderr)
        return EXIT_BUILD
    Path(args.out).write_bytes(serialize_family(vf.family))
    manifest = {
        "format_version": MANIFEST_VERSION,
        "params": {"n": params.n, "k": params.k, "b": params.b, "m": params.m},
        "seed": seed,
        "epsilon": args.epsilon,
        "max_rounds": args.max_rounds,
        "round": vf.round,
        "T_drawn": vf.T_drawn,
        "T": vf.family.T,
        "trimmed": args.trim,
        "certified": True,
        "family_file": Path(args.out).name,
    }
    _manifest_path(args.out, args.manifest).write_text(json.dumps(manifest, indent=2) + "\n")
    print(f"T={vf.family.T} round={vf.round} fixed_bits={math.ceil(math.log2(vf.family.T)) if vf.family.T > 1 else 0} certified")
    return EXIT_OK


def _load_instance(args):
    family = deserialize_family(Path(args.family).read_bytes())
    mpath = _manifest_path(args.family, args.manifest)
    p = {"n": family.n, "b": family.b, "k": None, "m": 1}
    if mpath.exists():
        manifest = json.loads(mpath.read_text())
        if manifest.get("format_version") != MANIFEST_VERSION:
            raise UsageError(
                f"manifest version {manifest.get('format_version')} != supported {MANIFEST_VERSION}"
            )
        p.update(manifest["params"])
    if getattr(args, "k", None) is not None:
        p["k"] = args.k
    if getattr(args, "m", None) is not None:
        p["m"] = args.m
    if p["n"] != family.n or p["b"] != family.b:
        raise UsageError(f"manifest (n={p['n']}, b={p['b']}) does not match the family file")
    return family, p


def cmd_verify(args) -> int:
    family, p = _load_instance(args)
    if p["k"] is None:
        raise UsageError("k unknown: pass --k or keep the manifest next to the family")
    params = CodeParams(p["n"], p["k"], p["b"], p["m"])
    witness = first_uncovered(family, params, cap=args.cap, workers=args.threads)
    if witness is not None:
        print(f"uncovered pattern: {witness}")
        return EXIT_VERIFY
    print(f"ok: T={family.T} covers all C({params.n},{params.k}) patterns (m={params.m})")
    return EXIT_OK


def cmd_encode(args) -> int:
    family, p = _load_instance(args)
    pattern = ActivityPattern.parse(args.pattern, family.n)
    try:
        msg = greedy_encode(family, pattern, p["m"])
    except Uncovered as exc:
        print(f"uncovered pattern: {ActivityPattern(exc.pattern)}")
        return EXIT_VERIFY
    print(f"t={msg.index}")
    return EXIT_OK


def cmd_decode(args) -> int:
    family = deserialize_family(Path(args.family).read_bytes())
    print(f"slot={decode(family, args.t, args.user)}")
    return EXIT_OK


def cmd_exact(args) -> int:
    res = minimal_family_size(CodeParams(args.n, args.k, args.b, args.m))
    print(f"T*={res.T}")
    for t, part in enumerate(res.family):
        blocks = " | ".join(",".join(map(str, sorted(s))) for s in part.subsets())
        print(f"  {t}: {blocks}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# experiments


def cmd_simulate(args) -> int:
    b = args.b if args.b is not None else args.k
    params = CodeParams(args.n, args.k, b, args.m)
    seed = _seed(args)
    family = None
    if args.code == "family":
        if args.family:
            family = deserialize_family(Path(args.family).read_bytes())
        else:
            try:
                family = build_verified_family(params, seed, cap=args.cap, workers=args.threads).family
            except BuildFailed as exc:
                print(f"build failed: {exc}", file=sys.stderr)
                return EXIT_BUILD
    rep = run_trials(args.code, params, args.trials, seed, family=family, workers=args.threads, lam=args.lam)
    if args.format == "json":
        print(rep.to_json())
    elif args.format == "csv":
        sys.stdout.write(rep.to_csv())
    else:
        print(f"code={rep.code} n={rep.n} k={rep.k} b={rep.b} m={rep.m} trials={rep.trials} seed={rep.seed}")
        print(f"  collisions     {rep.collision_events}")
        print(f"  uncovered      {rep.uncovered_events}")
        print(f"  fixed rate     {_bits(rep.mean_fixed_bits)} bits")
        print(f"  entropy        {_bits(rep.empirical_entropy_bits)} bits")
        hr = rep.huffman_rate_bits
        print(f"  huffman rate   {'n/a' if hr is None else f'{hr:.3f}'} bits")
    return EXIT_VERIFY if rep.collision_events else EXIT_OK


def cmd_eq25(args) -> int:
    seed = _seed(args)
    tab = empirical_vs_eq25(args.n, args.k, args.b, args.families, seed, m=args.m, T=args.T, workers=args.threads)
    if args.format == "json":
        out = tab._asdict()
        out["rows"] = [r._asdict() for r in tab.rows]
        out["seed"] = seed
        print(json.dumps(out, indent=2))
    elif args.format == "csv":
        sys.stdout.write(tab.to_csv())
    else:
        print(f"p={tab.p:.6f} T={tab.T} families={tab.families} tv={tab.tv_distance:.5f} max|z|={tab.max_abs_z:.2f}")
        for r in tab.rows:
            print(f"  t={r.t:3d} empirical={r.empirical:.5f} predicted={r.predicted:.5f} z={r.z:+.2f}")
        print(f"  t=inf empirical={tab.uncovered / tab.families:.5f} predicted={tab.predicted_uncovered:.5f}")
    return EXIT_OK


def cmd_phash_build(args) -> int:
    pattern = ActivityPattern.parse(args.pattern)
    seed = _seed(args)
    try:
        fb = phash_build_retry(pattern, args.b, seed, args.max_displacement, args.lam, args.m)
    except BuildExhausted as exc:
        print(f"build failed: {exc}", file=sys.stderr)
        return EXIT_BUILD
    if args.out:
        Path(args.out).write_bytes(fb.blob)
    slots = phash_eval_many(parse_feedback(fb.blob), pattern.users).tolist()
    if args.format == "json":
        print(json.dumps({
            "seed": fb.seed, "b": fb.b, "bucket_count": fb.bucket_count,
            "displacements": list(fb.displacements), "bits": fb.bit_length,
            "bits_per_key": fb.bit_length / pattern.k, "blob_hex": fb.blob.hex(),
            "slots": dict(zip(map(str, pattern.users), slots)),
        }, indent=2))
    else:
        print(f"bits={fb.bit_length} bits_per_key={fb.bit_length / pattern.k:.1f} r={fb.bucket_count}")
        print(f"blob={fb.blob.hex()}")
        for u, s in zip(pattern.users, slots):
            print(f"  user {u} -> slot {s}")
    return EXIT_OK


def cmd_phash_rate(args) -> int:
    seed = _seed(args)
    rep = phash_rate_experiment(args.n, args.k, args.b, args.trials, seed, args.lam, workers=args.threads)
    if args.format == "json":
        print(json.dumps({**rep._asdict(), "seed": seed}, indent=2))
    elif args.format == "csv":
        print(",".join(rep._fields))
        print(",".join(map(str, rep)))
    else:
        print(
            f"n={rep.n} k={rep.k} b={rep.b} trials={rep.trials}: mean {rep.mean_bits_per_key:.3f} bits/key"
            f" (sd {rep.std_bits_per_key:.3f}, min {rep.min_bits_per_key:.3f}, max {rep.max_bits_per_key:.3f});"
            f" identification log2(n/b)={rep.identification_bits:.1f} bits (informational)"
        )
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cfsched", description=__doc__.splitlines()[0])
    parser.add_argument("--threads", type=int, default=1, help="worker cap for parallel routines")
    parser.add_argument("--format", choices=("text", "csv", "json"), default="text")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, fn, help_):
        p = sub.add_parser(name, help=help_)
        p.set_defaults(func=fn)
        # accept the global flags after the subcommand too
        p.add_argument("--threads", type=int, default=argparse.SUPPRESS)
        p.add_argument("--format", choices=("text", "csv", "json"), default=argparse.SUPPRESS)
        return p

    def nk(p, b=True, b_required=False):
        p.add_argument("--n", type=int, required=True)
        p.add_argument("--k", type=int, required=True)
        if b:
            p.add_argument("--b", type=int, required=b_required)

    p = add("bounds", cmd_bounds, "bound report for one instance")
    nk(p)
    p.add_argument("--m", type=int)
    p.add_argument("--multislot", action="store_true", help="use the m-per-slot forms even at m=1")

    p = add("tradeoff", cmd_tradeoff, "CSV of bounds against b")
    nk(p, b=False)
    p.add_argument("--b-min", type=int)
    p.add_argument("--b-max", type=int)
    p.add_argument("--step", type=int, default=1)
    p.add_argument("--out")

    p = add("multislot", cmd_multislot, "CSV of bounds against m at b=ceil(k/m)")
    nk(p, b=False)
    p.add_argument("--m-list", default="1,2,3,4,5,10")
    p.add_argument("--out")

    p = add("build", cmd_build, "draw and certify a covering family")
    nk(p, b_required=True)
    p.add_argument("--m", type=int, default=1)
    p.add_argument("--seed", type=int)
    p.add_argument("--epsilon", type=float, default=0.5)
    p.add_argument("--max-rounds", type=int, default=20)
    p.add_argument("--T", type=int)
    p.add_argument("--trim", action="store_true")
    p.add_argument("--cap", type=int, default=DEFAULT_PATTERN_CAP)
    p.add_argument("--out", required=True)
    p.add_argument("--manifest")

    for name, fn, help_ in (
        ("verify", cmd_verify, "exhaustively check a family covers every pattern"),
        ("encode", cmd_encode, "greedy feedback index for a pattern"),
    ):
        p = add(name, fn, help_)
        p.add_argument("family")
        p.add_argument("--manifest")
        p.add_argument("--k", type=int)
        p.add_argument("--m", type=int)
        if name == "verify":
            p.add_argument("--cap", type=int, default=DEFAULT_PATTERN_CAP)
        else:
            p.add_argument("--pattern", required=True, help="comma-separated 0-based users")

    p = add("decode", cmd_decode, "slot of one user under feedback index t")
    p.add_argument("family")
    p.add_argument("--t", type=int, required=True)
    p.add_argument("--user", type=int, required=True)

    p = add("exact", cmd_exact, "minimal family size by exhaustive search")
    nk(p, b_required=True)
    p.add_argument("--m", type=int, default=1)

    p = add("simulate", cmd_simulate, "Monte Carlo run of one feedback code")
    p.add_argument("--code", choices=CODES, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--b", type=int, help="slots (default k)")
    p.add_argument("--m", type=int, default=1)
    p.add_argument("--trials", type=int, default=DEFAULT_TRIALS)
    p.add_argument("--seed", type=int)
    p.add_argument("--family")
    p.add_argument("--lam", type=float, default=DEFAULT_LAMBDA)
    p.add_argument("--cap", type=int, default=DEFAULT_PATTERN_CAP)

    p = add("eq25", cmd_eq25, "greedy index law over fresh random families")
    nk(p, b_required=True)
    p.add_argument("--m", type=int, default=1)
    p.add_argument("--families", type=int, default=DEFAULT_TRIALS)
    p.add_argument("--T", type=int)
    p.add_argument("--seed", type=int)

    p = add("phash-build", cmd_phash_build, "perfect hash feedback for one pattern")
    p.add_argument("--pattern", required=True)
    p.add_argument("--b", type=int, required=True)
    p.add_argument("--m", type=int, default=1)
    p.add_argument("--seed", type=int)
    p.add_argument("--lam", type=float, default=DEFAULT_LAMBDA)
    p.add_argument("--max-displacement", type=int, default=DEFAULT_MAX_DISPLACEMENT)
    p.add_argument("--out")

    p = add("phash-rate", cmd_phash_rate, "mean perfect-hash feedback bits per key")
    nk(p, b_required=True)
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--seed", type=int)
    p.add_argument("--lam", type=float, default=DEFAULT_LAMBDA)

    p = add("table1", cmd_table1, "bits-per-key comparison with a measured hash column")
    p.add_argument("--n", type=int, default=10**6)
    p.add_argument("--k", type=int, default=1024)
    p.add_argument("--trials", type=int, default=5)
    p.add_argument("--seed", type=int)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CfschedError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
