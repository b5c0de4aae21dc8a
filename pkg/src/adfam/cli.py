"""Command-line front end: construct families, check them, run forcing chains.

Exit codes: 0 success or pass, 1 bad configuration or malformed input,
2 construction or rule exhaustion, 3 check failed, 4 check inconclusive.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import random
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from math import comb
from pathlib import Path

from . import checkers as ck
from . import constructions as cons
from . import forcing as fc
from .core import (
    FamilySnapshot,
    SubsetAssignment,
    TreeOrder,
    binary_tree,
    chain_tree,
    dumps,
    family_from_json,
    family_to_json,
    tree_from_json,
    tree_to_json,
)

log = logging.getLogger("adfam")

EXIT_OK, EXIT_CONFIG, EXIT_EXHAUSTED, EXIT_FAIL, EXIT_INCONCLUSIVE = 0, 1, 2, 3, 4
VERDICT_EXIT = {ck.PASS: EXIT_OK, ck.FAIL: EXIT_FAIL, ck.INCONCLUSIVE: EXIT_INCONCLUSIVE}

DESCRIPTIONS = {
    "ad": "pairwise intersections are at most the bound",
    "luzin": "inside each box, few earlier members meet a member",
    "knear": "the unions of the parts share at least the threshold",
    "antiluzin": "some bipartition has unions meeting in fewer points than the bound",
    "tree": "every member is a branch of the tree up to the exception budget",
    "weaktree": "members map injectively to disjoint branches up to the exception budget",
    "linkage": "every k members share many points and every k+1 share few",
    "delta": "a sunflower of the requested size exists among the members",
}


class ConfigError(Exception):
    pass


# ---------------------------------------------------------------------------
# io helpers


def write_atomic(path: str | os.PathLike, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_json(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc


def read_family(path: str) -> FamilySnapshot:
    obj = read_json(path)
    try:
        return family_from_json(obj)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed family file {path}: {exc}") from exc


def read_tree(path: str) -> TreeOrder:
    obj = read_json(path)
    try:
        return tree_from_json(obj.get("tree", obj))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed tree file {path}: {exc}") from exc


def parse_json_arg(text: str | None, what: str):
    if text is None:
        return None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"--{what} is not valid JSON: {exc}") from exc


def random_strings(rng: random.Random, count: int, length: int) -> list[str]:
    if count > 2**length:
        raise ConfigError(f"cannot draw {count} distinct strings of length {length}")
    out: list[str] = []
    seen = set()
    while len(out) < count:
        s = "".join(rng.choice("01") for _ in range(length))
        if s not in seen:
            seen.add(s)
            out.append(s)
    return out


def render(report: dict, fmt: str, check: str | None = None) -> str:
    if fmt == "json":
        return dumps(report)
    rows = [("verdict", report.get("verdict", ""))]
    if check:
        rows.append(("property", DESCRIPTIONS.get(check, check)))
    for k, v in sorted(report.get("budgets", {}).items()):
        rows.append((f"budget.{k}", json.dumps(v, sort_keys=True)))
    rows.append(("seed", str(report.get("seed", ""))))
    rows.append(("witnesses", str(len(report.get("witnesses", [])))))
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["field", "value"])
        w.writerows(rows)
        return buf.getvalue()
    return "".join(f"{k}: {v}\n" for k, v in rows)


# ---------------------------------------------------------------------------
# construct


def _assignment(args, count: int) -> SubsetAssignment:
    raw = parse_json_arg(args.assign, "assign")
    if raw is None:
        return SubsetAssignment.initial_segments(count)
    try:
        return SubsetAssignment({int(b): frozenset(int(x) for x in s) for b, s in raw.items()})
    except (AttributeError, ValueError) as exc:
        raise ConfigError(f"bad --assign: {exc}") from exc


def cmd_construct(args) -> int:
    config = {"kind": args.kind, "seed": args.seed}
    try:
        return _construct(args, config)
    except (cons.ConstructionExhausted, cons.RegistryViolation) as exc:
        partial = {"config": config, "error": str(exc)}
        if isinstance(exc, cons.ConstructionExhausted):
            partial["stage"] = exc.stage
            partial["detail"] = exc.detail
        else:
            partial["cascade"] = exc.cascade
        write_atomic(args.log or f"{args.out}.log.json", dumps(partial))
        raise


def _construct(args, config: dict) -> int:
    rng = random.Random(args.seed)
    registry = None
    if args.kind == "hajnal":
        strings = random_strings(rng, args.strings, args.depth)
        members = cons.hajnal_family(args.k, strings, args.depth)
        horizon = sum(comb(2**n, args.k) for n in range(args.depth + 1))
        config.update(k=args.k, depth=args.depth, strings=strings)
        fam = FamilySnapshot.of_sets(members, horizon, {"builder": "hajnal"})
    elif args.kind == "thm59":
        strings = random_strings(rng, args.strings, args.depth)
        config.update(depth=args.depth, strings=strings, rounds=args.rounds)
        fam = cons.build_family_59(strings, args.depth, args.value_horizon, rounds=args.rounds)
    elif args.kind == "luzin-basic":
        horizon = args.horizon or 2 * args.count * args.meet_budget
        config.update(count=args.count, meet_budget=args.meet_budget, horizon=horizon)
        fam = cons.build_luzin_basic(args.count, args.meet_budget, horizon)
    elif args.kind == "thm07":
        assign = _assignment(args, args.count)
        config.update(count=args.count, stages=args.stages, tau=args.tau, assign={str(b): sorted(s) for b, s in sorted(assign.assign.items())})
        fam = cons.build_family_07(args.count, assign, args.stages, args.tau, horizon=args.horizon)
    elif args.kind == "thm32":
        assign = _assignment(args, args.count)
        config.update(count=args.count, stages=args.stages, tau=args.tau, tuple_depth=args.tuple_depth, assign={str(b): sorted(s) for b, s in sorted(assign.assign.items())})
        fam, registry = cons.build_family_32(args.count, assign, args.tuple_depth, args.stages, args.tau, horizon=args.horizon)
    elif args.kind == "coherent":
        tree = read_tree(args.tree) if args.tree else binary_tree(args.depth)
        horizon = args.horizon or 64
        config.update(depth=args.depth, horizon=horizon)
        seq = cons.coherent_sequence(tree, horizon)
        fam = FamilySnapshot(tuple(sorted(seq.items())), horizon, "set", {"builder": "coherent", "tree": tree_to_json(tree)})
    else:  # argparse restricts the choices
        raise ConfigError(f"unknown kind {args.kind}")
    meta = dict(fam.meta)
    build_log = meta.pop("log", None)
    meta["config"] = config
    fam = FamilySnapshot(fam.members, fam.universe_horizon, fam.kind, meta)
    write_atomic(args.out, dumps(family_to_json(fam)))
    log_obj = {"config": config, "log": build_log}
    if registry is not None:
        log_obj["registry"] = registry.to_json()
    write_atomic(args.log or f"{args.out}.log.json", dumps(log_obj))
    log.info("wrote %d members to %s", len(fam), args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# check


def _prefix_parts(fam: FamilySnapshot, k: int):
    strings = fam.meta.get("config", {}).get("strings") or fam.meta.get("strings")
    if not strings:
        raise ConfigError("--prefix-parts needs a family built from strings")
    return cons.prefix_parts(strings, k)


def run_check(check: str, fam: FamilySnapshot, opts: dict) -> dict:
    """Run one named check with plain-dict options; returns the report as JSON."""
    if check == "ad":
        rep = ck.almost_disjoint_check(fam, opts.get("bound", 0))
    elif check == "luzin":
        boxes = opts.get("boxes") or list(range(1, 6))
        rep = ck.luzin_witness_check(fam, boxes, opts.get("count_budget", 0))
    elif check == "knear":
        parts = opts.get("parts")
        if parts is None:
            parts = _prefix_parts(fam, opts.get("k", 2))
        rep = ck.k_near_luzin_check(fam, parts, opts.get("threshold", 1))
    elif check == "antiluzin":
        rep = ck.anti_luzin_search(fam, opts.get("bound", 1), opts.get("limit", ck.EXHAUSTIVE_MEMBERS))
    elif check == "tree":
        exceptions = opts.get("exceptions", 0)
        if opts.get("tree"):
            rep = ck.tree_family_verify(fam, read_tree(opts["tree"]), exceptions)
        else:
            found = ck.tree_family_search(fam, exceptions=exceptions)
            rep = ck.CheckReport(
                ck.PASS if found is not None else ck.FAIL,
                {"exceptions": exceptions},
                [{"tree": tree_to_json(found)}] if found is not None else [{"note": "no tree order exists"}],
            )
    elif check == "weaktree":
        if not opts.get("tree") or opts.get("phi") is None:
            raise ConfigError("weaktree needs --tree and --phi")
        phi = {int(i): b for i, b in opts["phi"].items()}
        rep = ck.weak_tree_verify(fam, read_tree(opts["tree"]), phi, opts.get("exceptions", 0))
    elif check == "linkage":
        k = opts.get("k", 2)
        sets = [m for _, m in fam.as_sets()]
        cfg = fam.meta.get("config", {})
        t_inf, t_fin = opts.get("t_inf"), opts.get("t_fin")
        if t_inf is None or t_fin is None:
            strings, depth = cfg.get("strings"), cfg.get("depth")
            if not strings or depth is None:
                raise ConfigError("linkage needs --budget.t-inf and --budget.t-fin for this family")
            split = ck.splitting_level(strings)
            t_inf = depth - split if t_inf is None else t_inf
            t_fin = sum(comb(2**j, k) for j in range(split)) if t_fin is None else t_fin
        rep = ck.linkage_check(sets, k, t_inf, t_fin)
    elif check == "delta":
        sets = [m for _, m in fam.as_sets()]
        want = opts.get("want", 3)
        try:
            root, pos = ck.delta_system_refine(sets, want, opts.get("limit", 100_000))
            rep = ck.CheckReport(ck.PASS, {"want": want}, [{"root": sorted(root), "members": [fam.indices[i] for i in pos]}])
        except ck.SearchExhausted as exc:
            rep = ck.CheckReport(ck.INCONCLUSIVE, {"want": want}, [{"note": str(exc)}])
        except ValueError as exc:
            rep = ck.CheckReport(ck.FAIL, {"want": want}, [{"note": str(exc)}])
    else:
        raise ConfigError(f"unknown check {check}")
    return rep.to_json()


def _check_one(job):
    check, path, opts = job
    fam = read_family(path)
    return run_check(check, fam, opts)


def cmd_check(args) -> int:
    opts = {
        "bound": args.bound,
        "boxes": parse_json_arg(args.boxes, "budget.boxes"),
        "count_budget": args.count_budget,
        "parts": parse_json_arg(args.parts, "parts"),
        "threshold": args.threshold,
        "k": args.k,
        "limit": args.limit,
        "exceptions": args.exceptions,
        "tree": args.tree,
        "phi": parse_json_arg(args.phi, "phi"),
        "t_inf": args.t_inf,
        "t_fin": args.t_fin,
        "want": args.want,
    }
    if args.prefix_parts:
        opts["parts"] = None
        opts["k"] = args.prefix_parts
    opts = {k: v for k, v in opts.items() if v is not None}
    jobs = [(args.check, path, opts) for path in args.family]
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            reports = list(pool.map(_check_one, jobs))
    else:
        reports = [_check_one(j) for j in jobs]
    worst = EXIT_OK
    for path, rep in zip(args.family, reports):
        rep["seed"] = args.seed
        rep["check"] = args.check
        rep["family"] = os.path.basename(path)
        if len(args.family) == 1:
            out = args.out
        else:
            out = os.path.join(args.out, f"{Path(path).stem}.{args.check}.{args.format}")
        write_atomic(out, render(rep, args.format, args.check))
        worst = max(worst, VERDICT_EXIT[rep["verdict"]])
    return worst


# ---------------------------------------------------------------------------
# force


def cmd_force(args) -> int:
    rng = random.Random(args.seed)
    extracted: dict = {"seed": args.seed}
    code = EXIT_OK
    if args.poset == "luzin":
        fam = _need_family(args)
        lp = fc.luzin_poset(fam)
        spec, rules = lp.spec, lp.rules(fam.indices)
        chain = fc.rs_run(spec, rules, schedule=args.schedule)
        extracted["indices"] = sorted(chain.last)
    elif args.poset == "hiddentree":
        fam = _need_family(args)
        ht = fc.hidden_tree_poset(fam)
        spec = ht.spec
        chain = fc.rs_run(spec, ht.rules(fam.indices, args.n_max), schedule=args.schedule)
        tree, h = ht.extract_tree(chain)
        tails = ht.tail_of_branch(tree, h)
        extracted.update(tree=tree_to_json(tree), h=sorted([a, v] for a, v in h.items()), tails=sorted([a, ok] for a, ok in tails.items()))
        if not all(tails.values()):
            code = EXIT_FAIL
    elif args.poset == "branch":
        tree = binary_tree(3 if args.depth is None else args.depth)
        horizon = args.horizon or 64
        c = cons.coherent_sequence(tree, horizon)
        branch = list(tree.branches()[0])
        if args.foe == "chain":
            foe = chain_tree(list(range(horizon)))
        else:
            foe = binary_tree(max(1, (horizon + 1).bit_length() - 2))
        bp = fc.branch_poset(tree, c, branch, [foe], horizon)
        spec = bp.spec
        rules = bp.rules(sizes=args.rounds, nodes=branch, foe_levels=args.n_max)
        chain = fc.rs_run(spec, rules, schedule=args.schedule)
        extracted.update(a=sorted(bp.extract_a(chain)), branch=branch, foe=args.foe, precondition=bp.precondition())
    elif args.poset == "pk":
        depth = 12 if args.depth is None else args.depth
        strings = random_strings(rng, args.count, depth)
        E = cons.hajnal_family(args.k, strings, depth)
        pk = fc.pk_poset(E, args.k)
        spec = pk.spec
        size = -(-args.count // args.k)
        parts = [list(range(i * size, min(args.count, (i + 1) * size))) for i in range(args.k)]
        if any(not p for p in parts):
            raise ConfigError(f"{args.count} members cannot fill {args.k} parts")
        chain = fc.rs_run(spec, pk.rules(witness=[(parts, 0)] * args.rounds), schedule=args.schedule)
        fam = pk.extract_f(chain)
        present = [[i for i in p if i in fam.indices] for p in parts]
        extracted.update(strings=strings, parts=parts, family=family_to_json(fam), frozen=pk.frozen_ok(chain))
        if all(present):
            extracted["knear"] = ck.k_near_luzin_check(fam, present, args.rounds).to_json()
    else:
        raise ConfigError(f"unknown poset {args.poset}")
    if not fc.verify_chain(spec, chain):
        raise AssertionError("chain is not descending")
    obj = chain.to_json(spec)
    obj["seed"] = args.seed
    write_atomic(args.out, dumps(obj))
    write_atomic(args.extract or f"{args.out}.extract.json", dumps(extracted))
    if chain.failure is not None:
        print(f"rule exhausted: {chain.failure['rule']}: {chain.failure['reason']}", file=sys.stderr)
        return EXIT_EXHAUSTED
    return code


def _need_family(args) -> FamilySnapshot:
    if not args.family:
        raise ConfigError(f"--family is required for the {args.poset} poset")
    return read_family(args.family)


def cmd_probe(args) -> int:
    fam = read_family(args.family)
    rep = fc.compat_probe(fam, args.samples, args.size, args.seed)
    write_atomic(args.out, dumps(rep))
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="64-bit seed for all randomness")
    p = argparse.ArgumentParser(prog="adfam", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("construct", parents=[common], help="build a family")
    c.add_argument("kind", choices=["luzin-basic", "thm07", "thm32", "hajnal", "thm59", "coherent"])
    c.add_argument("--count", type=int, default=6)
    c.add_argument("--strings", type=int, default=8)
    c.add_argument("--depth", type=int, default=8)
    c.add_argument("--k", type=int, default=2)
    c.add_argument("--stages", type=int, default=8)
    c.add_argument("--tau", type=int, default=2)
    c.add_argument("--tuple-depth", type=int, default=2)
    c.add_argument("--meet-budget", type=int, default=4)
    c.add_argument("--horizon", type=int, default=None)
    c.add_argument("--value-horizon", type=int, default=None)
    c.add_argument("--rounds", type=int, default=1, help="thm59: times each earlier index is enumerated")
    c.add_argument("--assign", help='JSON object such as {"2": [0, 1]}')
    c.add_argument("--tree", help="tree file for coherent sequences")
    c.add_argument("--out", required=True)
    c.add_argument("--log", help="construction log path (default OUT.log.json)")
    c.set_defaults(func=cmd_construct)

    k = sub.add_parser("check", parents=[common], help="run a checker on family files")
    k.add_argument("check", choices=sorted(DESCRIPTIONS))
    k.add_argument("family", nargs="+")
    k.add_argument("--out", required=True, help="report path, or a directory for several families")
    k.add_argument("--format", choices=["json", "csv", "text"], default="json")
    k.add_argument("--jobs", type=int, default=1)
    k.add_argument("--k", type=int, default=None)
    k.add_argument("--parts", help="JSON list of index lists")
    k.add_argument("--prefix-parts", type=int, default=None, help="use the k largest prefix classes of the source strings")
    k.add_argument("--tree", help="tree file")
    k.add_argument("--phi", help="JSON map member -> branch")
    k.add_argument("--budget.bound", dest="bound", type=int, default=None)
    k.add_argument("--budget.boxes", dest="boxes", default=None, help="JSON list of box sizes")
    k.add_argument("--budget.count", dest="count_budget", type=int, default=None)
    k.add_argument("--budget.threshold", dest="threshold", type=int, default=None)
    k.add_argument("--budget.limit", dest="limit", type=int, default=None)
    k.add_argument("--budget.exceptions", dest="exceptions", type=int, default=None)
    k.add_argument("--budget.t-inf", dest="t_inf", type=int, default=None)
    k.add_argument("--budget.t-fin", dest="t_fin", type=int, default=None)
    k.add_argument("--budget.want", dest="want", type=int, default=None)
    k.set_defaults(func=cmd_check)

    f = sub.add_parser("force", parents=[common], help="run a descending chain through a poset")
    f.add_argument("poset", choices=["luzin", "hiddentree", "branch", "pk"])
    f.add_argument("--family")
    f.add_argument("--count", type=int, default=6)
    f.add_argument("--depth", type=int, default=None, help="string depth for pk (12), tree depth for branch (3)")
    f.add_argument("--k", type=int, default=2)
    f.add_argument("--rounds", type=int, default=5)
    f.add_argument("--n-max", type=int, default=5)
    f.add_argument("--horizon", type=int, default=None)
    f.add_argument("--foe", choices=["binary", "chain"], default="binary")
    f.add_argument("--schedule", choices=["round-robin", "priority"], default="round-robin")
    f.add_argument("--out", required=True)
    f.add_argument("--extract")
    f.set_defaults(func=cmd_force)

    q = sub.add_parser("probe", parents=[common], help="compatibility statistics for the Luzin poset")
    q.add_argument("family")
    q.add_argument("--samples", type=int, default=20)
    q.add_argument("--size", type=int, default=3)
    q.add_argument("--out", required=True)
    q.set_defaults(func=cmd_probe)
    return p


def main(argv=None) -> int:
    level = os.environ.get("ADFAM_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (cons.ConstructionExhausted, cons.RegistryViolation) as exc:
        print(f"exhausted: {exc}", file=sys.stderr)
        return EXIT_EXHAUSTED
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
