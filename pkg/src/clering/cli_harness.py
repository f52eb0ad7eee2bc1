"""Command-line entry point: generate, run, converge, closure, sweep, replay.

Machine-readable records go to stdout, one per line. Human summaries go to
stderr.
"""

from __future__ import annotations

import argparse
import math
import os
import random
import statistics
import sys
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence

from .checkers import (
    GAMMAS,
    check_closure,
    in_gamma,
    is_converged,
    memory_bits,
    potentials,
    spanning_tree_root,
)
from .protocol_core import RuleId
from .scheduler import (
    DaemonPolicy,
    TraceError,
    decode_trace,
    encode_trace,
    replay,
    run,
)
from .topology_config import (
    ConfigError,
    Configuration,
    Ring,
    cycle_adversarial_configuration,
    cycle_ids,
    decode_config,
    encode_config,
    ids_for,
    impostor_configuration,
    legitimate_configuration,
    make_ring,
    random_configuration,
    reset_configuration,
)

EXIT_OK = 0
EXIT_VIOLATED = 1
EXIT_BUDGET = 2
EXIT_USAGE = 64

SEED_ENV = "CLERING_SEED"
GENERATORS = ("reset", "random", "cycle", "impostor", "legitimate")
DAEMONS = ("synchronous", "random", "central")


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class ExperimentSpec:
    """Everything that determines a run. Same spec, same output."""

    n: int = 8
    id_policy: str = "sequential"
    ids: Optional[tuple] = None
    generator: str = "random"
    daemon: str = "random"
    inclusion: float = 0.5
    fairness_bound: Optional[int] = None
    seed: int = 0
    max_rounds: Optional[int] = None
    max_steps: Optional[int] = None

    def policy(self) -> DaemonPolicy:
        if self.daemon == "synchronous":
            return DaemonPolicy.synchronous()
        if self.daemon == "central":
            return DaemonPolicy.central()
        return DaemonPolicy.random_distributed(self.inclusion, self.fairness_bound)

    def ring(self) -> Ring:
        if self.id_policy == "explicit":
            ids = list(self.ids or ())
        elif self.generator == "cycle" and self.id_policy == "default":
            ids = cycle_ids(self.n)
        else:
            policy = "sequential" if self.id_policy == "default" else self.id_policy
            ids = ids_for(self.n, policy, seed=self.seed)
        return make_ring(ids, port_seed=self.seed)

    def configuration(self) -> Configuration:
        ring = self.ring()
        gen = self.generator
        if gen == "reset":
            return reset_configuration(ring)
        if gen == "random":
            return random_configuration(ring, random.Random(self.seed))
        if gen == "cycle":
            return cycle_adversarial_configuration(ring)
        if gen == "impostor":
            return impostor_configuration(ring)
        return legitimate_configuration(ring)


def default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def _spec_from_args(args) -> ExperimentSpec:
    if args.n is not None and args.n < 3:
        raise UsageError("--n must be at least 3")
    ids = None
    policy = args.ids
    if policy not in ("default", "sequential", "random"):
        try:
            ids = tuple(int(x) for x in policy.split(","))
        except ValueError:
            raise UsageError(f"--ids must be sequential, random or a comma list, got {policy!r}") \
                from None
        policy = "explicit"
    n = len(ids) if ids else (args.n if args.n is not None else 8)
    if ids and args.n is not None and args.n != len(ids):
        raise UsageError(f"--n {args.n} disagrees with {len(ids)} explicit ids")
    seed = args.seed if args.seed is not None else default_seed()
    if args.fairness_bound is not None and args.fairness_bound < 1:
        raise UsageError("--fairness-bound must be positive")
    if not 0.0 < args.inclusion <= 1.0:
        raise UsageError("--inclusion must be in (0, 1]")
    return ExperimentSpec(
        n=n, id_policy=policy, ids=ids, generator=getattr(args, "generator", "random"),
        daemon=args.daemon, inclusion=args.inclusion, fairness_bound=args.fairness_bound,
        seed=seed, max_rounds=getattr(args, "rounds", None),
        max_steps=getattr(args, "steps", None),
    )


def _load_or_generate(args, spec: ExperimentSpec) -> Configuration:
    if getattr(args, "config", None):
        with open(args.config) as fh:
            return decode_config(fh.read())
    return spec.configuration()


def _write(path: Optional[str], text: str) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def _err(msg: str) -> None:
    print(msg, file=sys.stderr)


# ----- commands -----

def cmd_generate(args) -> int:
    spec = _spec_from_args(args)
    cfg = spec.configuration()
    _write(args.out, encode_config(cfg))
    _err(f"generated {spec.generator} configuration, n={cfg.ring.n}")
    return EXIT_OK


def _target(name: Optional[str]):
    if name is None:
        return None
    if name == "converged":
        return is_converged
    return lambda c: in_gamma(name, c)


def cmd_run(args) -> int:
    spec = _spec_from_args(args)
    cfg = _load_or_generate(args, spec)
    if spec.max_rounds is None and spec.max_steps is None and args.until is None:
        raise UsageError("run needs --rounds, --steps or --until")
    rounds = spec.max_rounds
    if args.until is not None and rounds is None and spec.max_steps is None:
        rounds = default_round_budget(cfg.ring.n)
    tr = run(cfg, spec.policy(), seed=spec.seed, max_rounds=rounds, max_steps=spec.max_steps,
             until=_target(args.until), record=True)
    if args.trace:
        _write(args.trace, encode_trace(tr))
    print(f"run outcome={tr.outcome} rounds={tr.rounds} steps={tr.step_count} "
          f"{potentials(tr.final).to_line()}")
    if args.until is not None and not tr.reached:
        return EXIT_BUDGET
    return EXIT_OK


def default_round_budget(n: int) -> int:
    lg = max(1.0, math.log2(n))
    return int(50 * n * lg * lg) + 100


def converge(spec: ExperimentSpec, cfg: Configuration, on_round=None):
    budget = spec.max_rounds or default_round_budget(cfg.ring.n)
    return run(cfg, spec.policy(), seed=spec.seed, max_rounds=budget, max_steps=spec.max_steps,
               until=is_converged, record=True, on_round=on_round)


def cmd_converge(args) -> int:
    spec = _spec_from_args(args)
    cfg = _load_or_generate(args, spec)
    print(f"round 0 {potentials(cfg).to_line()}")

    def on_round(r, c):
        print(f"round {r} {potentials(c).to_line()}")

    tr = converge(spec, cfg, on_round=on_round)
    resets = sum(1 for _sel, rules, _d in tr.steps if RuleId.ERROR in rules)
    if args.trace:
        _write(args.trace, encode_trace(tr))
    status = "converged" if tr.reached else "budget-exhausted"
    root = spanning_tree_root(tr.final)
    leader = cfg.ring.ids[root] if root is not None else "none"
    print(f"summary status={status} rounds={tr.rounds} steps={tr.step_count} "
          f"leader={leader} max_id={max(cfg.ring.ids)} resets={resets} "
          f"{potentials(tr.final).to_line()}")
    _err(f"{status} after {tr.rounds} rounds ({tr.step_count} steps), leader id {leader}")
    return EXIT_OK if tr.reached else EXIT_BUDGET


def cmd_closure(args) -> int:
    spec = _spec_from_args(args)
    cfg = _load_or_generate(args, spec)
    steps = spec.max_steps or 10_000
    v = check_closure(args.gamma, cfg, spec.policy(), steps, seed=spec.seed)
    if v.precondition_failed:
        print(f"closure gamma={args.gamma} verdict=precondition-failed")
        _err(f"configuration is not in {args.gamma}")
        return EXIT_USAGE
    if v.held:
        print(f"closure gamma={args.gamma} verdict=held steps={steps}")
        return EXIT_OK
    print(f"closure gamma={args.gamma} verdict=violated step={v.step}")
    if args.out:
        _write(args.out, encode_config(v.config))
    return EXIT_VIOLATED


def sweep(template: ExperimentSpec, n_list: Sequence[int], trials: int) -> List[str]:
    """One table row per n: convergence rounds and memory width."""
    rows = []
    for n in n_list:
        rounds, failures = [], 0
        bits = None
        for t in range(trials):
            spec = replace(template, n=n, seed=template.seed + t)
            cfg = spec.configuration()
            bits = memory_bits(cfg)[0]
            tr = run(cfg, spec.policy(), seed=spec.seed,
                     max_rounds=spec.max_rounds or default_round_budget(n),
                     until=is_converged, record=False)
            if tr.reached:
                rounds.append(tr.rounds)
            else:
                failures += 1
        if not trials:
            continue
        med = statistics.median(rounds) if rounds else float("nan")
        top = max(rounds) if rounds else float("nan")
        scale = n * math.log2(n) ** 2
        rows.append(f"n={n} trials={trials} converged={len(rounds)} failures={failures} "
                    f"median_rounds={med:g} max_rounds={top:g} ratio={top / scale:.4f} "
                    f"memory_bits={bits}")
    return rows


def cmd_sweep(args) -> int:
    spec = _spec_from_args(args)
    try:
        n_list = [int(x) for x in args.n_list.split(",") if x]
    except ValueError:
        raise UsageError(f"--n-list must be comma separated integers, got {args.n_list!r}") \
            from None
    if any(n < 3 for n in n_list):
        raise UsageError("every n in --n-list must be at least 3")
    if spec.id_policy == "explicit":
        raise UsageError("sweep generates ids per n; use sequential or random")
    if args.trials < 0:
        raise UsageError("--trials must be non-negative")
    rows = sweep(spec, n_list, args.trials)
    for row in rows:
        print(row)
    failed = any("failures=0" not in r for r in rows)
    return EXIT_BUDGET if failed else EXIT_OK


def cmd_replay(args) -> int:
    try:
        with open(args.trace_file) as fh:
            tr = decode_trace(fh.read())
    except OSError as exc:
        raise UsageError(str(exc)) from None
    except TraceError as exc:
        print(f"replay verdict=parse-error detail={exc}")
        _err(f"{args.trace_file}: {exc}")
        return EXIT_USAGE
    v = replay(tr)
    if v.ok:
        print(f"replay verdict=ok steps={len(tr.steps)}")
        return EXIT_OK
    print(f"replay verdict=mismatch step={v.mismatch_step} reason={v.reason.replace(' ', '-')}")
    return EXIT_VIOLATED


# ----- argument parsing -----

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _ring_args(p):
    p.add_argument("--n", type=int, help="ring size (default 8)")
    p.add_argument("--ids", default="default",
                   help="sequential, random, or a comma separated list")
    p.add_argument("--seed", type=int,
                   help=f"master seed (default from {SEED_ENV}, else 0)")


def _daemon_args(p):
    p.add_argument("--daemon", choices=DAEMONS, default="random")
    p.add_argument("--inclusion", type=float, default=0.5,
                   help="per-node activation probability of the random daemon")
    p.add_argument("--fairness-bound", type=int,
                   help="max steps an enabled node may wait (default 8n)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="clering", description="Compact leader election on rings.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    g = sub.add_parser("generate", help="write a configuration file")
    _ring_args(g)
    g.add_argument("--generator", choices=GENERATORS, default="random")
    g.add_argument("-o", "--out", help="output path (default stdout)")
    g.set_defaults(func=cmd_generate, daemon="random", inclusion=0.5, fairness_bound=None)

    for name, func, helptext in (("run", cmd_run, "run for a budget"),
                                 ("converge", cmd_converge, "run until leader election")):
        r = sub.add_parser(name, help=helptext)
        _ring_args(r)
        _daemon_args(r)
        r.add_argument("--generator", choices=GENERATORS, default="random")
        r.add_argument("--config", help="start from a configuration file")
        r.add_argument("--rounds", type=int, help="round budget")
        r.add_argument("--steps", type=int, help="step budget")
        r.add_argument("--trace", help="write a clering-trace v1 file")
        if name == "run":
            r.add_argument("--until", choices=GAMMAS[1:] + ("converged",))
        r.set_defaults(func=func)

    c = sub.add_parser("closure", help="check that a predicate is never left")
    _ring_args(c)
    _daemon_args(c)
    c.add_argument("--gamma", choices=GAMMAS[1:], required=True)
    c.add_argument("--generator", choices=GENERATORS, default="legitimate")
    c.add_argument("--config", help="start from a configuration file")
    c.add_argument("--steps", type=int, help="step budget (default 10000)")
    c.add_argument("-o", "--out", help="write the offending configuration here")
    c.set_defaults(func=cmd_closure)

    s = sub.add_parser("sweep", help="convergence table over ring sizes")
    _ring_args(s)
    _daemon_args(s)
    s.add_argument("--generator", choices=GENERATORS, default="random")
    s.add_argument("--n-list", required=True, help="comma separated ring sizes")
    s.add_argument("--trials", type=int, default=20)
    s.add_argument("--rounds", type=int, help="round budget per trial")
    s.set_defaults(func=cmd_sweep)

    rp = sub.add_parser("replay", help="verify a trace file")
    rp.add_argument("trace_file")
    rp.set_defaults(func=cmd_replay)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not getattr(args, "func", None):
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except (UsageError, ConfigError, OSError) as exc:
        _err(f"clering {args.command}: {exc}")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
