"""Command-line front end: ``fueterlab run`` and ``fueterlab describe``.

Configuration files are flat ``key = value`` text with sectioned keys::

    suite.id = solve
    target.id = flat
    grid.n = 32
    seed = 7
    tol.solve = 1e-12
    convention.sphere = +left
    out = results

Command-line flags override file values. Exit codes: 0 when every check
passes, 1 when some check fails, 2 for usage errors.
"""

from __future__ import annotations

import argparse
import json
import os
import platform
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import CONVENTION_TABLE_VERSION, __version__
from .suites import DEFAULT_TOLERANCES, DESCRIPTIONS, SUITES, run_suite
from .targets import CONVENTIONS, TARGET_IDS

__all__ = ["RunConfig", "UsageError", "parse_config_text", "main", "describe"]

CONVENTION_KEYS = ("sphere",)


class UsageError(ValueError):
    pass


@dataclass
class RunConfig:
    suite: str
    target: str | None = None
    grid: int | None = None
    seed: int = 0
    tolerances: dict = field(default_factory=dict)
    conventions: dict = field(default_factory=dict)
    out: str = "."

    def validate(self) -> "RunConfig":
        if self.suite not in SUITES:
            raise UsageError(f"unknown suite {self.suite!r}; known: {', '.join(SUITES)}")
        if self.target is not None and self.target not in TARGET_IDS:
            raise UsageError(f"unknown target {self.target!r}; known: {', '.join(TARGET_IDS)}")
        if self.grid is not None and self.grid < 4:
            raise UsageError("grid must be an integer >= 4")
        for k, v in self.tolerances.items():
            if k not in DEFAULT_TOLERANCES:
                raise UsageError(f"unknown tolerance {k!r}")
            if not v > 0:
                raise UsageError(f"tolerance {k!r} must be positive")
        for k, v in self.conventions.items():
            if k not in CONVENTION_KEYS:
                raise UsageError(f"unknown convention {k!r}")
            from .spheremaps import Convention

            try:
                Convention.from_tag(v)
            except (KeyError, ValueError, IndexError) as exc:
                raise UsageError(f"bad convention tag {v!r}") from exc
        return self

    def to_dict(self):
        return {"suite": self.suite, "target": self.target, "grid": self.grid, "seed": self.seed,
                "tolerances": dict(sorted(self.tolerances.items())),
                "conventions": dict(sorted(self.conventions.items())), "out": str(self.out)}


def parse_config_text(text: str) -> dict:
    """Flat ``key = value`` pairs; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"config line {lineno}: expected 'key = value'")
        k, v = (s.strip() for s in line.split("=", 1))
        if not k:
            raise UsageError(f"config line {lineno}: empty key")
        out[k] = v
    return out


def _apply(values: dict, cfg: dict) -> None:
    for k, v in values.items():
        if k in ("suite", "suite.id"):
            cfg["suite"] = v
        elif k in ("target", "target.id"):
            cfg["target"] = v
        elif k in ("grid", "grid.n", "grid.m"):
            cfg["grid"] = _int(v, k)
        elif k == "seed":
            cfg["seed"] = _int(v, k)
        elif k == "out":
            cfg["out"] = v
        elif k.startswith("tol."):
            try:
                cfg["tolerances"][k[4:]] = float(v)
            except ValueError as exc:
                raise UsageError(f"tolerance {k} must be a number") from exc
        elif k.startswith("convention."):
            cfg["conventions"][k[11:]] = v
        else:
            raise UsageError(f"unknown key {k!r}")


def _int(v, k):
    try:
        return int(v)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"{k} must be an integer") from exc


def _split_dotted(extra):
    """``--tol.x 1e-3`` / ``--tol.x=1e-3`` pairs left over by argparse."""
    out = {}
    i = 0
    while i < len(extra):
        a = extra[i]
        if not a.startswith("--") or not (a[2:].startswith("tol.") or a[2:].startswith("convention.")):
            raise UsageError(f"unrecognised argument {a!r}")
        if "=" in a:
            k, v = a[2:].split("=", 1)
            i += 1
        else:
            if i + 1 >= len(extra):
                raise UsageError(f"missing value for {a}")
            k, v = a[2:], extra[i + 1]
            i += 2
        out[k] = v
    return out


def build_config(args, extra) -> RunConfig:
    cfg = {"suite": None, "target": None, "grid": None, "seed": 0, "tolerances": {},
           "conventions": {}, "out": os.environ.get("FUETERLAB_OUT", ".")}
    if args.config:
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            raise UsageError(f"cannot read config {args.config!r}: {exc}") from exc
        _apply(parse_config_text(text), cfg)
    cli = {k: v for k, v in (("suite", args.suite), ("target", args.target), ("out", args.out))
           if v is not None}
    if args.grid is not None:
        cli["grid"] = str(args.grid)
    if args.seed is not None:
        cli["seed"] = str(args.seed)
    cli.update(_split_dotted(extra))
    _apply(cli, cfg)
    if cfg["suite"] is None:
        raise UsageError("no suite given (use --suite or suite.id in the config)")
    return RunConfig(**cfg).validate()


def _versions():
    import scipy
    import sklearn

    return {"fueterlab": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "scikit-learn": sklearn.__version__, "python": platform.python_version()}


def run(cfg: RunConfig) -> int:
    out = Path(cfg.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create output directory {out}: {exc}") from exc
    rng = np.random.default_rng(cfg.seed)
    started = time.time()
    result = run_suite(cfg, rng)
    for name, data in sorted(result.artifacts.items()):
        path = out / name
        if isinstance(data, bytes):
            path.write_bytes(data)
        else:
            path.write_text(data)
    manifest = {
        "config": cfg.to_dict(),
        "rng": {"kind": "numpy.random.default_rng", "seed": cfg.seed},
        "versions": _versions(),
        "convention_table_version": CONVENTION_TABLE_VERSION,
        "conventions": CONVENTIONS,
        "checks": [c.to_dict() for c in result.checks],
        "failures": result.failures,
        "artifacts": sorted(result.artifacts),
        "timestamp": {"started": time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime(started)),
                      "elapsed_seconds": round(time.time() - started, 3)},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    for c in result.checks:
        print(f"{'PASS' if c.passed else 'FAIL'} {cfg.suite}:{c.name} value={c.value} {c.op} {c.tol}")
    if result.failures:
        print(json.dumps({"failures": result.failures}, sort_keys=True))
        return 1
    return 0


def describe(suite: str) -> str:
    if suite == "all":
        return "\n".join(f"{k}: {DESCRIPTIONS[k][0]}" for k in SUITES)
    if suite not in SUITES:
        raise UsageError(f"unknown suite {suite!r}; known: {', '.join(SUITES)}")
    text, tols = DESCRIPTIONS[suite]
    lines = [f"{suite}", f"  {text}", "  default tolerances:"]
    lines += [f"    tol.{t} = {DEFAULT_TOLERANCES[t]:g}" for t in tols]
    return "\n".join(lines)


def _parser():
    p = argparse.ArgumentParser(prog="fueterlab", description="Fueter section verification suites")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run a verification suite")
    r.add_argument("--suite")
    r.add_argument("--target")
    r.add_argument("--grid", type=int)
    r.add_argument("--seed", type=int)
    r.add_argument("--out")
    r.add_argument("--config", help="flat key = value config file")
    d = sub.add_parser("describe", help="describe a suite (or 'all')")
    d.add_argument("suite")
    return p


def main(argv=None) -> int:
    parser = _parser()
    args, extra = parser.parse_known_args(argv)
    try:
        if args.command == "describe":
            if extra:
                raise UsageError(f"unrecognised arguments: {' '.join(extra)}")
            print(describe(args.suite))
            return 0
        return run(build_config(args, extra))
    except UsageError as exc:
        print(f"fueterlab: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
