"""Command-line front end.

    pbktrace --config run.json [--command NAME] [--threads N] [--out PATH] [--format csv|json]

Exit codes: 0 pass, 1 tolerance failure, 2 configuration error, 3 numerical
non-convergence.  The default thread count comes from PBK_THREADS.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from dataclasses import dataclass, field
from typing import Optional

from . import archimedean as arch
from .formula import (IllConditioned, PreconditionError, bk_opposite_geometric, parity_bound_demo,
                      verify_weight2_level11)
from .numkernel import DomainError, NonConvergence
from .padic import (BudgetExceeded, GlobalTestFunction, UnsupportedVariant, kloosterman_generalized,
                    trivial_bound, weil_bound)
from .schemas import SCHEMAS

SCHEMA_VERSION = 1
COMMANDS = ("kloosterman", "verify-petersson2", "bk-geometric", "parity-demo", "transforms")
THREADS_ENV = "PBK_THREADS"

EXIT_OK, EXIT_TOLERANCE, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3

_DEFAULT_TOL = {"h-minus": 1e-6, "modified-zagier": 1e-4, "mhat": 1e-8, "selberg": 1e-4}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str
    level: dict = field(default_factory=dict)
    family: str = "family2"
    T: float = 10.0
    delta: Optional[float] = None
    m_list: list = field(default_factory=list)
    n_list: list = field(default_factory=list)
    m1: int = 1
    m2: int = -1
    m: int = 1
    c_max: int = 50
    tolerance: Optional[float] = None
    constant_max: float = 1e3
    path: str = "auto"
    x_list: list = field(default_factory=lambda: [0.5, 1.0, 5.0])
    t_list: list = field(default_factory=lambda: [0.5, 1.5])
    a_list: list = field(default_factory=lambda: [0.1, 0.5])
    selberg_t: list = field(default_factory=lambda: [0.0, 1.0, 2.0])
    threads: int = 1
    out: Optional[str] = None
    format: str = "csv"

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        d = dict(d)
        version = d.pop("schema_version", None)
        if version != SCHEMA_VERSION:
            raise ConfigError(f"schema_version must be {SCHEMA_VERSION} (got {version!r})")
        known = set(cls.__dataclass_fields__)
        extra = sorted(set(d) - known)
        if extra:
            raise ConfigError(f"unknown config keys: {', '.join(extra)}")
        if "command" not in d:
            raise ConfigError("config needs a command")
        cfg = cls(**d)
        cfg.validate()
        return cfg

    def validate(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}; expected one of {', '.join(COMMANDS)}")
        if self.format not in ("csv", "json"):
            raise ConfigError("format must be csv or json")
        if not isinstance(self.threads, int) or self.threads < 1:
            raise ConfigError("threads must be a positive integer")
        if not isinstance(self.c_max, int) or self.c_max < 1:
            raise ConfigError("c_max must be a positive integer")
        for name in ("m_list", "n_list"):
            vals = getattr(self, name)
            if not isinstance(vals, list) or not all(isinstance(v, int) for v in vals):
                raise ConfigError(f"{name} must be a list of integers")
        if self.tolerance is not None and not self.tolerance > 0:
            raise ConfigError("tolerance must be positive")
        try:
            self.global_f()
            if self.command in ("bk-geometric", "parity-demo", "transforms"):
                self.arch_h()
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from exc

    def global_f(self) -> GlobalTestFunction:
        return GlobalTestFunction({int(p): int(r) for p, r in self.level.items()})

    def arch_h(self) -> arch.ArchTestFunction:
        if self.family == arch.FAMILY1:
            if self.delta is None:
                raise ConfigError("family1 requires delta with 1 <= Delta < T/100")
            return arch.ArchTestFunction.family1(self.T, self.delta)
        if self.family == arch.FAMILY2:
            return arch.ArchTestFunction.family2(self.T)
        if self.family == arch.ZERO:
            return arch.ArchTestFunction.zero()
        raise ConfigError(f"unknown family {self.family!r}")


@dataclass
class Outcome:
    header: list
    rows: list
    record: object
    passed: bool


def fmt(x) -> str:
    """Locale-free decimal string with 17 significant digits."""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, int):
        return str(x)
    if isinstance(x, float):
        return format(x, ".17g")
    return str(x)


# ---------------------------------------------------------------------------
# commands

def cmd_kloosterman(cfg: RunConfig) -> Outcome:
    f = cfg.global_f()
    header = ["m", "n", "c", "re_H", "im_H", "trivial_slack", "weil_slack"]
    rows, ok = [], True
    f1 = float(f.f_one)
    for m in cfg.m_list:
        for n in (cfg.n_list or cfg.m_list):
            for c in range(1, cfg.c_max + 1):
                kv = kloosterman_generalized(f, m, n, c, path=cfg.path)
                mag = abs(complex(kv.value))
                ts = trivial_bound(f, c) - mag
                ws = f1 * weil_bound(m, n, c) - mag
                ok &= ts >= -kv.error and ws >= -kv.error
                rows.append([m, n, c, kv.value.re, kv.value.im, ts, ws])
    return Outcome(header, rows, {"rows": [dict(zip(header, r)) for r in rows]}, ok)


def cmd_verify_petersson2(cfg: RunConfig) -> Outcome:
    tol = cfg.tolerance if cfg.tolerance is not None else 1e-2
    rep = verify_weight2_level11(cfg.m_list, cfg.c_max, tol, threads=cfg.threads)
    header = ["m", "lambda_computed", "lambda_oracle", "abs_error", "tail_majorant", "ratio_error_bound", "passed"]
    rows = [[getattr(r, k) for k in header] for r in rep.rows]
    return Outcome(header, rows, rep.to_dict(), rep.passed)


def cmd_bk_geometric(cfg: RunConfig) -> Outcome:
    res = bk_opposite_geometric(cfg.global_f(), cfg.arch_h(), cfg.m1, cfg.m2, cfg.c_max, threads=cfg.threads)
    header = ["c", "H", "h_minus", "term"]
    rows = [list(t) for t in res.partial_terms]
    rows.append(["total", res.value, res.tail_majorant, res.diagonal_term])
    return Outcome(header, rows, res.to_dict(), True)


def cmd_parity_demo(cfg: RunConfig) -> Outcome:
    rep = parity_bound_demo(cfg.global_f(), cfg.arch_h(), cfg.m, cfg.c_max, threads=cfg.threads)
    d = rep.to_dict()
    header = list(d)
    return Outcome(header, [[d[k] for k in header]], d, rep.constant <= cfg.constant_max)


def _transform_rows(cfg: RunConfig):
    h = cfg.arch_h()
    tol = dict(_DEFAULT_TOL)
    if cfg.tolerance is not None:
        tol = {k: cfg.tolerance for k in tol}
    for x in cfg.x_list:
        k = arch.h_minus_transform(h, x, "K-form")
        i = arch.h_minus_transform(h, x, "I-form")
        d = abs(k.value - i.value)
        yield ["h-minus", x, k.value, i.value, d, tol["h-minus"] * (1 + abs(i.value))]
    if h.variant != arch.FAMILY2:
        return
    for t in cfg.t_list:
        a = arch.modified_zagier(h, t, "fourier-1D").value
        b = arch.modified_zagier(h, t, "plane-2D").value
        yield ["modified-zagier", t, a, b, abs(a - b), tol["modified-zagier"]]
    for a in cfg.a_list:
        mh = arch.modified_zagier_hat(h, a).value * 2 * a
        hm = arch.h_minus_transform(h, 4 * math.pi * a, "I-form").value
        yield ["mhat", a, mh, hm, abs(mh - hm), tol["mhat"]]
    kern = arch.selberg_kernel_for(h)
    for t in cfg.selberg_t:
        back = float(kern.h_from_kernel(t))
        ref = float(h(t).real)
        yield ["selberg", t, ref, back, abs(ref - back), tol["selberg"]]


def cmd_transforms(cfg: RunConfig) -> Outcome:
    header = ["check", "point", "route_a", "route_b", "discrepancy", "tolerance", "passed"]
    rows = [r + [r[4] <= r[5]] for r in _transform_rows(cfg)]
    return Outcome(header, rows, {"rows": [dict(zip(header, r)) for r in rows]}, all(r[-1] for r in rows))


DISPATCH = {
    "kloosterman": cmd_kloosterman,
    "verify-petersson2": cmd_verify_petersson2,
    "bk-geometric": cmd_bk_geometric,
    "parity-demo": cmd_parity_demo,
    "transforms": cmd_transforms,
}


# ---------------------------------------------------------------------------
# output

def _json_default(o):
    if hasattr(o, "item"):
        return o.item()
    raise TypeError(f"cannot serialise {type(o).__name__}")


def _fix_floats(o):
    """Round-trip floats through the 17-digit formatter so JSON matches CSV."""
    if isinstance(o, float):
        return float(fmt(o)) if math.isfinite(o) else fmt(o)
    if isinstance(o, dict):
        return {k: _fix_floats(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_fix_floats(v) for v in o]
    if hasattr(o, "item"):
        return _fix_floats(o.item())
    return o


def render(out: Outcome, form: str) -> str:
    if form == "json":
        return json.dumps(_fix_floats(out.record), indent=2, sort_keys=True, default=_json_default) + "\n"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(out.header)
    for r in out.rows:
        w.writerow([fmt(v.item() if hasattr(v, "item") else v) for v in r])
    return buf.getvalue()


def _error(kind: str, exc: BaseException, code: int) -> int:
    rec = {"error": kind, "type": type(exc).__name__, "message": str(exc), "exit_code": code}
    sys.stderr.write(json.dumps(rec) + "\n")
    return code


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pbktrace", description="Trace-formula numerics: Kloosterman sums, "
                                "transforms, and end-to-end Petersson verification.")
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--command", choices=COMMANDS, help="overrides the config's command")
    p.add_argument("--threads", type=int, help=f"worker threads (default ${THREADS_ENV} or 1)")
    p.add_argument("--out", help="output file (default stdout)")
    p.add_argument("--format", choices=("csv", "json"), help="output format")
    p.add_argument("--print-schema", choices=sorted(SCHEMAS), help="print a record schema and exit")
    return p


def load_config(args) -> RunConfig:
    raw = {"schema_version": SCHEMA_VERSION}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                raw = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
    if args.command:
        raw["command"] = args.command
    threads = args.threads
    if threads is None and "threads" not in raw:
        env = os.environ.get(THREADS_ENV)
        if env:
            try:
                threads = int(env)
            except ValueError as exc:
                raise ConfigError(f"{THREADS_ENV} must be an integer") from exc
    if threads is not None:
        raw["threads"] = threads
    if args.out:
        raw["out"] = args.out
    if args.format:
        raw["format"] = args.format
    try:
        return RunConfig.from_dict(raw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.print_schema:
        sys.stdout.write(json.dumps(SCHEMAS[args.print_schema], indent=2) + "\n")
        return EXIT_OK
    try:
        cfg = load_config(args)
    except ConfigError as exc:
        return _error("configuration", exc, EXIT_CONFIG)
    try:
        outcome = DISPATCH[cfg.command](cfg)
    except (PreconditionError, UnsupportedVariant, DomainError, ConfigError) as exc:
        return _error("configuration", exc, EXIT_CONFIG)
    except (NonConvergence, BudgetExceeded, arch.BudgetExceeded, IllConditioned) as exc:
        return _error("numerical", exc, EXIT_NUMERICAL)
    except ValueError as exc:
        return _error("configuration", exc, EXIT_CONFIG)
    text = render(outcome, cfg.format)
    if cfg.out:
        with open(cfg.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK if outcome.passed else EXIT_TOLERANCE


if __name__ == "__main__":
    sys.exit(main())
