"""Command-line front end: ``qbench <command> [options]``.

Reports go to standard output as canonical JSON (sorted keys, 17 significant
digits) or as a fixed-order ``key: value`` listing. Exit codes: 0 success or
QuantumDomain, 1 Inconclusive, 2 input error or NotEvaluated, 3 numerical
budget failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import __version__, channels, criterion, cv_benchmark, fockla
from .errors import InputError, NumericalBudgetError, TruncationError
from .fockla import Truncation
from .quadrature import QuadratureSpec
from .report import CertificationReport, Diagnostics, Verdict

COMMANDS = ("limit-cv", "limit-ensemble", "verdict", "simulate", "proof-audit", "haar-limit")
CHANNELS = ("identity", "loss", "heterodyne", "basis-mp")

EXIT_OK, EXIT_INCONCLUSIVE, EXIT_INPUT, EXIT_NUMERICAL = 0, 1, 2, 3


class ConfigError(InputError):
    """Invalid invocation; ``violations`` lists every problem found."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError([message])


# --- configuration ------------------------------------------------------------


@dataclass(frozen=True)
class RunConfig:
    command: str
    params: dict = field(default_factory=dict)
    input_path: str | None = None
    output_format: str = "json"
    seed: int = 0


# flag -> (converter, commands that accept it)
_FLOAT_FLAGS = {
    "N": ("limit-cv", "simulate", "proof-audit"),
    "eta": ("limit-cv", "simulate", "proof-audit"),
    "lambda": ("limit-cv", "simulate", "proof-audit"),
    "deficit_ceiling": COMMANDS,
    "gram_tol": ("limit-ensemble", "verdict", "simulate"),
    "error_budget": ("verdict", "simulate"),
    "channel_eta": ("simulate",),
    "gain": ("simulate",),
}
_INT_FLAGS = {
    "d": ("haar-limit",),
    "trunc_dim": ("simulate", "proof-audit"),
    "radial_nodes": ("limit-cv", "simulate", "proof-audit"),
    "angular_nodes": ("limit-cv", "simulate", "proof-audit"),
    "samples": ("haar-limit",),
    "seed": COMMANDS,
}
_REQUIRED = {
    "limit-cv": ("N", "eta", "lambda"),
    "limit-ensemble": ("file",),
    "verdict": ("file",),
    "simulate": ("channel",),
    "proof-audit": ("N", "lambda"),
    "haar-limit": ("d",),
}


def _build_parser():
    common = _Parser(add_help=False)
    for flag in ("N", "eta", "lambda", "xi", "d"):
        common.add_argument(f"--{flag}", dest=flag, default=None)
    for flag in ("file", "config", "csv", "sweep-lambda", "channel", "channel-eta", "gain",
                 "trunc-dim", "radial-nodes", "angular-nodes", "deficit-ceiling", "gram-tol",
                 "error-budget", "samples", "seed"):
        common.add_argument(f"--{flag}", dest=flag.replace("-", "_"), default=None)
    common.add_argument("--format", dest="format", default=None)
    common.add_argument("--search-priors", dest="search_priors", action="store_true", default=None)

    parser = _Parser(prog="qbench", description="Classical fidelity limits and quantum-domain verdicts.")
    parser.add_argument("--version", action="version", version=f"qbench {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def _load_config_file(path, violations):
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        violations.append(f"cannot read config {path}: {exc.strerror}")
        return {}
    except json.JSONDecodeError as exc:
        violations.append(f"malformed JSON in config {path}: {exc.msg} (line {exc.lineno})")
        return {}
    if not isinstance(data, dict):
        violations.append(f"config {path} must hold a JSON object")
        return {}
    return {str(k).replace("-", "_"): v for k, v in data.items()}


def _convert(name, raw, conv, violations):
    try:
        value = conv(raw)
    except (TypeError, ValueError):
        violations.append(f"--{name.replace('_', '-')} expects {conv.__name__}, got {raw!r}")
        return None
    if conv is float and not math.isfinite(value):
        violations.append(f"--{name.replace('_', '-')} must be finite")
        return None
    return value


def _convert_xi(raw, violations):
    if raw == "tight":
        return "tight"
    return _convert("xi", raw, float, violations)


def _convert_sweep(raw, violations):
    try:
        lo, hi, n = str(raw).split(":")
        lo, hi, n = float(lo), float(hi), int(n)
        if not (lo > 0 and hi > 0 and n >= 1):
            raise ValueError
    except ValueError:
        violations.append(f"--sweep-lambda expects START:STOP:COUNT with positive values, got {raw!r}")
        return None
    return (lo, hi, n)


def parse_config(argv):
    """Validated :class:`RunConfig` from ``argv`` (and ``--config`` JSON if given)."""
    parser = _build_parser()
    ns, unknown = parser.parse_known_args(list(argv))
    violations = [f"unrecognized argument {tok!r}" for tok in unknown]
    if ns.command is None:
        raise ConfigError(violations + [f"a command is required: one of {', '.join(COMMANDS)}"])
    cmd = ns.command

    raw = {}
    if ns.config is not None:
        raw.update(_load_config_file(ns.config, violations))
    raw.update({k: v for k, v in vars(ns).items() if v is not None and k not in ("command", "config")})

    params = {}
    flag_names = set(_FLOAT_FLAGS) | set(_INT_FLAGS) | {
        "xi", "file", "csv", "sweep_lambda", "channel", "format", "search_priors"}
    for key in sorted(raw):
        if key not in flag_names:
            violations.append(f"unknown option {key!r}")
    for table, conv in ((_FLOAT_FLAGS, float), (_INT_FLAGS, int)):
        for name, allowed in table.items():
            if name not in raw:
                continue
            if cmd not in allowed:
                violations.append(f"--{name.replace('_', '-')} does not apply to {cmd}")
                continue
            params[name] = _convert(name, raw[name], conv, violations)
    if "xi" in raw:
        if cmd != "proof-audit":
            violations.append(f"--xi does not apply to {cmd}")
        else:
            params["xi"] = _convert_xi(raw["xi"], violations)
    if "sweep_lambda" in raw:
        if cmd != "limit-cv":
            violations.append(f"--sweep-lambda does not apply to {cmd}")
        else:
            params["sweep_lambda"] = _convert_sweep(raw["sweep_lambda"], violations)
    if "csv" in raw:
        if "sweep_lambda" not in raw:
            violations.append("--csv requires --sweep-lambda")
        params["csv"] = str(raw["csv"])
    if "channel" in raw:
        if cmd != "simulate":
            violations.append(f"--channel does not apply to {cmd}")
        elif raw["channel"] not in CHANNELS:
            violations.append(f"--channel must be one of {', '.join(CHANNELS)}, got {raw['channel']!r}")
        else:
            params["channel"] = raw["channel"]
    if raw.get("search_priors"):
        if cmd != "verdict":
            violations.append(f"--search-priors does not apply to {cmd}")
        params["search_priors"] = bool(raw["search_priors"])
    fmt = raw.get("format", "json")
    if fmt not in ("json", "text"):
        violations.append(f"--format must be json or text, got {fmt!r}")
    input_path = raw.get("file")
    if input_path is not None and cmd not in ("limit-ensemble", "verdict", "simulate"):
        violations.append(f"--file does not apply to {cmd}")

    present = set(params) | ({"file"} if input_path is not None else set())
    for name in _REQUIRED[cmd]:
        if name not in present:
            violations.append(f"{cmd} requires --{name.replace('_', '-')}")
    if cmd == "simulate":
        violations.extend(_simulate_violations(params, input_path))

    if violations:
        raise ConfigError(violations)
    seed = params.pop("seed", 0) or 0
    return RunConfig(cmd, params, input_path, fmt, seed)


def _simulate_violations(params, input_path):
    out = []
    ch = params.get("channel")
    if input_path is None:
        for name in ("N", "lambda"):
            if name not in params:
                out.append(f"simulate on a Gaussian task requires --{name} (or --file for an ensemble)")
        if ch == "basis-mp":
            out.append("the basis-mp channel acts on finite ensembles; pass --file")
    elif any(k in params for k in ("N", "eta", "lambda")):
        out.append("simulate takes either a Gaussian task (--N/--eta/--lambda) or --file, not both")
    if ch == "loss" and "channel_eta" not in params:
        out.append("the loss channel requires --channel-eta")
    if "channel_eta" in params and params["channel_eta"] is not None and not 0 <= params["channel_eta"] <= 1:
        out.append("--channel-eta must lie in [0, 1]")
    return out


# --- ensemble files -----------------------------------------------------------


def _complex(value, where, violations):
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return complex(value)
    if (isinstance(value, list) and len(value) == 2
            and all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in value)):
        return complex(value[0], value[1])
    violations.append(f"{where}: expected a number or an [re, im] pair, got {value!r}")
    return None


def _state(obj, where, violations):
    if not isinstance(obj, dict):
        violations.append(f"{where}: expected an object with a 'kind' field")
        return None
    kind = obj.get("kind")
    try:
        if kind == "coherent":
            if "alpha" not in obj:
                violations.append(f"{where}: coherent state needs 'alpha'")
                return None
            a = _complex(obj["alpha"], f"{where}.alpha", violations)
            return None if a is None else criterion.CoherentSpec(a)
        if kind in ("vector", "fock"):
            amps = obj.get("amplitudes")
            if not isinstance(amps, list) or not amps:
                violations.append(f"{where}: '{kind}' state needs a non-empty 'amplitudes' list")
                return None
            vals = [_complex(v, f"{where}.amplitudes[{k}]", violations) for k, v in enumerate(amps)]
            if any(v is None for v in vals):
                return None
            cls = criterion.VectorSpec if kind == "vector" else criterion.FockSpec
            return cls(np.array(vals, dtype=complex))
    except InputError as exc:
        violations.append(f"{where}: {exc}")
        return None
    violations.append(f"{where}: unknown state kind {kind!r} (use coherent, vector or fock)")
    return None


def _optional_real(entry, key, where, violations):
    if key not in entry or entry[key] is None:
        return None
    v = entry[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        violations.append(f"{where}: '{key}' must be a number")
        return None
    return float(v)


def ensemble_from_json(data):
    """Build an :class:`~qbench.criterion.Ensemble` from the decoded file contents."""
    violations = []
    if not isinstance(data, dict) or not isinstance(data.get("entries"), list):
        raise ConfigError(["ensemble file must be an object with an 'entries' list"])
    entries = []
    for i, e in enumerate(data["entries"]):
        where = f"entry {i}"
        if not isinstance(e, dict):
            violations.append(f"{where}: expected an object")
            continue
        for key in ("input", "target", "prior"):
            if key not in e:
                violations.append(f"{where}: missing '{key}'")
        psi = _state(e["input"], f"{where}.input", violations) if "input" in e else None
        tgt = _state(e["target"], f"{where}.target", violations) if "target" in e else None
        prior = _optional_real(e, "prior", where, violations)
        fid = _optional_real(e, "fidelity", where, violations)
        unc = _optional_real(e, "uncertainty", where, violations)
        if psi is not None and tgt is not None and prior is not None:
            entries.append(criterion.Entry(psi, tgt, prior, fid, unc))
    if violations:
        raise ConfigError(violations)
    return criterion.Ensemble(tuple(entries))


def load_ensemble(path):
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError([f"cannot read {path}: {exc.strerror}"]) from None
    except json.JSONDecodeError as exc:
        raise ConfigError([f"malformed JSON in {path}: {exc.msg} (line {exc.lineno})"]) from None
    return ensemble_from_json(data)


# --- commands -----------------------------------------------------------------


def _task(p):
    return cv_benchmark.GaussianTask(p["N"], p.get("eta", 1.0), p["lambda"])


def _spec(p, lam):
    return QuadratureSpec(
        p.get("radial_nodes", cv_benchmark.DEFAULT_RADIAL),
        p.get("angular_nodes", cv_benchmark.DEFAULT_ANGULAR),
        lam,
    )


def _ceiling(p):
    return p.get("deficit_ceiling", fockla.DEFAULT_DEFICIT_CEILING)


def _limit_report(limit, d=None, vacuous=False, notes=()):
    diag = Diagnostics(vacuous=vacuous, notes=tuple(notes))
    return CertificationReport(limit, None, None, Verdict.NOT_EVALUATED, d, diag)


def _run_limit_cv(cfg):
    p = cfg.params
    task = _task(p)
    limit = cv_benchmark.classical_limit_cv(task)
    details = None
    if "sweep_lambda" in p:
        lo, hi, n = p["sweep_lambda"]
        lams = np.linspace(lo, hi, n)
        rows = [(float(l), cv_benchmark.classical_limit_cv(cv_benchmark.GaussianTask(task.N, task.eta, l)))
                for l in lams]
        details = {"sweep": [{"lambda": l, "classical_limit": f} for l, f in rows]}
        if "csv" in p:
            with open(p["csv"], "w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["lambda", "classical_limit"])
                w.writerows([[_fmt_float(l), _fmt_float(f)] for l, f in rows])
    return _limit_report(limit, vacuous=limit >= 1.0), details, EXIT_OK


def _run_limit_ensemble(cfg):
    ens = load_ensemble(cfg.input_path)
    report = criterion.verdict(ens, tol=cfg.params.get("gram_tol", criterion.GRAM_TOL))
    return report, None, EXIT_OK


def _run_verdict(cfg):
    p = cfg.params
    ens = load_ensemble(cfg.input_path)
    tol = p.get("gram_tol", criterion.GRAM_TOL)
    details = None
    if p.get("search_priors"):
        ens, objective = criterion.optimize_priors(ens, tol=tol)
        details = {"searched_priors": [float(x) for x in ens.priors], "search_objective": objective}
    report = criterion.verdict(ens, p.get("error_budget"), tol=tol)
    return report, details, _verdict_exit(report.verdict)


def _cv_channel(p, kind, task, trunc):
    if kind == "identity":
        return channels.identity_channel(trunc.dim)
    if kind == "loss":
        return channels.loss_channel(p["channel_eta"], trunc)
    gain = p.get("gain")
    if gain is None:
        if task is None:
            raise ConfigError(["the heterodyne channel on an ensemble requires --gain"])
        gain = cv_benchmark.attaining_gain(task)
    return channels.heterodyne_mp_channel(gain, trunc)


def _ensemble_dim(ens, ceiling):
    n = len(ens.entries)
    dims = []
    for st in ens.inputs + ens.targets:
        if isinstance(st, criterion.CoherentSpec):
            dims.append(fockla.minimal_dim(abs(st.alpha) ** 2, ceiling / (2 * n)))
        else:
            dims.append(st.amplitudes.size)
    return max(dims)


def _run_simulate(cfg):
    p = cfg.params
    kind = p["channel"]
    ceiling = _ceiling(p)
    if cfg.input_path is None:
        task = _task(p)
        spec = _spec(p, task.lam)
        trunc = Truncation(p["trunc_dim"]) if "trunc_dim" in p else cv_benchmark.default_truncation(
            task, spec, ceiling)
        ch = _cv_channel(p, kind, task, trunc)
        report = cv_benchmark.certify_cv(ch, task, spec, p.get("error_budget"), ceiling)
        details = {"channel": ch.label, "input_dim": ch.input_dim, "output_dim": ch.output_dim}
        return report, details, _verdict_exit(report.verdict)

    ens = load_ensemble(cfg.input_path)
    finite = ens.inputs[0].space == "finite"
    dim = p.get("trunc_dim", _ensemble_dim(ens, ceiling))
    if kind == "basis-mp":
        if not finite:
            raise ConfigError(["the basis-mp channel needs finite-dimensional vector states"])
        ch = channels.basis_mp_channel(np.eye(dim), dim)
    else:
        ch = _cv_channel(p, kind, None, Truncation(dim))
    fids, deficits = criterion.simulate_fidelities(ch, ens)
    if not finite and ceiling is not None and sum(deficits) > ceiling:
        raise TruncationError(
            f"truncation {dim} leaves deficit {sum(deficits):.3e} above {ceiling:g}")
    ens = ens.with_fidelities(fids)
    extra = [sum(deficits), ch.completeness_deficit]
    budget = p.get("error_budget")
    report = criterion.verdict(ens, budget, tol=p.get("gram_tol", criterion.GRAM_TOL),
                               extra_deficits=extra)
    details = {"channel": ch.label, "input_dim": ch.input_dim, "output_dim": ch.output_dim,
               "simulated_fidelities": [float(f) for f in fids]}
    return report, details, _verdict_exit(report.verdict)


def _run_proof_audit(cfg):
    p = cfg.params
    task = _task(p)
    unit = cv_benchmark.task_scaling(task)[0]
    spec = _spec(p, unit.lam)
    trunc = Truncation(p["trunc_dim"]) if "trunc_dim" in p else None
    rec = cv_benchmark.proof_audit(task, p.get("xi", "tight"), spec, trunc)
    limit = rec.classical_limit
    diag = Diagnostics(
        eigenvalue_residual=rec.gamma_eigen_residual,
        truncation_deficits=tuple(rec.truncation_budgets[k] for k in sorted(rec.truncation_budgets)),
        quadrature_spec=spec.as_dict(),
        vacuous=limit >= 1.0,
    )
    report = CertificationReport(limit, None, None, Verdict.NOT_EVALUATED, None, diag)
    return report, {"audit": rec.as_dict()}, EXIT_OK


def _run_haar_limit(cfg):
    p = cfg.params
    d = p["d"]
    if d < 1:
        raise ConfigError(["--d must be at least 1"])
    limit = criterion.haar_classical_limit(d)
    details = None
    if "samples" in p:
        if p["samples"] < 1:
            raise ConfigError(["--samples must be at least 1"])
        resid = criterion.haar_sampling_check(d, p["samples"], cfg.seed)
        details = {"samples": p["samples"], "seed": cfg.seed, "twirl_residual": resid}
    return _limit_report(limit, d, vacuous=limit >= 1.0), details, EXIT_OK


_RUNNERS = {
    "limit-cv": _run_limit_cv,
    "limit-ensemble": _run_limit_ensemble,
    "verdict": _run_verdict,
    "simulate": _run_simulate,
    "proof-audit": _run_proof_audit,
    "haar-limit": _run_haar_limit,
}


def _verdict_exit(v):
    return {Verdict.QUANTUM_DOMAIN: EXIT_OK, Verdict.INCONCLUSIVE: EXIT_INCONCLUSIVE,
            Verdict.NOT_EVALUATED: EXIT_INPUT}[v]


def run(cfg):
    """Execute ``cfg``; returns (exit code, report dict)."""
    report, details, code = _RUNNERS[cfg.command](cfg)
    out = report.to_dict()
    out["command"] = cfg.command
    if details is not None:
        # command-specific extras stay inside diagnostics so the top-level schema is fixed
        out["diagnostics"]["details"] = details
    return code, out


# --- rendering ----------------------------------------------------------------


def _fmt_float(x):
    return format(float(x), ".17g")


def _canonical(obj):
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt_float(obj) if math.isfinite(obj) else "null"
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, dict):
        items = sorted((str(k), v) for k, v in obj.items())
        return "{" + ",".join(f"{json.dumps(k)}:{_canonical(v)}" for k, v in items) + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        return "[" + ",".join(_canonical(v) for v in obj) + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def render_json(report):
    return _canonical(report) + "\n"


_TEXT_ORDER = ("command", "classical_limit", "average_fidelity", "margin", "verdict",
               "d_effective", "diagnostics")


def _flatten(prefix, obj, out):
    if isinstance(obj, dict):
        for k in sorted(obj):
            _flatten(f"{prefix}.{k}", obj[k], out)
    else:
        out.append((prefix, _canonical(obj)))


def render_text(report):
    lines = []
    for key in _TEXT_ORDER:
        if key in report:
            _flatten(key, report[key], lines)
    return "".join(f"{k}: {v}\n" for k, v in lines)


def _apply_thread_cap():
    raw = os.environ.get("QBENCH_THREADS")
    if not raw:
        return None
    try:
        n = int(raw)
        if n < 1:
            raise ValueError
    except ValueError:
        raise ConfigError([f"QBENCH_THREADS must be a positive integer, got {raw!r}"]) from None
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def main(argv=None, stdout=None, stderr=None):
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    argv = sys.argv[1:] if argv is None else argv
    try:
        cfg = parse_config(argv)
        limiter = _apply_thread_cap()
        try:
            code, report = run(cfg)
        finally:
            if limiter is not None:
                limiter.unregister()
    except ConfigError as exc:
        for v in exc.violations:
            print(f"qbench: error: {v}", file=stderr)
        return EXIT_INPUT
    except InputError as exc:
        print(f"qbench: error: {exc}", file=stderr)
        return EXIT_INPUT
    except NumericalBudgetError as exc:
        print(f"qbench: numerical budget exceeded: {exc}", file=stderr)
        return EXIT_NUMERICAL
    render = render_text if cfg.output_format == "text" else render_json
    stdout.write(render(report))
    return code


if __name__ == "__main__":
    sys.exit(main())
