"""Batch command-line front end.

Every subcommand accepts ``--config FILE`` with ``key=value`` lines whose
keys are the long option names (``max-iters`` or ``max_iters``).  Values
resolve as defaults < config file < ``UFT_SEED`` (seed only) < flags.

Exit codes: 0 success, 1 input error, 2 solver did not converge,
3 verification failure.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import verify
from .alignment import FeaturePyramid, cycle_loss, multi_stage_transport
from .errors import UFTError
from .losses import argmax_match_cosine, argmax_match_plan, matching_report
from .measures import EPS_MASS, compute_masses, cosine_cost_matrix
from .seace import AffineMap, ModulationPair, seace_forward
from .sinkhorn import SolverOptions, TransportSolution, solve_balanced, solve_unbalanced
from .synth import SynthSpec, gen_clustered_pair, gen_pyramid_from_image_grid
from .tensorio import (
    format_sidecar,
    read_features,
    read_pyramid,
    read_sidecar,
    read_tensor,
    write_pyramid,
    write_sidecar,
    write_tensor,
)

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_NOT_CONVERGED = 2
EXIT_VERIFY = 3

DEFAULTS = {
    "eta": 1e-4,
    "tau": 1.0,
    "max_iters": 5000,
    "tol": 1e-9,
    "eps_mass": EPS_MASS,
    "softmax": True,
    "seed": 0,
    "threads": 1,
}

# Fixture used by ``gen`` and ``compare --gen`` unless overridden.
COMPARE_FIXTURE = {"n": 60, "d": 32, "k": 3, "outlier_frac": 0.1, "spread": 0.05}

COMMAND_DEFAULTS = {
    "gen": {**COMPARE_FIXTURE, "levels": 1},
    "compare": dict(COMPARE_FIXTURE),
    "verify": {"n": 6, "trials": 100},
}


class InputError(Exception):
    """Bad invocation or unreadable input; maps to exit status 1."""


@dataclass
class RunConfig:
    eta: float = DEFAULTS["eta"]
    tau: float = DEFAULTS["tau"]
    max_iters: int = DEFAULTS["max_iters"]
    tol: float = DEFAULTS["tol"]
    eps_mass: float = DEFAULTS["eps_mass"]
    softmax: bool = DEFAULTS["softmax"]
    seed: int = DEFAULTS["seed"]
    threads: int = DEFAULTS["threads"]
    paths: dict[str, str] = field(default_factory=dict)
    output: str | None = None
    extra: dict = field(default_factory=dict)

    def solver_options(self, **overrides) -> SolverOptions:
        kw = dict(
            eta=self.eta, tau=self.tau, max_iters=self.max_iters, tol=self.tol, threads=self.threads
        )
        kw.update(overrides)
        try:
            return SolverOptions(**kw)
        except ValueError as exc:
            raise InputError(str(exc)) from None

    def path(self, key: str) -> Path:
        value = self.paths.get(key)
        if value is None:
            raise InputError(f"missing required input --{key.replace('_', '-')}")
        p = Path(value)
        if not p.exists():
            raise InputError(f"input file not found: {p}")
        return p


PATH_KEYS = {
    "cost", "alpha", "beta", "x", "z", "pyramid", "labels",
    "sem", "style_gamma", "style_mu", "act", "gen_act",
    "gamma_weight", "gamma_bias", "mu_weight", "mu_bias",
}


def _bool(text: str) -> bool:
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise InputError(f"not a boolean: {text!r}")


def read_config_file(path) -> dict[str, str]:
    out = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError:
        raise InputError(f"config file not found: {path}") from None
    for lineno, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise InputError(f"{path}:{lineno}: expected key=value")
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def _convert(parser: argparse.ArgumentParser, key: str, value: str):
    for action in parser._actions:
        if action.dest != key:
            continue
        if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
            flag = _bool(value)
            return flag if isinstance(action, argparse._StoreTrueAction) else not flag
        try:
            return action.type(value) if action.type else value
        except ValueError:
            raise InputError(f"config value for {key}: cannot parse {value!r}") from None
    raise InputError(f"unknown config key {key!r}")


def resolve_config(args: argparse.Namespace, parser: argparse.ArgumentParser, env=None) -> RunConfig:
    """Merge defaults, config file, ``UFT_SEED`` and explicit flags."""
    env = os.environ if env is None else env
    given = {k: v for k, v in vars(args).items() if k not in ("func", "config", "command")}
    merged: dict = {**DEFAULTS, **COMMAND_DEFAULTS.get(args.command, {})}
    if getattr(args, "config", None):
        for key, value in read_config_file(args.config).items():
            merged[key] = _convert(parser, key, value)
    if "UFT_SEED" in env:
        try:
            merged["seed"] = int(env["UFT_SEED"])
        except ValueError:
            raise InputError(f"UFT_SEED must be an integer, got {env['UFT_SEED']!r}") from None
    merged.update(given)
    if "raw_attention" in merged:
        merged["softmax"] = not merged.pop("raw_attention")
    cfg = RunConfig()
    for key, value in merged.items():
        if key in PATH_KEYS:
            cfg.paths[key] = str(value)
        elif key == "output":
            cfg.output = str(value)
        elif hasattr(cfg, key) and key not in ("paths", "extra"):
            setattr(cfg, key, value)
        else:
            cfg.extra[key] = value
    if cfg.threads < 1:
        raise InputError("--threads must be >= 1")
    return cfg


def _require_output(cfg: RunConfig) -> Path:
    if not cfg.output:
        raise InputError("missing required -o/--output")
    return Path(cfg.output)


def _sidecar_path(out: Path) -> Path:
    return out.with_name(out.name + ".txt")


def _read(cfg: RunConfig, key: str) -> np.ndarray:
    p = cfg.path(key)
    try:
        return read_tensor(p)
    except UFTError as exc:
        raise InputError(str(exc)) from None


def _read_feats(cfg: RunConfig, key: str) -> np.ndarray:
    p = cfg.path(key)
    try:
        return read_features(p)
    except UFTError as exc:
        raise InputError(str(exc)) from None


def _problem(cfg: RunConfig):
    """Cost and masses from ``--cost/--alpha/--beta`` or from ``--x/--z`` features."""
    if "cost" in cfg.paths:
        C = _read(cfg, "cost")
        alpha = _read(cfg, "alpha").reshape(-1)
        beta = _read(cfg, "beta").reshape(-1)
        return C, alpha, beta
    X = _read_feats(cfg, "x")
    Z = _read_feats(cfg, "z")
    C = cosine_cost_matrix(X, Z)
    alpha, beta = compute_masses(X, Z, cfg.eps_mass)
    return C, alpha, beta


def _diagnostics(sol: TransportSolution, alpha, beta) -> dict:
    r, c = sol.marginals()
    return {
        "iters": sol.iters,
        "converged": sol.converged,
        "primal": sol.primal,
        "dual": sol.dual,
        "eta": sol.eta,
        "tau": sol.tau if math.isfinite(sol.tau) else "inf",
        "plan_mass": float(sol.plan.sum()),
        "alpha_mass": float(alpha.sum()),
        "beta_mass": float(beta.sum()),
        "row_marginal_err": float(np.max(np.abs(r - alpha))),
        "col_marginal_err": float(np.max(np.abs(c - beta))),
    }


def _finish_solve(sol, alpha, beta, out: Path) -> int:
    write_tensor(out, sol.plan)
    diag = _diagnostics(sol, alpha, beta)
    write_sidecar(_sidecar_path(out), diag)
    sys.stdout.write(format_sidecar(diag))
    if not sol.converged:
        print(f"uft: not converged after {sol.iters} iterations", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def cmd_gen(cfg: RunConfig) -> int:
    out = _require_output(cfg)
    try:
        spec = SynthSpec(
            n=cfg.extra["n"],
            d=cfg.extra["d"],
            k=cfg.extra["k"],
            outlier_frac=cfg.extra["outlier_frac"],
            spread=cfg.extra["spread"],
            seed=cfg.seed,
        )
    except UFTError as exc:
        raise InputError(str(exc)) from None
    X, Z, lx, lz, mask = gen_clustered_pair(spec)
    out.mkdir(parents=True, exist_ok=True)
    write_tensor(out / "X.uft", X)
    write_tensor(out / "Z.uft", Z)
    write_sidecar(
        out / "labels.txt",
        {
            "n": spec.n,
            "d": spec.d,
            "k": spec.k,
            "outlier_frac": spec.outlier_frac,
            "spread": spec.spread,
            "seed": spec.seed,
            "labels_x": lx,
            "labels_z": lz,
            "outlier_mask_z": mask.astype(int),
        },
    )
    levels = cfg.extra["levels"]
    if levels > 1:
        try:
            pyr = gen_pyramid_from_image_grid(Z, levels, spread=spec.spread, seed=spec.seed)
        except UFTError as exc:
            raise InputError(str(exc)) from None
        write_pyramid(out / "pyramid", pyr.levels, pyr.base_h, pyr.base_w)
    print(f"wrote {out}")
    return EXIT_OK


def cmd_solve(cfg: RunConfig) -> int:
    out = _require_output(cfg)
    C, alpha, beta = _problem(cfg)
    sol = solve_unbalanced(C, alpha, beta, cfg.solver_options())
    return _finish_solve(sol, alpha, beta, out)


def cmd_solve_balanced(cfg: RunConfig) -> int:
    out = _require_output(cfg)
    C, alpha, beta = _problem(cfg)
    if cfg.extra.get("normalize"):
        alpha = alpha / alpha.sum()
        beta = beta / beta.sum()
    sol = solve_balanced(C, alpha, beta, cfg.solver_options())
    return _finish_solve(sol, alpha, beta, out)


def _load_pyramid(cfg: RunConfig, Z: np.ndarray) -> FeaturePyramid:
    if "pyramid" in cfg.paths:
        try:
            levels, bh, bw = read_pyramid(cfg.path("pyramid"))
        except (UFTError, KeyError) as exc:
            raise InputError(f"bad pyramid manifest: {exc}") from None
        return FeaturePyramid(levels, bh, bw)
    return gen_pyramid_from_image_grid(Z, 1)


def cmd_align(cfg: RunConfig) -> int:
    out = _require_output(cfg)
    X = _read_feats(cfg, "x")
    Z = _read_feats(cfg, "z")
    pyramid = _load_pyramid(cfg, Z)
    C = cosine_cost_matrix(X, Z)
    alpha, beta = compute_masses(X, Z, cfg.eps_mass)
    sol = solve_unbalanced(C, alpha, beta, cfg.solver_options())
    warped = multi_stage_transport(sol.plan, pyramid)
    write_pyramid(out, warped.levels, warped.base_h, warped.base_w)
    write_tensor(out / "plan.uft", sol.plan)
    diag = _diagnostics(sol, alpha, beta)
    diag["cycle_loss"] = cycle_loss(sol.plan, Z)
    diag["levels"] = len(warped.levels)
    write_sidecar(out / "align.txt", diag)
    sys.stdout.write(format_sidecar(diag))
    if not sol.converged:
        print(f"uft: not converged after {sol.iters} iterations", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def _compare_inputs(cfg: RunConfig):
    if cfg.extra.get("gen"):
        params = {k: cfg.extra[k] for k in COMPARE_FIXTURE}
        try:
            spec = SynthSpec(seed=cfg.seed, **params)
        except UFTError as exc:
            raise InputError(str(exc)) from None
        X, Z, lx, lz, mask = gen_clustered_pair(spec)
        return X, Z, lx, lz, mask, {**params, "seed": spec.seed}
    X = _read_feats(cfg, "x")
    Z = _read_feats(cfg, "z")
    meta = read_sidecar(cfg.path("labels"))
    try:
        lx = np.array(meta["labels_x"].split(), dtype=int)
        lz = np.array(meta["labels_z"].split(), dtype=int)
        raw_mask = meta.get("outlier_mask_z")
        mask = np.array(raw_mask.split(), dtype=int).astype(bool) if raw_mask else None
    except (KeyError, ValueError) as exc:
        raise InputError(f"bad labels file: {exc}") from None
    if mask is None:
        mask = np.zeros(lz.size, dtype=bool)
    return X, Z, lx, lz, mask, {"x": cfg.paths["x"], "z": cfg.paths["z"]}


def compare_report(cfg: RunConfig) -> tuple[str, bool]:
    """Run cosine, balanced OT (uniform masses) and UOT (estimated masses); return report text."""
    X, Z, lx, lz, mask, source = _compare_inputs(cfg)
    n, m = X.shape[0], Z.shape[0]
    C = cosine_cost_matrix(X, Z)
    alpha, beta = compute_masses(X, Z, cfg.eps_mass)
    opts = cfg.solver_options()
    bal = solve_balanced(C, np.full(n, 1.0 / n), np.full(m, 1.0 / m), opts)
    uot = solve_unbalanced(C, alpha, beta, opts)
    reports = {
        "cosine": matching_report(argmax_match_cosine(X, Z), lx, lz, None, mask),
        "balanced": matching_report(argmax_match_plan(bal.plan), lx, lz, bal.plan, mask),
        "uot": matching_report(argmax_match_plan(uot.plan), lx, lz, uot.plan, mask),
    }
    lines = [format_sidecar({**source, "eta": cfg.eta, "tau": cfg.tau})]
    lines.append(format_sidecar({"balanced.converged": bal.converged, "uot.converged": uot.converged}))
    for name, rep in reports.items():
        lines.append(rep.to_text(prefix=f"{name}."))
    ok = True
    if mask.any():
        lb, lu = reports["balanced"].outlier_leakage, reports["uot"].outlier_leakage
        passed = lu < lb
        ok &= passed
        lines.append(f"check leakage uot<balanced: {'PASS' if passed else 'FAIL'} ({lu!r} < {lb!r})\n")
    else:
        lines.append("check leakage uot<balanced: n/a (no outliers)\n")
    rc, ru = reports["cosine"].many_to_one_rate, reports["uot"].many_to_one_rate
    passed = rc >= ru
    ok &= passed
    lines.append(f"check many_to_one cosine>=uot: {'PASS' if passed else 'FAIL'} ({rc!r} >= {ru!r})\n")
    return "".join(lines), ok


def cmd_compare(cfg: RunConfig) -> int:
    text, ok = compare_report(cfg)
    sys.stdout.write(text)
    if cfg.output:
        Path(cfg.output).write_text(text)
    return EXIT_OK if ok else EXIT_VERIFY


def cmd_seace(cfg: RunConfig) -> int:
    out = _require_output(cfg)
    X_sem = _read_feats(cfg, "sem")
    style = ModulationPair(_read_feats(cfg, "style_gamma"), _read_feats(cfg, "style_mu"))
    X_act = _read_feats(cfg, "act")
    L_act = _read_feats(cfg, "gen_act")
    c = style.gamma.shape[1]

    def affine(prefix):
        w_key, b_key = f"{prefix}_weight", f"{prefix}_bias"
        if w_key not in cfg.paths and b_key not in cfg.paths:
            return AffineMap.identity(c)
        w = _read(cfg, w_key) if w_key in cfg.paths else np.eye(c)
        b = _read(cfg, b_key).reshape(-1) if b_key in cfg.paths else np.zeros(w.shape[1])
        return AffineMap(w, b)

    result = seace_forward(
        X_sem, style, X_act, L_act, affine("gamma"), affine("mu"), softmax=cfg.softmax
    )
    write_tensor(out, result)
    diag = {"positions": result.shape[0], "channels": result.shape[1], "softmax": cfg.softmax}
    write_sidecar(_sidecar_path(out), diag)
    sys.stdout.write(format_sidecar(diag))
    return EXIT_OK


def cmd_verify(cfg: RunConfig) -> int:
    solvers = verify.Solvers()
    if cfg.extra.get("corrupt_solver"):
        solvers = verify.Solvers(
            verify.corrupted(solve_balanced), verify.corrupted(solve_unbalanced)
        )
    first_failure = None
    for result in verify.run_suite(cfg.seed, cfg.extra["n"], cfg.extra["trials"], solvers):
        print(result.line(), flush=True)
        if not result.passed and first_failure is None:
            first_failure = result.name
    if first_failure is not None:
        print(f"uft: verification failed: {first_failure}", file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


def _solver_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--eta", type=float, help="entropic coefficient (default 1e-4)")
    p.add_argument("--tau", type=float, help="marginal relaxation weight (default 1.0)")
    p.add_argument("--max-iters", type=int, help="sweep limit (default 5000)")
    p.add_argument("--tol", type=float, help="potential-change tolerance (default 1e-9)")
    p.add_argument("--threads", type=int, help="row-reduction threads (default 1)")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value file; flags override it")
    p.add_argument("--seed", type=int, help="generator seed (env UFT_SEED overrides the file)")
    p.add_argument("--eps-mass", type=float, help="lower clamp for estimated masses")


def _problem_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--cost", help="cost matrix tensor")
    p.add_argument("--alpha", help="source mass tensor")
    p.add_argument("--beta", help="target mass tensor")
    p.add_argument("--x", help="source features (tensor or .csv); used when --cost is absent")
    p.add_argument("--z", help="exemplar features (tensor or .csv)")
    p.add_argument("-o", "--output", help="plan tensor to write; diagnostics go to <output>.txt")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="uft", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text, argument_default=argparse.SUPPRESS)
        p.set_defaults(func=func)
        _common(p)
        parser.subcommands[name] = p
        return p

    parser.subcommands = {}

    p = add("gen", cmd_gen, "write a labeled synthetic feature pair")
    p.add_argument("--n", type=int)
    p.add_argument("--d", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--outlier-frac", type=float)
    p.add_argument("--spread", type=float)
    p.add_argument("--levels", type=int, help="also write an exemplar pyramid")
    p.add_argument("-o", "--output", help="output directory")

    p = add("solve", cmd_solve, "unbalanced entropic transport")
    _solver_flags(p)
    _problem_flags(p)

    p = add("solve-balanced", cmd_solve_balanced, "balanced entropic transport")
    _solver_flags(p)
    _problem_flags(p)
    p.add_argument("--normalize", action="store_true", help="rescale both masses to total 1")

    p = add("align", cmd_align, "solve, warp an exemplar pyramid and report cycle loss")
    _solver_flags(p)
    p.add_argument("--x", help="conditional features (n x d, n a square)")
    p.add_argument("--z", help="exemplar features")
    p.add_argument("--pyramid", help="exemplar pyramid manifest (default: Z as one level)")
    p.add_argument("-o", "--output", help="output directory")

    p = add("compare", cmd_compare, "cosine vs balanced OT vs UOT matching reports")
    _solver_flags(p)
    p.add_argument("--gen", action="store_true", help="generate the labeled pair from the seed")
    p.add_argument("--n", type=int)
    p.add_argument("--d", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--outlier-frac", type=float)
    p.add_argument("--spread", type=float)
    p.add_argument("--x", help="source features")
    p.add_argument("--z", help="exemplar features")
    p.add_argument("--labels", help="labels sidecar written by `uft gen`")
    p.add_argument("-o", "--output", help="also write the report here")

    p = add("seace", cmd_seace, "semantic-activation denormalization")
    p.add_argument("--sem", help="conditional semantic features (n x d)")
    p.add_argument("--style-gamma", help="exemplar gamma map (n x c)")
    p.add_argument("--style-mu", help="exemplar mu map (n x c)")
    p.add_argument("--act", help="conditional activation (n x c)")
    p.add_argument("--gen-act", help="generator activation to denormalize (n x c)")
    for prefix in ("gamma", "mu"):
        p.add_argument(f"--{prefix}-weight", help=f"{prefix} projection weight (c x c)")
        p.add_argument(f"--{prefix}-bias", help=f"{prefix} projection bias (c)")
    p.add_argument("--raw-attention", action="store_true", help="unnormalized dot-product attention")
    p.add_argument("-o", "--output", help="output tensor")

    p = add("verify", cmd_verify, "oracle cross-check suite")
    p.add_argument("--n", type=int, help="assignment instance size")
    p.add_argument("--trials", type=int, help="assignment instances")
    p.add_argument("--corrupt-solver", action="store_true", help=argparse.SUPPRESS)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args, parser.subcommands[args.command])
        return args.func(cfg)
    except (InputError, UFTError, ValueError) as exc:
        print(f"uft: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"uft: {exc.filename or ''}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
