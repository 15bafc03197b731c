"""Command-line front end: ``simulate``, ``run``, ``summarize``, ``gradcheck``.

Exit codes: 0 success, 1 input error (or a failed gradient check),
2 sampler abort.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import diagnostics, io, simulate
from .models import (
    ConstrainedLassoModel,
    GraphicalLassoModel,
    InverseGammaPrior,
    LassoModel,
    MatrixCompletionModel,
    SparseLowRankModel,
    vech_index,
)
from .prox import DomainError
from .sampler import HmcConfig, SamplerError, sample

logger = logging.getLogger("proxmcmc")

EXIT_OK, EXIT_INPUT, EXIT_SAMPLER = 0, 1, 2

PRESETS = ("microbiome", "matrix_completion", "cross_signal", "glasso")

# gradient-check thresholds by model kind
GRADCHECK_TOL = {
    "lasso": 1e-5,
    "constrained_lasso": 1e-5,
    "matrix_completion": 1e-5,
    "glasso": 1e-4,
    "slr": 1e-4,
}


# ---------------------------------------------------------------- simulate


def _simulate_preset(preset, seed, out_dir, args):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = {"model": "", "seed": seed}
    if preset == "microbiome":
        X, y, beta = simulate.simulate_microbiome(seed)
        p = X.shape[1]
        io.write_csv_matrix(out / "X.csv", [f"x{j + 1}" for j in range(p)], X)
        io.write_csv_matrix(out / "y.csv", ["y"], y[:, None])
        io.write_csv_matrix(out / "A.csv", [f"a{j + 1}" for j in range(p)], np.ones((1, p)))
        io.write_csv_matrix(out / "b.csv", ["b"], [[0.0]])
        io.write_named_values(out / "truth.csv", [f"beta[{j + 1}]" for j in range(p)], beta)
        cfg.update(model="constrained_lasso", X="X.csv", y="y.csv", A="A.csv", b="b.csv",
                   r_sigma2=0.1, s_sigma2=0.1, r_alpha=1, s_alpha=p + 1, **{"lambda": 1e-6},
                   warmup=2000, samples=10000)
    elif preset == "matrix_completion":
        Y, mask, truth = simulate.simulate_matrix_completion(
            args.rows, args.cols, args.rank, args.mask_fraction, args.sigma, seed
        )
        r, c = np.nonzero(~mask)
        io.write_csv_matrix(out / "observed.csv", ["i", "j", "value"],
                            np.column_stack([r + 1, c + 1, Y[r, c]]))
        mr, mc = np.nonzero(mask)
        io.write_named_values(out / "truth.csv", [f"x[{i + 1},{j + 1}]" for i, j in zip(mr, mc)],
                              truth[mr, mc])
        io.write_named_values(out / "truth_noisy.csv",
                              [f"x[{i + 1},{j + 1}]" for i, j in zip(mr, mc)], Y[mr, mc])
        cfg.update(model="matrix_completion", observed="observed.csv", rows=args.rows,
                   cols=args.cols, r_sigma2=0.01, s_sigma2=0.01, r_alpha=1,
                   s_alpha=args.rows * args.cols + 1, **{"lambda": 1e-3},
                   warmup=1000, samples=2000, adapt_mass="true")
    elif preset == "cross_signal":
        Z, Xs, y, gamma, B = simulate.simulate_cross_signal(seed)
        n, q, r = Xs.shape
        io.write_csv_matrix(out / "Z.csv", [f"z{j + 1}" for j in range(Z.shape[1])], Z)
        io.write_csv_matrix(out / "Xmats.csv",
                            [f"x[{i + 1},{j + 1}]" for j in range(r) for i in range(q)],
                            Xs.transpose(0, 2, 1).reshape(n, -1))
        io.write_csv_matrix(out / "y.csv", ["y"], y[:, None])
        names = [f"gamma[{i + 1}]" for i in range(gamma.size)] + [
            f"B[{i + 1},{j + 1}]" for j in range(r) for i in range(q)
        ]
        io.write_named_values(out / "truth.csv", names,
                              np.concatenate([gamma, B.ravel(order="F")]))
        cfg.update(model="slr", Z="Z.csv", Xmats="Xmats.csv", y="y.csv", mat_rows=q,
                   mat_cols=r, rank=2, r_sigma2=0.01, s_sigma2=0.01, s_alpha=2,
                   **{"lambda": 1e-3}, warmup=2000, samples=10000, adapt_mass="true")
    elif preset == "glasso":
        data, Theta = simulate.simulate_glasso(seed)
        p = Theta.shape[0]
        io.write_csv_matrix(out / "data.csv", [f"v{j + 1}" for j in range(p)], data)
        rows, cols = vech_index(p)
        names = [f"theta[{i + 1},{j + 1}]" for i, j in zip(rows, cols)]
        io.write_named_values(out / "truth.csv", names, Theta[rows, cols])
        cfg.update(model="glasso", data="data.csv", r_alpha=1, s_alpha=p + 1,
                   **{"lambda": 1e-2}, warmup=1000, samples=2000, adapt_mass="true")
    else:
        raise io.InputError(f"unknown preset {preset!r}; choose from {', '.join(PRESETS)}")
    io.write_config(out / "config.txt", cfg)
    return out


# ---------------------------------------------------------------- run


def _get(cfg, key, cast=float, default=None, required=False):
    if key not in cfg:
        if required:
            raise io.InputError(f"config is missing required key {key!r}")
        return default
    try:
        return cast(cfg[key])
    except ValueError:
        raise io.InputError(f"config key {key!r}: cannot parse {cfg[key]!r}") from None


def _bool(value):
    v = str(value).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(value)


def _prior(cfg, name, scale_optional=False):
    r, s = _get(cfg, f"r_{name}"), _get(cfg, f"s_{name}")
    if r is None and (s is None or scale_optional):
        return None
    if r is None or s is None:
        raise io.InputError(f"config must give both r_{name} and s_{name}")
    if not (r > 0 and s > 0):
        raise io.InputError(f"prior parameters for {name} must be positive")
    return InverseGammaPrior(r, s)


def build_model(cfg, base=Path(".")):
    """Construct a model from a parsed config; data paths are relative to `base`."""

    def load(key):
        return io.read_csv_matrix(base / _get(cfg, key, str, required=True))[1]

    kind = _get(cfg, "model", str, required=True)
    lam = _get(cfg, "lambda", required=True)
    if not lam > 0:
        raise io.InputError("lambda must be positive")
    s2_prior = _prior(cfg, "sigma2")
    a_prior = _prior(cfg, "alpha", scale_optional=kind == "slr")
    try:
        if kind in ("lasso", "constrained_lasso"):
            X, y = load("X"), load("y").ravel()
            if kind == "lasso":
                return LassoModel(X, y, lam, s2_prior, a_prior)
            return ConstrainedLassoModel(X, y, load("A"), load("b").ravel(), lam, s2_prior, a_prior)
        if kind == "glasso":
            if "data" in cfg:
                data = load("data")
                data = data - data.mean(axis=0)
                S, n = data.T @ data / data.shape[0], data.shape[0]
            else:
                S, n = load("S"), _get(cfg, "n", required=True)
            return GraphicalLassoModel(S, n, lam, a_prior)
        if kind == "matrix_completion":
            trip = load("observed")
            if trip.shape[1] != 3:
                raise io.InputError("observed-entry file needs columns i, j, value")
            rows, cols = _get(cfg, "rows", int, required=True), _get(cfg, "cols", int, required=True)
            i, j = trip[:, 0].astype(int) - 1, trip[:, 1].astype(int) - 1
            return MatrixCompletionModel((rows, cols), i, j, trip[:, 2], lam, s2_prior, a_prior)
        if kind == "slr":
            Z, flat, y = load("Z"), load("Xmats"), load("y").ravel()
            q, r = _get(cfg, "mat_rows", int, required=True), _get(cfg, "mat_cols", int, required=True)
            if flat.shape[1] != q * r:
                raise io.InputError(f"Xmats has {flat.shape[1]} columns, expected {q * r}")
            Xs = flat.reshape(flat.shape[0], r, q).transpose(0, 2, 1)
            rank = _get(cfg, "rank", int, required=True)
            if a_prior is None and "s_alpha" in cfg:
                if not _get(cfg, "s_alpha") > 0:
                    raise io.InputError("prior parameters for alpha must be positive")
                # scale from the least-squares nuclear norm, shape from the config
                m = SparseLowRankModel(Z, Xs, y, rank, lam, s2_prior)
                a_prior = InverseGammaPrior(m.alpha_prior.r, _get(cfg, "s_alpha"))
            return SparseLowRankModel(Z, Xs, y, rank, lam, s2_prior, a_prior)
    except DomainError as exc:
        raise io.InputError(str(exc)) from None
    raise io.InputError(f"unknown model kind {kind!r}")


def hmc_config(cfg, seed=None):
    mass = cfg.get("mass")
    try:
        return HmcConfig(
            n_warmup=_get(cfg, "warmup", int, 1000),
            n_samples=_get(cfg, "samples", int, 1000),
            leapfrog_steps=_get(cfg, "leapfrog_steps", int, 32),
            jitter=_get(cfg, "jitter", float, 0.2),
            initial_step_size=_get(cfg, "step_size", float, 0.1),
            target_accept=_get(cfg, "target_accept", float, 0.8),
            mass=None if mass is None else float(mass),
            adapt_mass=_get(cfg, "adapt_mass", _bool, False),
            seed=_get(cfg, "seed", int, 0) if seed is None else seed,
        )
    except ValueError as exc:
        raise io.InputError(str(exc)) from None


def _run_chain(args):
    model, config = args
    return sample(model, config)


def run(cfg, base=Path("."), out_dir=None, level=0.95):
    """Build the model, sample, and write chain/summary files. Returns the chains."""
    model = build_model(cfg, base)
    config = hmc_config(cfg)
    n_chains = _get(cfg, "chains", int, 1)
    out = Path(out_dir or cfg.get("out_dir", "."))
    if not out.is_absolute() and out_dir is None:
        out = base / out
    out.mkdir(parents=True, exist_ok=True)

    if n_chains == 1:
        chains = [sample(model, config)]
    else:
        seeds = np.random.SeedSequence(config.seed).spawn(n_chains)
        jobs = []
        for ss in seeds:
            c = hmc_config(cfg, seed=int(ss.generate_state(1, np.uint64)[0]))
            jobs.append((model, c))
        with ProcessPoolExecutor(max_workers=n_chains) as pool:
            chains = list(pool.map(_run_chain, jobs))

    for k, chain in enumerate(chains):
        suffix = "" if n_chains == 1 else f"_{k + 1}"
        io.write_chain(out / f"chain{suffix}.csv", chain)
    draws = np.vstack([c.draws for c in chains])
    dnames, dvals = model.derived(draws)
    if dnames:
        io.write_csv_matrix(out / "derived.csv", dnames, dvals)
    summaries = diagnostics.summarize(draws, model.names, level)
    summaries += diagnostics.summarize(dvals, dnames, level) if dnames else []
    extra = {
        "sampler": [
            {
                "seed": int(c.seed),
                "accept_rate": c.accept_rate,
                "step_size": c.step_size_final,
                "divergences": c.divergence_count,
            }
            for c in chains
        ]
    }
    io.write_summary(out / "summary.json", summaries, level, extra)
    return chains


# ---------------------------------------------------------------- gradcheck


def gradcheck_model(kind, rng):
    """A small random problem of the given kind and a state generator."""
    if kind in ("lasso", "constrained_lasso"):
        X, y = rng.standard_normal((40, 6)), rng.standard_normal(40)
        if kind == "lasso":
            return LassoModel(X, y, 0.05)
        return ConstrainedLassoModel(X, y, np.ones((1, 6)), [0.0], 0.05)
    if kind == "glasso":
        data, _ = simulate.simulate_glasso(rng, p=4, n=60)
        return GraphicalLassoModel(data.T @ data / 60, 60, 0.05)
    if kind == "matrix_completion":
        Y, mask, _ = simulate.simulate_matrix_completion(6, 5, 2, 0.3, 0.1, rng)
        r, c = np.nonzero(~mask)
        return MatrixCompletionModel((6, 5), r, c, Y[r, c], 0.05)
    if kind == "slr":
        Z, Xs = rng.standard_normal((30, 2)), rng.standard_normal((30, 4, 4))
        y = Z.sum(axis=1) + Xs[:, 1, :].sum(axis=1) + rng.standard_normal(30)
        return SparseLowRankModel(Z, Xs, y, 2, 0.05)
    raise io.InputError(f"unknown model kind {kind!r}")


def gradcheck(kind, trials, seed=0, h=1e-5, scale=0.5, min_margin=1e-3):
    """Gradient check at random states; returns ``(errors, skipped)``."""
    rng = np.random.default_rng(seed)
    model = gradcheck_model(kind, rng)
    errors, skipped = [], 0
    while len(errors) < trials:
        state = model.random_state(rng, scale)
        if model.kink_distance(state) < min_margin:
            skipped += 1
            continue
        errors.append(diagnostics.gradient_check(model, state, h))
    return errors, skipped


# ---------------------------------------------------------------- entry point


def _common(parser, suppress):
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--seed", type=int, default=default, help="random seed")
    parser.add_argument("--out-dir", default=default, help="output directory")
    parser.add_argument("--lambda", dest="lam", type=float, default=default, help="envelope scale")
    parser.add_argument("--warmup", type=int, default=default, help="warmup iterations")
    parser.add_argument("--samples", type=int, default=default, help="post-warmup draws")
    parser.add_argument("-v", "--verbose", action="store_true", default=default)


def make_parser():
    parser = argparse.ArgumentParser(prog="proxmcmc", description=__doc__.splitlines()[0])
    _common(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write a synthetic dataset and a ready-to-run config")
    _common(p, suppress=True)
    p.add_argument("preset", choices=PRESETS)
    p.add_argument("--rows", type=int, default=250)
    p.add_argument("--cols", type=int, default=200)
    p.add_argument("--rank", type=int, default=3)
    p.add_argument("--mask-fraction", type=float, default=0.2)
    p.add_argument("--sigma", type=float, default=0.1)

    p = sub.add_parser("run", help="sample a model described by a key=value config")
    _common(p, suppress=True)
    p.add_argument("--config", required=True)
    p.add_argument("--level", type=float, default=0.95)

    p = sub.add_parser("summarize", help="posterior summary of a chain CSV")
    _common(p, suppress=True)
    p.add_argument("--chain", required=True)
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--truth", help="name,value CSV; reports interval coverage")

    p = sub.add_parser("gradcheck", help="finite-difference check of a model gradient")
    _common(p, suppress=True)
    p.add_argument("--model", required=True, choices=sorted(GRADCHECK_TOL))
    p.add_argument("--trials", type=int, default=20)
    return parser


def _cmd_simulate(args):
    seed = 0 if args.seed is None else args.seed
    out = _simulate_preset(args.preset, seed, args.out_dir or ".", args)
    print(f"wrote {args.preset} data to {out}")
    return EXIT_OK


def _cmd_run(args):
    path = Path(args.config)
    cfg = io.read_config(path)
    for key, val in (("seed", args.seed), ("lambda", args.lam), ("warmup", args.warmup),
                     ("samples", args.samples)):
        if val is not None:
            cfg[key] = str(val)
    chains = run(cfg, base=path.parent, out_dir=args.out_dir, level=args.level)
    for c in chains:
        print(f"seed {c.seed}: accept {c.accept_rate:.3f}, step {c.step_size_final:.3g}, "
              f"divergences {c.divergence_count}")
    return EXIT_OK


def _cmd_summarize(args):
    names, draws = io.read_chain(args.chain)
    summaries = diagnostics.summarize(draws, names, args.level)
    doc = {"level": args.level, "parameters": [s.to_dict() for s in summaries]}
    if args.truth:
        truth = io.read_named_values(args.truth)
        doc["coverage"] = diagnostics.coverage(summaries, truth)
    text = json.dumps(doc, indent=2)
    if args.out_dir:
        Path(args.out_dir).mkdir(parents=True, exist_ok=True)
        (Path(args.out_dir) / "summary.json").write_text(text + "\n")
    print(text)
    return EXIT_OK


def _cmd_gradcheck(args):
    errors, skipped = gradcheck(args.model, args.trials, seed=args.seed or 0)
    tol = GRADCHECK_TOL[args.model]
    for k, err in enumerate(errors, start=1):
        print(f"trial {k:3d}: max relative error {err:.3e}")
    worst = max(errors)
    status = "PASS" if worst < tol else "FAIL"
    print(f"{status} {args.model}: worst {worst:.3e} (tolerance {tol:g}, {skipped} states skipped near kinks)")
    return EXIT_OK if worst < tol else EXIT_INPUT


def main(argv=None):
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handlers = {"simulate": _cmd_simulate, "run": _cmd_run,
                "summarize": _cmd_summarize, "gradcheck": _cmd_gradcheck}
    try:
        return handlers[args.command](args)
    except io.InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SamplerError as exc:
        print(f"sampler aborted: {exc}", file=sys.stderr)
        return EXIT_SAMPLER


if __name__ == "__main__":
    sys.exit(main())
