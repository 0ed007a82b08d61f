"""Command-line surface: fit, advise, readout-sim, parse-check.

Exit codes: 0 success, 2 validation error, 3 numerical failure.
Flags may also be supplied through a flat `key = value` config file
(--config); explicit flags win over the file.
"""

import argparse
import sys
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from . import advisor, dataio
from .errors import NumericalError, ValidationError
from .model import LogisticModel
from .optimizer import OptimizerConfig, run, smooth_lower_bound
from .qsim import AEMode, simulate_full_readout
from .varfam import GaussianMeanField, StiefelFlow


@dataclass
class RunConfig:
    """Everything a `fit` needs; mirrors the CLI flags plus config-file extras."""

    data_path: str = ""
    covariate_limit: int = 100
    family: str = "gaussian"  # "gaussian" or "stiefel:K"
    prior_variance: float = 10.0
    estimator: str = "classical"
    m0: int = 1000
    n_measurements: int = 500
    omega: float = 0.6
    alpha0: float = 0.1
    tau: float = 100.0
    clip_threshold: float = 1.0
    max_iters: int = 500
    seed: int = 0
    trace_out: Optional[str] = None
    checkpoint_out: Optional[str] = None
    resume_from: Optional[str] = None
    # config-file-only knobs
    m_growth: str = "fixed"
    m_growth_rate: float = 0.0
    ae_mode: str = "exact"
    ae_shots: int = 1000
    patience: int = 10
    smoothing_window: int = 50
    jitter: float = 0.0

    def optimizer_config(self):
        mode = AEMode("exact") if self.ae_mode == "exact" else AEMode("shots", self.ae_shots)
        return OptimizerConfig(
            omega=self.omega,
            alpha0=self.alpha0,
            tau=self.tau,
            clip_threshold=self.clip_threshold,
            m0=self.m0,
            m_growth=self.m_growth,
            m_growth_rate=self.m_growth_rate,
            n_measurements=self.n_measurements,
            estimator=self.estimator,
            ae_mode=mode,
            max_iters=self.max_iters,
            patience=self.patience,
            smoothing_window=self.smoothing_window,
            jitter=self.jitter,
            seed=self.seed,
        )

    def make_family(self, d):
        if self.family == "gaussian":
            return GaussianMeanField.standard(d)
        if self.family.startswith("stiefel:"):
            try:
                layers = int(self.family.split(":", 1)[1])
            except ValueError:
                raise ValidationError(f"bad family spec {self.family!r}") from None
            return StiefelFlow.identity_init(d, layers)
        raise ValidationError(f"unknown family {self.family!r} (use gaussian or stiefel:K)")

    def run_hash_payload(self):
        payload = asdict(self.optimizer_config())
        payload.update(
            family=self.family,
            prior_variance=self.prior_variance,
            covariate_limit=self.covariate_limit,
        )
        return payload


# flag name in the config file -> RunConfig attribute and parser
_CONFIG_KEYS = {
    "data": ("data_path", str),
    "covariates": ("covariate_limit", int),
    "family": ("family", str),
    "prior-variance": ("prior_variance", float),
    "estimator": ("estimator", str),
    "M": ("m0", int),
    "nT": ("n_measurements", int),
    "omega": ("omega", float),
    "alpha0": ("alpha0", float),
    "tau": ("tau", float),
    "clip": ("clip_threshold", float),
    "iters": ("max_iters", int),
    "seed": ("seed", int),
    "trace-out": ("trace_out", str),
    "checkpoint": ("checkpoint_out", str),
    "resume": ("resume_from", str),
    "m-growth": ("m_growth", str),
    "m-growth-rate": ("m_growth_rate", float),
    "ae-mode": ("ae_mode", str),
    "ae-shots": ("ae_shots", int),
    "patience": ("patience", int),
    "window": ("smoothing_window", int),
    "jitter": ("jitter", float),
}


def load_config_file(path):
    """Flat `key = value` lines; blank lines and #-comments are ignored."""
    try:
        with open(path) as handle:
            text = handle.read()
    except OSError as err:
        raise ValidationError(f"cannot read config file {path}: {err}") from err
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ValidationError(f"{path} line {lineno}: expected key = value")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key not in _CONFIG_KEYS:
            raise ValidationError(f"{path} line {lineno}: unknown key {key!r}")
        attr, caster = _CONFIG_KEYS[key]
        try:
            values[attr] = caster(raw.strip())
        except ValueError:
            raise ValidationError(f"{path} line {lineno}: bad value for {key}") from None
    return values


# RunConfig attribute -> argparse dest, for flags that can override the file
_FLAG_DESTS = {
    "data_path": "data",
    "covariate_limit": "covariates",
    "family": "family",
    "prior_variance": "prior_variance",
    "estimator": "estimator",
    "m0": "m",
    "n_measurements": "nt",
    "omega": "omega",
    "alpha0": "alpha0",
    "tau": "tau",
    "clip_threshold": "clip",
    "max_iters": "iters",
    "seed": "seed",
    "trace_out": "trace_out",
    "checkpoint_out": "checkpoint",
    "resume_from": "resume",
}


def _build_run_config(args):
    config = RunConfig()
    if args.config:
        for attr, value in load_config_file(args.config).items():
            setattr(config, attr, value)
    for attr, dest in _FLAG_DESTS.items():
        value = getattr(args, dest, None)
        if value is not None:
            setattr(config, attr, value)
    if not config.data_path:
        raise ValidationError("no dataset given (use --data or a config file)")
    return config


def cmd_fit(args):
    config = _build_run_config(args)
    with open(config.data_path) as handle:
        dataset = dataio.parse_libsvm(handle.read(), config.covariate_limit)
    model = LogisticModel(dataset, config.prior_variance)
    ocfg = config.optimizer_config()
    family = config.make_family(dataset.d)
    resume = None
    if config.resume_from:
        resume = dataio.checkpoint_load(
            config.resume_from,
            config.run_hash_payload(),
            expected_family=family.family_tag,
        )
    result = run(ocfg, model, family, resume=resume)
    trace = result.trace
    if config.trace_out:
        dataio.write_trace_csv(trace, config.trace_out, window=config.smoothing_window)
    if config.checkpoint_out:
        dataio.checkpoint_save(config.checkpoint_out, result.final_state, config.run_hash_payload())
    print(f"dataset: {dataset.n_obs} observations, {dataset.d} covariates (incl. intercept)")
    print(f"family: {family.layout_tag()} ({family.n_params} parameters)")
    print(f"estimator: {ocfg.estimator}")
    print(f"iterations run: {len(trace)} (resumed at t={resume.t})" if resume else
          f"iterations run: {len(trace)}")
    if trace:
        smoothed = smooth_lower_bound(trace, config.smoothing_window)
        print(f"final lower bound (smoothed): {smoothed[-1]:.6f}")
        print(f"final gradient norm: {trace[-1].grad_norm:.6f}")
    if config.trace_out:
        print(f"trace written to {config.trace_out}")
    if config.checkpoint_out:
        print(f"checkpoint written to {config.checkpoint_out}")
    return 0


def cmd_advise(args):
    inp = advisor.AdvisorInput(n_params=args.N, n_samples=args.M, kappa=args.kappa)
    selected = advisor.select_algorithm(inp)
    print(advisor.describe_regime(inp))
    print(f"recommended: {', '.join(sorted(selected))}")
    print()
    print(f"{'algorithm':<10} {'operations':>14}  formula")
    for label in advisor.expand_readout_variants(selected):
        est = advisor.complexity_estimate(inp, label, args.epsilon)
        print(f"{est.algorithm:<10} {est.operations:>14.4g}  {est.formula}")
    return 0


def _load_gradient(spec, rng):
    if spec.startswith("random:"):
        try:
            n = int(spec.split(":", 1)[1])
        except ValueError:
            raise ValidationError(f"bad gradient spec {spec!r}") from None
        if n < 1:
            raise ValidationError("random gradient size must be >= 1")
        g = rng.standard_normal(n)
    else:
        try:
            with open(spec) as handle:
                g = np.array([float(tok) for tok in handle.read().split()])
        except OSError as err:
            raise ValidationError(f"cannot read gradient file {spec}: {err}") from err
        except ValueError:
            raise ValidationError(f"gradient file {spec} contains non-numeric entries") from None
    norm = np.linalg.norm(g)
    if norm == 0 or not np.isfinite(norm):
        raise ValidationError("gradient must be nonzero and finite")
    return g / norm


def cmd_readout_sim(args):
    rng = np.random.default_rng(args.seed)
    g = _load_gradient(args.g, rng)
    n = g.size
    estimates = np.empty((args.reps, n))
    for r in range(args.reps):
        _, estimates[r] = simulate_full_readout(g, args.nT, rng)
    bias = estimates.mean(axis=0) - g
    var = estimates.var(axis=0)
    print(f"N = {n}, n_T = {args.nT}, replicates = {args.reps}")
    if n <= 16:
        print(f"{'i':>4} {'g_i':>12} {'mean':>12} {'bias':>12} {'variance':>12}")
        for i in range(n):
            print(f"{i + 1:>4} {g[i]:>12.6f} {estimates[:, i].mean():>12.6f} "
                  f"{bias[i]:>12.2e} {var[i]:>12.2e}")
    print(f"max |bias|      : {np.abs(bias).max():.3e}")
    print(f"mean variance   : {var.mean():.3e}")
    print(f"variance bound  : {n / args.nT:.3e}  (N / n_T)")
    return 0


def cmd_parse_check(args):
    with open(args.file) as handle:
        dataset = dataio.parse_libsvm(handle.read(), args.covariates)
    ones = int(dataset.labels.sum())
    print(f"{args.file}: OK")
    print(f"observations : {dataset.n_obs}")
    print(f"covariates   : {dataset.d} (including intercept)")
    print(f"labels       : {ones} positive, {dataset.n_obs - ones} negative")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="ngvb",
        description="Natural-gradient variational Bayes with simulated quantum readout.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", help="run the optimizer on a LIBSVM dataset")
    fit.add_argument("--data", type=str, help="LIBSVM data file")
    fit.add_argument("--config", type=str, help="flat key = value config file")
    fit.add_argument("--covariates", type=int, help="covariate limit (default 100)")
    fit.add_argument("--family", type=str, help="gaussian | stiefel:K")
    fit.add_argument("--estimator", type=str,
                     choices=["classical", "full-readout", "gauss-southwell"])
    fit.add_argument("--M", dest="m", type=int, help="Monte Carlo samples per iteration")
    fit.add_argument("--nT", dest="nt", type=int, help="readout measurements per iteration")
    fit.add_argument("--omega", type=float, help="momentum weight in (0,1)")
    fit.add_argument("--alpha0", type=float, help="initial learning rate")
    fit.add_argument("--tau", type=float, help="learning-rate horizon")
    fit.add_argument("--clip", dest="clip", type=float, help="gradient clip threshold")
    fit.add_argument("--iters", type=int, help="maximum iterations")
    fit.add_argument("--seed", type=int)
    fit.add_argument("--prior-variance", dest="prior_variance", type=float)
    fit.add_argument("--trace-out", dest="trace_out", type=str)
    fit.add_argument("--checkpoint", dest="checkpoint", type=str, help="write checkpoint here")
    fit.add_argument("--resume", dest="resume", type=str, help="resume from checkpoint")
    fit.set_defaults(handler=cmd_fit)

    advise = sub.add_parser("advise", help="recommend a pseudoinverse algorithm")
    advise.add_argument("--N", type=int, required=True, help="parameter count")
    advise.add_argument("--M", type=int, required=True, help="sample count")
    advise.add_argument("--kappa", type=float, required=True, help="design condition number")
    advise.add_argument("--epsilon", type=float, default=0.1, help="target precision")
    advise.set_defaults(handler=cmd_advise)

    sim = sub.add_parser("readout-sim", help="empirical bias/variance of the readout")
    sim.add_argument("--g", type=str, required=True, help="gradient file or random:N")
    sim.add_argument("--nT", type=int, required=True)
    sim.add_argument("--reps", type=int, required=True)
    sim.add_argument("--seed", type=int, default=0)
    sim.set_defaults(handler=cmd_readout_sim)

    check = sub.add_parser("parse-check", help="validate a LIBSVM file")
    check.add_argument("file", type=str)
    check.add_argument("--covariates", type=int, default=100)
    check.set_defaults(handler=cmd_parse_check)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except ValidationError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except NumericalError as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return 3
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
