"""Python access to the fpam numerical core.

Spec and option dictionaries mirror the JSON configuration schema.
"""

import json

from . import _fpam
from ._fpam import FpamError, dirichlet_form_torus, lambda_M, parseval_check, sample_path

__all__ = [
    "FpamError",
    "critical_constant",
    "dalang_check",
    "dirichlet_form_torus",
    "exp_moment",
    "expected_H",
    "gamma_eval",
    "lambda_M",
    "lyapunov_prediction",
    "maximize_M",
    "mean_gamma_unit",
    "moment_u_rho",
    "parseval_check",
    "riesz",
    "product",
    "run_pipeline",
    "sample_path",
    "self_hamiltonian",
    "stationary_M",
]


def riesz(alpha, beta0, beta, dim):
    return {"alpha": alpha, "beta0": beta0, "kernel": {"type": "riesz", "beta": beta}, "dim": dim}


def product(alpha, beta0, betas):
    return {"alpha": alpha, "beta0": beta0, "kernel": {"type": "product", "betas": list(betas)}, "dim": len(betas)}


def _j(obj):
    return json.dumps(obj)


def dalang_check(spec):
    return _fpam.dalang_check(_j(spec))


def gamma_eval(spec, x):
    return _fpam.gamma_eval(_j(spec), list(x))


def expected_H(spec, t):
    return _fpam.expected_H(_j(spec), t)


def mean_gamma_unit(spec):
    return _fpam.mean_gamma_unit(_j(spec))


def self_hamiltonian(spec, horizon, n_steps, seed):
    return _fpam.self_hamiltonian(_j(spec), horizon, n_steps, seed)


def exp_moment(config, theta, t):
    return json.loads(_fpam.exp_moment(_j(config), theta, t))


def moment_u_rho(config, t):
    return json.loads(_fpam.moment_u_rho(_j(config), t))


def maximize_M(spec, options):
    return json.loads(_fpam.maximize_M(_j(spec), _j(options)))


def stationary_M(spec, options):
    return json.loads(_fpam.stationary_M(_j(spec), _j(options)))


def critical_constant(spec, M):
    return _fpam.critical_constant(_j(spec), M)


def lyapunov_prediction(spec, p, rho, M):
    return _fpam.lyapunov_prediction(_j(spec), p, rho, M)


def run_pipeline(config, pipeline, out_dir):
    return _fpam.run_pipeline(_j(config), pipeline, str(out_dir))
