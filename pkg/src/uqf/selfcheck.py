"""Built-in consistency checks between the automata and brute-force oracles.

Each check returns a :class:`CheckResult` with the largest error it saw.
``perturb`` lets a caller tamper with every exactly-constructed automaton
before it is compared, which is how the checks' sensitivity is tested.
"""
import itertools
from dataclasses import dataclass
from typing import Callable, List, Optional

import numpy as np

from .envs import random_pomdp
from .pomdp import Pomdp, StatePolicy, exact_wfa, oracle_g, oracle_prob, probability_wfa, sample_episodes
from .spectral import (
    Basis,
    Dataset,
    JlProjection,
    compressed_estimate,
    estimate_hankel,
    extract_examples,
    recover_from_hankel,
    recover_from_sketch,
    select_basis,
)
from .wfa import Wfa, evaluate, neumann_omega, neumann_tail_bound, to_uqf

Perturb = Optional[Callable[[Wfa], Wfa]]


@dataclass
class CheckResult:
    name: str
    max_error: float
    tolerance: float
    passed: bool
    detail: str = ""

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.name:<22} max_error={self.max_error:.3e}  tol={self.tolerance:.0e}  {self.detail}".rstrip()


def perturb_transition(delta=1e-3, symbol=0, i=0, j=0):
    """Hook that adds ``delta`` to one transition-matrix entry."""

    def hook(b: Wfa) -> Wfa:
        mats = np.array(b.transitions)
        mats[symbol, i, j] += delta
        return b.replace(transitions=mats)

    return hook


def chain_fixture(gamma=0.5) -> Pomdp:
    T = np.zeros((2, 2, 2))
    T[:, 0, :] = np.eye(2)
    T[:, 1, :] = [[0.0, 1.0], [1.0, 0.0]]
    return Pomdp(T=T, Z=np.ones((2, 2, 1)), R=np.array([[0.0, 0.0], [1.0, 1.0]]), mu=[1.0, 0.0], gamma=gamma)


def fixtures():
    """Chain plus a few small random models, each with a random state policy."""
    out = [(chain_fixture(), StatePolicy.uniform(2, 2))]
    for seed, (k, nA, nO) in enumerate([(2, 2, 2), (3, 2, 2), (3, 3, 2), (4, 2, 3)]):
        model = random_pomdp(k, nA, nO, seed=seed)
        pi = np.random.default_rng(seed).dirichlet(np.ones(nA), size=k)
        out.append((model, StatePolicy(pi)))
    return out


def histories(num_actions, num_obs, max_len):
    symbols = [(a, o) for a in range(num_actions) for o in range(num_obs)]
    for n in range(max_len + 1):
        yield from itertools.product(symbols, repeat=n)


def _apply(perturb, b):
    return perturb(b) if perturb is not None else b


def check_reward_automaton(cases, max_len=4, perturb: Perturb = None, tol=1e-10):
    err = 0.0
    for model, pi in cases:
        b = _apply(perturb, exact_wfa(model, pi))
        for h in histories(model.num_actions, model.num_obs, max_len):
            err = max(err, abs(evaluate(b, h) - oracle_g(model, pi, h)))
    return CheckResult("reward-automaton", err, tol, err < tol, f"histories<={max_len}")


def check_probability(cases, max_len=3, perturb: Perturb = None, tol=1e-12, sum_tol=1e-10):
    err = sum_err = 0.0
    for model, pi in cases:
        p = _apply(perturb, probability_wfa(model, pi))
        for h in histories(model.num_actions, model.num_obs, max_len):
            err = max(err, abs(evaluate(p, h) - oracle_prob(model, pi, h)))
        symbols = [(a, o) for a in range(model.num_actions) for o in range(model.num_obs)]
        total = sum(evaluate(p, h) for h in itertools.product(symbols, repeat=max_len))
        sum_err = max(sum_err, abs(total - 1.0))
    ok = err < tol and sum_err < sum_tol
    return CheckResult("trajectory-probability", max(err, sum_err), tol, ok, f"mass error {sum_err:.1e}")


def check_neumann(cases, gammas=(0.3, 0.9), terms=50, perturb: Perturb = None, slack=1e-12):
    """Closed-form terminal vector against the truncated series.

    Passes when every gap is within its tail bound (plus rounding ``slack``);
    the reported error is the largest gap.
    """
    worst = 0.0
    ok = True
    for model, pi in cases:
        b = _apply(perturb, exact_wfa(model, pi))
        for gamma in gammas:
            gap = float(np.max(np.abs(to_uqf(b, gamma).omega - neumann_omega(b, gamma, terms))))
            ok &= gap <= neumann_tail_bound(b, gamma, terms) + slack
            worst = max(worst, gap)
    return CheckResult("neumann-tail", worst, slack, ok, f"terms={terms}, bound gamma^(N+1) rho/(1-gamma rho)")


def _effective_rank(m, rtol=1e-9):
    s = np.linalg.svd(m, compute_uv=False)
    return int(np.sum(s > rtol * s[0])) if s[0] > 0 else 0


def exact_moment_recovery(model, pi, basis_len=2, perturb: Perturb = None):
    """Automaton recovered from Hankel blocks filled with exact values of ``g``."""
    b = _apply(perturb, exact_wfa(model, pi))
    nA, nO = model.num_actions, model.num_obs
    words = list(histories(nA, nO, 2 * basis_len + 1))
    data = Dataset.from_function(lambda w: evaluate(b, w), words, nA, nO)
    hankel = estimate_hankel(data, Basis.complete(nA, nO, basis_len))
    return recover_from_hankel(hankel, _effective_rank(hankel.H_lambda))[0]


def check_exact_recovery(cases, max_len=5, perturb: Perturb = None, tol=1e-8):
    err = 0.0
    for model, pi in cases:
        if model.num_states > 3:
            continue
        learned = exact_moment_recovery(model, pi, perturb=perturb)
        for h in histories(model.num_actions, model.num_obs, max_len):
            err = max(err, abs(evaluate(learned, h) - oracle_g(model, pi, h)))
    return CheckResult("exact-moment-recovery", err, tol, err < tol, f"strings<={max_len}")


def check_identity_sketch(probes=20, rank=2, tol=1e-10, seed=0):
    """Identity projections must reproduce the plain estimator's function."""
    model = chain_fixture()
    episodes = sample_episodes(model, StatePolicy.uniform(2, 2), 200, 6, seed)
    data = extract_examples(episodes, 2, 1)
    basis = select_basis(data, 10, 10, 3)
    plain, _ = recover_from_hankel(estimate_hankel(data, basis), rank)
    pu, pv = JlProjection.identity(basis.prefixes), JlProjection.identity(basis.suffixes)
    sketched, _, _ = recover_from_sketch(compressed_estimate(data, basis, pu, pv), basis, pu, rank)
    rng = np.random.default_rng(seed)
    words = [tuple((int(rng.integers(2)), 0) for _ in range(int(rng.integers(0, 7)))) for _ in range(probes)]
    err = max(abs(evaluate(plain, w) - evaluate(sketched, w)) for w in words)
    return CheckResult("identity-sketch", err, tol, err <= tol, f"{probes} probes")


def run_selfcheck(perturb: Perturb = None) -> List[CheckResult]:
    cases = fixtures()
    return [
        check_reward_automaton(cases, perturb=perturb),
        check_probability(cases, perturb=perturb),
        check_neumann(cases, perturb=perturb),
        check_exact_recovery(cases, perturb=perturb),
        check_identity_sketch(),
    ]
