import json
import math
from fractions import Fraction

import numpy as np
import pytest
import sympy
from hypothesis import given, strategies as st

from lagvae.dual import (CONSTRAINT_KINDS, ConfigError, DivergenceError, DualConfig, DualState,
                         GradientError, InfeasibleError, evaluate, explicit_lagvae_coefficients,
                         gradients, init_state, load_config, primal_oracle, run_infovae_baseline,
                         run_lagvae, select_epsilon)
from lagvae.estimators import InfoVAE, LagrangianVAE
from lagvae.tabular import (KernelSpec, elbo, feasible_model, kl_expression, mi_bounds, mmd_z,
                            mutual_information)
from lagvae.objective import Signature


def config(**kw):
    base = dict(nx=3, nz=2, q_x=(0.5, 0.3, 0.2), p_z=(0.6, 0.4), alpha1=-1.0,
                constraints=[("neg_elbo", 1.2), ("mmd_z", 0.01)], seed=0, iters=200)
    base.update(kw)
    return DualConfig(**base)


def all_constraints(nx, nz, rng, **kw):
    qx = rng.dirichlet(np.ones(nx))
    pz = rng.dirichlet(np.ones(nz))
    return DualConfig(nx=nx, nz=nz, q_x=tuple(qx / qx.sum()), p_z=tuple(pz / pz.sum()),
                      constraints=[(k, 1.0) for k in CONSTRAINT_KINDS], seed=int(rng.integers(1e6)),
                      **kw)


def fd_check(cfg, state, h=1e-5, rel=1e-5, abs_=1e-8):
    g = gradients(state, cfg)
    for which in (0, 1):
        L = state.logits_q if which == 0 else state.logits_p
        for idx in np.ndindex(L.shape):
            vals = []
            for sgn in (1, -1):
                L2 = L.copy()
                L2[idx] += sgn * h
                s2 = DualState(L2 if which == 0 else state.logits_q,
                               L2 if which == 1 else state.logits_p, state.lambdas)
                vals.append(evaluate(s2, cfg))
            fd = (vals[0]["f"] - vals[1]["f"]) / (2 * h)
            an = g["f"][which][idx]
            assert abs(fd - an) <= rel * abs(fd) + abs_, ("f", which, idx, fd, an)
            for k in range(len(cfg.constraints)):
                fd = (vals[0]["D"][k] - vals[1]["D"][k]) / (2 * h)
                an = g["constraints"][k][which][idx]
                assert abs(fd - an) <= rel * abs(fd) + abs_, (cfg.kinds[k], which, idx, fd, an)


@pytest.mark.parametrize("alpha1,alpha2", [(1.0, 0.0), (-1.0, 0.0), (0.7, -0.3), (-2.0, 1.5)])
def test_gradients_match_finite_differences(alpha1, alpha2):
    rng = np.random.default_rng(int(10 * alpha1 + alpha2 + 100))
    for nx, nz in [(2, 2), (3, 2), (4, 3)]:
        cfg = all_constraints(nx, nz, rng, alpha1=alpha1, alpha2=alpha2)
        fd_check(cfg, init_state(cfg))


def test_values_match_tabular_engine():
    rng = np.random.default_rng(3)
    cfg = all_constraints(4, 3, rng, alpha1=1.0, kernel_sigma=0.8)
    st_ = init_state(cfg)
    v = evaluate(st_, cfg)
    m = st_.model(cfg)
    b = mi_bounds(m)
    assert v["I_q"] == pytest.approx(b.i_q, abs=1e-12)
    assert v["I_q_upper"] == pytest.approx(b.i_q_upper, abs=1e-12)
    assert v["I_q_lower"] == pytest.approx(b.i_q_lower, abs=1e-12)
    assert v["I_p_upper"] == pytest.approx(b.i_p_upper, abs=1e-12)
    assert v["I_p_lower"] == pytest.approx(b.i_p_lower, abs=1e-12)
    assert v["elbo"] == pytest.approx(elbo(m), abs=1e-12)
    expect = {"neg_elbo": -elbo(m), "kl_joint_qp": kl_expression(m, "q", Signature.JOINT),
              "kl_z_qp": kl_expression(m, "q", Signature.MARG_Z),
              "kl_z_pq": kl_expression(m, "p", Signature.MARG_Z),
              "mmd_z": mmd_z(m, KernelSpec(sigma=0.8))}
    for k, d in zip(cfg.kinds, v["D"]):
        assert d == pytest.approx(expect[k], abs=1e-12)


def test_lower_bound_gradient_is_reconstruction_gradient():
    cfg = config(alpha1=-1.0, constraints=[("neg_elbo", 1.0)])
    st_ = init_state(cfg)
    g = gradients(st_, cfg)["f"][0]
    # gradient of -E_q[log p(x|z)] with the decoder fixed
    tq = np.exp(st_.logits_q) / np.exp(st_.logits_q).sum(1, keepdims=True)
    tp = np.exp(st_.logits_p) / np.exp(st_.logits_p).sum(1, keepdims=True)
    lin = -np.array(cfg.q_x)[:, None] * np.log(tp.T)
    expect = tq * (lin - (lin * tq).sum(1, keepdims=True))
    assert np.allclose(g, expect, atol=1e-14)


def test_gradient_error_on_infinite_constraint():
    cfg = config(constraints=[("kl_z_pq", 1.0)])
    st_ = init_state(cfg)
    st_.logits_q[:, 1] = -1e4  # q(z) puts no mass on z=1
    with pytest.raises(GradientError) as err:
        gradients(st_, cfg)
    assert err.value.constraint == "kl_z_pq"


def test_no_ascent_at_consistent_model():
    cfg = config(alpha1=0.0, constraints=[("kl_joint_qp", 0.1), ("mmd_z", 0.1)], iters=1)
    m = feasible_model(cfg.q_x, cfg.p_z)
    st_ = DualState(np.log(m.theta_q), np.log(m.theta_p), np.ones(2))
    v = evaluate(st_, cfg)
    assert all(d - e < 0 for d, e in zip(v["D"], cfg.epsilons))


# ------------------------------------------------------------------ config

def test_config_requires_keys(tmp_path):
    d = config().to_dict()
    for key in ("nx", "q_x", "constraints", "seed", "alpha1"):
        bad = dict(d)
        del bad[key]
        with pytest.raises(ConfigError) as err:
            DualConfig.from_dict(bad)
        assert err.value.key == key and key in str(err.value)
    f = tmp_path / "c.json"
    f.write_text(json.dumps(d))
    assert load_config(str(f)) == config()


@pytest.mark.parametrize("change", [
    {"rho_theta": 0.0}, {"rho_lambda": -1.0}, {"constraints": [("neg_elbo", 0.0)]},
    {"constraints": [("neg_elbo", float("inf"))]}, {"constraints": [("bogus", 1.0)]},
    {"q_x": (0.5, 0.5, 0.1)}, {"gamma": (0.1,)}, {"gamma": (-0.1, 0.1)}, {"iters": -1},
])
def test_config_rejects_invalid(change):
    with pytest.raises(ConfigError):
        config(**change)


def test_unknown_key_rejected():
    d = config().to_dict()
    d["bogus"] = 1
    with pytest.raises(ConfigError, match="bogus"):
        DualConfig.from_dict(d)


# ------------------------------------------------------------------- runs

def test_trace_shape_and_projection():
    cfg = config(iters=300, rho_lambda=50.0)
    tr = run_lagvae(cfg)
    assert len(tr) == cfg.iters + 1
    assert [r.iter for r in tr.rows] == list(range(cfg.iters + 1))
    assert tr.rows[0].lambdas == (1.0, 1.0)
    assert all(l >= 0 for r in tr.rows for l in r.lambdas)
    assert any(l == 0 for r in tr.rows for l in r.lambdas)
    csv = tr.to_csv().splitlines()
    assert csv[0] == "iter,lambda_1,lambda_2,D_1,D_2,f,I_q,I_q_upper,I_q_lower,elbo"
    assert len(csv) == cfg.iters + 2


def test_runs_are_deterministic():
    cfg = config(iters=400)
    assert run_lagvae(cfg).to_csv() == run_lagvae(cfg).to_csv()
    assert run_lagvae(cfg).to_csv() != run_lagvae(cfg.replace(seed=1)).to_csv()


def test_running_best_feasible_is_nonincreasing():
    cfg = config(iters=2000, alpha1=1.0)
    best = run_lagvae(cfg).best_feasible_f()
    finite = [b for b in best if math.isfinite(b)]
    assert finite and all(a >= b for a, b in zip(finite, finite[1:]))


def test_alpha_zero_ends_feasible():
    cfg = config(alpha1=0.0, iters=5000, constraints=[("kl_joint_qp", 0.05), ("mmd_z", 0.005)])
    r = run_lagvae(cfg).final
    assert all(d <= 1.05 * e for d, e in zip(r.D, cfg.epsilons))


def test_divergence_error_carries_trace():
    cfg = config(rho_theta=1e6, iters=200, alpha1=-50.0, constraints=[("kl_z_pq", 1e-6)])
    with pytest.raises(DivergenceError) as err:
        run_lagvae(cfg)
    assert err.value.trace is not None and len(err.value.trace) >= 1


def test_missing_epsilon_needs_selection():
    cfg = config(constraints=[("neg_elbo", None), ("mmd_z", None)], gamma=(0.1, 0.01),
                 select_iters=500)
    with pytest.raises(ConfigError):
        run_lagvae(cfg)
    eps, eps_hat = select_epsilon(cfg)
    assert np.allclose(eps - eps_hat, cfg.gamma)
    assert np.all(eps > eps_hat)
    run_lagvae(cfg.with_epsilons(eps))


def test_selection_with_zero_slack_is_witnessed():
    cfg = config(constraints=[("kl_joint_qp", None), ("kl_z_qp", None)], gamma=(0.0, 0.0),
                 select_iters=3000)
    eps, eps_hat = select_epsilon(cfg)
    assert np.array_equal(eps, eps_hat)
    # the consistent model is reachable, so both KLs are driven towards 0
    assert eps_hat.max() < 1e-3


def test_baseline_keeps_lambdas_frozen():
    cfg = config(baseline_lambdas=(1.0, 100.0), iters=300)
    tr = run_infovae_baseline(cfg)
    assert all(r.lambdas == (1.0, 100.0) for r in tr.rows)
    assert tr.header() == run_lagvae(cfg).header()
    with pytest.raises(ConfigError):
        run_infovae_baseline(config())


def test_baseline_zero_lambdas_maximizes_information():
    cfg = config(baseline_lambdas=(0.0, 0.0), iters=3000, alpha1=-1.0)
    tr = run_infovae_baseline(cfg)
    assert tr.final.I_q > tr.rows[0].I_q + 0.1
    assert tr.final.f < tr.rows[0].f


def test_sign_of_alpha_orders_information():
    lo = run_lagvae(config(alpha1=1.0, iters=3000)).final.I_q
    hi = run_lagvae(config(alpha1=-1.0, iters=3000)).final.I_q
    assert lo < hi


# ----------------------------------------------------------------- oracle

def test_oracle_minimizes_upper_bound_to_zero():
    cfg = config(alpha1=1.0, constraints=[("kl_joint_qp", 0.1), ("mmd_z", 0.01)])
    res = primal_oracle(cfg, restarts=16, steps=300)
    assert res.f == pytest.approx(0.0, abs=1e-6)
    assert mutual_information(res.model, "q") < 1e-4
    assert res.n_feasible == 16


def test_oracle_reports_infeasibility():
    # KL(p(z)||q(z)) >= 0 cannot be pushed below a tiny epsilon when the
    # encoder cannot move q(z): one x value, so q(z) = theta_q row, fine,
    # but a floor on the probabilities keeps it away from a point-mass prior
    cfg = DualConfig(nx=2, nz=2, q_x=(0.5, 0.5), p_z=(0.999999, 0.000001), alpha1=0.0,
                     constraints=[("kl_z_qp", 1e-9), ("kl_z_pq", 1e-9)], seed=0)
    cfg = cfg.replace(constraints=[{"kind": "neg_elbo", "epsilon": 1e-3}])
    with pytest.raises(InfeasibleError):
        primal_oracle(cfg, restarts=4, steps=50, stages=2)


# ------------------------------------------------- explicit coefficients

@pytest.mark.parametrize("alpha1", [Fraction(-3), Fraction(-1, 2), Fraction(0), Fraction(2)])
def test_explicit_coefficients_signs(alpha1):
    e1, e2 = Fraction(3, 2), Fraction(1, 100)
    c = explicit_lagvae_coefficients(alpha1, e1, e2)
    assert c["likelihood"].nonpositive_on_orthant()
    assert c["rate"].nonnegative_on_orthant()
    assert c["mmd"].nonnegative_on_orthant()
    # symbolic check of the same statements
    l1, l2 = sympy.symbols("lambda1 lambda2", nonnegative=True)
    for name, expect_sign in (("likelihood", -1), ("rate", 1), ("mmd", 1)):
        a = c[name]
        expr = (sympy.Rational(a.c0.numerator, a.c0.denominator)
                + sympy.Rational(a.c1.numerator, a.c1.denominator) * l1
                + sympy.Rational(a.c2.numerator, a.c2.denominator) * l2)
        if expect_sign < 0:
            assert (-expr).is_nonnegative
        else:
            assert expr.is_nonnegative


def test_explicit_coefficients_reassemble_objective():
    # coefficients applied to the pieces equal alpha1*bound + lambda.(D/eps - 1)
    rng = np.random.default_rng(0)
    cfg = config(alpha1=-1.0, constraints=[("neg_elbo", 1.3), ("mmd_z", 0.02)])
    m = init_state(cfg).model(cfg)
    b = mi_bounds(m)
    recon = b.i_q_lower - float(np.sum([-p * math.log(p) for p in cfg.q_x]))
    pieces = {"likelihood": recon, "rate": b.i_q_upper, "mmd": mmd_z(m), "constant": 1.0}
    for alpha1 in (-1.0, 0.5):
        lam = rng.uniform(0, 3, size=2)
        c = explicit_lagvae_coefficients(Fraction(alpha1), Fraction(13, 10), Fraction(2, 100))
        total = sum(float(c[k].at(Fraction(lam[0]), Fraction(lam[1]))) * v for k, v in pieces.items())
        bound = b.i_q_upper if alpha1 >= 0 else b.i_q_lower
        h = float(np.sum([-p * math.log(p) for p in cfg.q_x]))
        expect = alpha1 * bound + lam[0] * (-elbo(m) / 1.3 - 1) + lam[1] * (mmd_z(m) / 0.02 - 1)
        # the lower bound carries the constant entropy term
        if alpha1 < 0:
            expect -= alpha1 * h
        assert total == pytest.approx(expect, abs=1e-10)


def test_explicit_coefficients_reject_bad_eps():
    with pytest.raises(ValueError):
        explicit_lagvae_coefficients(1, 0, 1)


# -------------------------------------------------------------- estimators

def test_estimators_fit_transform_predict():
    from sklearn.base import clone
    from sklearn.exceptions import NotFittedError
    X = np.array([0, 1, 2] * 20)
    est = LagrangianVAE(max_iter=1500, select_iter=500)
    with pytest.raises(NotFittedError):
        est.transform(X)
    est.fit(X)
    enc = est.transform([0, 1, 2])
    assert enc.shape == (3, 2) and np.allclose(enc.sum(1), 1)
    assert est.predict([0, 1, 2]).shape == (3,)
    assert est.lambdas_.min() >= 0 and len(est.trace_) == 1501
    assert clone(est).get_params() == est.get_params()
    info = InfoVAE(max_iter=500, lambdas=(1.0, 10.0)).fit(X.reshape(-1, 1))
    assert np.allclose(info.lambdas_, [1.0, 10.0])
    with pytest.raises(ValueError):
        LagrangianVAE(max_iter=10).fit([0.5, 1.0])
    with pytest.raises(ValueError):
        LagrangianVAE(max_iter=10).fit([[0, 1], [1, 0]])
