import random
from fractions import Fraction

import pytest
import sympy
from hypothesis import given, strategies as st

from lagvae.algebra import RationalMatrix, hstack, member_of
from lagvae.objective import (KLLagrangianCoeffs, LagrangianObjective, builtin_matrix, encode_kl,
                              parse_objective)
from lagvae.tractability import (CATALOG_NAMES, CATALOG_PARAMS, EXPECTED_CLOSURE_DIMS,
                                 NotCompilableError, TractabilityClass, catalog, classify,
                                 compile_objective, equivalent, family_span, verify_closure)

LB, ULF, BLF, NOT = (TractabilityClass.LIKELIHOOD_BASED, TractabilityClass.UNARY_LIKELIHOOD_FREE,
                     TractabilityClass.BINARY_LIKELIHOOD_FREE, TractabilityClass.NOT_COMPUTABLE)
T_KIND = {LB: "T_lb", ULF: "T_ulf", BLF: "T_blf"}


def sym(m: RationalMatrix):
    return sympy.Matrix(m.rows, m.cols, lambda i, j: sympy.Rational(m[i, j].numerator, m[i, j].denominator))


def oracle_in_span(v, m: RationalMatrix) -> bool:
    a = sym(m)
    col = sympy.Matrix([sympy.Rational(x.numerator, x.denominator) for x in v])
    return a.rank() == a.row_join(col).rank()


def oracle_class(obj) -> TractabilityClass:
    v = encode_kl(obj)
    p = builtin_matrix("P")
    for cls in (LB, ULF, BLF):
        if oracle_in_span(v, hstack(builtin_matrix(T_KIND[cls]), p)):
            return cls
    return NOT


def test_closure_dims():
    rep = verify_closure()
    assert rep.dims == EXPECTED_CLOSURE_DIMS == (13, 13, 17, 17, 18, 18)
    assert rep.passed and rep.to_dict()["pass"]


def test_closure_fault_injection_fails():
    p = builtin_matrix("P")
    rows = p.to_rows()
    rows[0][0] += 1
    assert not verify_closure({"P": RationalMatrix.from_rows(rows)}).passed


def test_classify_examples():
    assert classify(catalog("betaVAE", beta=3)[0]) == LB
    assert classify(catalog("InfoGAN", lambda1=1, lambda2=1)[0]) == ULF
    # I_q alone is not likelihood-based; it is unary likelihood-free, since
    # I_q = E_q[log q(z|x)] - E_q[log p(z)] - KL(q(z)||p(z))
    info = parse_objective("I_q")
    assert classify(info) == oracle_class(info) == ULF
    assert member_of(encode_kl(info), hstack(builtin_matrix("T_lb"), builtin_matrix("P"))) is None
    assert classify(parse_objective("KL(q(x,z)||p(x,z))")) == LB
    assert classify(parse_objective("0")) == LB


def test_atom_classes():
    assert classify(parse_objective("JS(q(x)||p(x))")) == ULF
    assert classify(parse_objective("MMD(q(x,z)||p(x,z))")) == BLF
    assert classify(parse_objective("W(q(z|x)||p(z|x))")) == NOT
    assert classify(parse_objective("JS(q(x)||q(x))")) == LB


def test_compile_vmi():
    dec = compile_objective(catalog("VMI")[0])
    assert dec.tractability == LB
    assert dict(dec.tractable_coeffs) == {"E_p[log q(z|x)]": Fraction(-1)}
    assert dec.reconstruct() == encode_kl(catalog("VMI")[0])


def test_compile_vae():
    dec = compile_objective(catalog("VAE")[0])
    assert dict(dec.tractable_coeffs) == {"E_q[log p(x|z)]": -1, "E_q[log p(z)]": -1,
                                          "E_q[log q(z|x)]": 1}


@pytest.mark.parametrize("a,l3,l4", [(0, 1, 1), (Fraction(1, 2), 3, -2), (-2, Fraction(5, 3), 0)])
def test_compile_infovae_matches_display(a, l3, l4):
    dual, _ = catalog("InfoVAE", alpha1=a, lambda3=l3, lambda4=l4)
    dec = compile_objective(dual, ULF)
    expect = {"E_q[log p(x|z)]": Fraction(-1), "E_q[log q(z|x)]": Fraction(a + 1),
              "E_q[log p(z)]": -Fraction(a + 1), "KL(q(z)||p(z))": Fraction(l3 - a - 1),
              "KL(p(z)||q(z))": Fraction(l4)}
    assert dict(dec.tractable_coeffs) == {k: v for k, v in expect.items() if v != 0}
    assert dec.reconstruct() == encode_kl(dual)


def test_compile_zero_and_not_compilable():
    dec = compile_objective(parse_objective("0"))
    assert dict(dec.tractable_coeffs) == {} and all(w == 0 for w in dec.null_witness)
    with pytest.raises(NotCompilableError) as err:
        compile_objective(parse_objective("I_q"), LB)
    res = err.value.residual
    assert any(r != 0 for r in res)
    # the residual is orthogonal to every column of [T_lb P]
    m = hstack(builtin_matrix("T_lb"), builtin_matrix("P"))
    assert all(sum(a * b for a, b in zip(res, col)) == 0 for col in m.columns())


def test_compile_respects_target_for_atoms():
    with pytest.raises(NotCompilableError):
        compile_objective(parse_objective("JS(q(x,z)||p(x,z))"), ULF)
    dec = compile_objective(parse_objective("JS(q(x,z)||p(x,z)) - E_q[log p(x|z)]"), BLF)
    assert dec.tractability == BLF
    assert len(dec.atom_passthrough) == 1


def test_equivalence_examples():
    elbo_kl = parse_objective("KL(q(x,z)||p(x,z))")
    elbo_rec = parse_objective("-E_q[log p(x|z)] + KL(q(z|x)||p(z|x)) - KL(q(z|x)||p(z|x))"
                               " + E_q[log q(z|x)] - E_q[log p(z)]")
    assert equivalent(elbo_kl, elbo_rec)
    assert equivalent(elbo_kl, elbo_kl)
    assert not equivalent(parse_objective("I_q"), parse_objective("I_p"))
    assert not equivalent(parse_objective("JS(q(x)||p(x))"), parse_objective("0"))


def test_catalog_parameters():
    dual, _ = catalog("betaVAE", beta=1)
    assert dual.kl_part.info_q == 0
    assert equivalent(dual, catalog("VAE")[0])
    assert catalog("InfoGAN", lambda1=1, lambda2=1)[0].kl_part.info_p == -1
    asvae = catalog("ASVAE")[0].kl_part
    assert asvae.info_q == asvae.info_p == -1
    assert len(asvae.kl) == 4
    with pytest.raises(KeyError):
        catalog("Nope")
    with pytest.raises(KeyError):
        catalog("VAE", beta=2)


@pytest.mark.parametrize("name", CATALOG_NAMES)
def test_catalog_tractable_forms_are_equivalent(name):
    rng = random.Random(name)
    for _ in range(3):
        params = {k: Fraction(rng.randint(-9, 9), rng.randint(1, 5)) for k in CATALOG_PARAMS[name]}
        dual, tract = catalog(name, **params)
        assert equivalent(dual, tract)


coef = st.fractions(min_value=-3, max_value=3, max_denominator=4)
sparse = st.lists(st.one_of(st.just(Fraction(0)), st.just(Fraction(0)), coef), min_size=12, max_size=12)


@given(sparse)
def test_classify_agrees_with_rank_oracle(vals):
    obj = LagrangianObjective(KLLagrangianCoeffs.from_vector(vals))
    assert classify(obj) == oracle_class(obj)


@given(sparse)
def test_classify_agrees_with_family_span(vals):
    obj = LagrangianObjective(KLLagrangianCoeffs.from_vector(vals))
    v = encode_kl(obj)
    cls = classify(obj)
    for c in (LB, ULF, BLF):
        assert (member_of(v, family_span(c)) is not None) == (cls <= c)


@given(sparse)
def test_compile_reconstructs_exactly(vals):
    obj = LagrangianObjective(KLLagrangianCoeffs.from_vector(vals))
    if classify(obj) == NOT:
        with pytest.raises(NotCompilableError):
            compile_objective(obj)
    else:
        dec = compile_objective(obj)
        assert dec.reconstruct() == encode_kl(obj)
        assert equivalent(obj, dec.to_objective())


def test_class_parse_aliases():
    assert TractabilityClass.parse("lb") == LB
    assert TractabilityClass.parse("unary_likelihood_free") == ULF
    with pytest.raises(ValueError):
        TractabilityClass.parse("nope")
