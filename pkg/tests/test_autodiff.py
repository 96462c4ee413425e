import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from nvi import autodiff as ad
from nvi.errors import ContractError, DeterminismError, DimensionError, NumericError

from conftest import jvp_error


def T(x, grad=False):
    return ad.Tensor(np.asarray(x, dtype=np.float64), requires_grad=grad)


def rand(rng, *shape):
    return rng.normal(size=shape)


# Each entry: name -> (builder, input factory).  Inputs keep clear of kinks
# and of the domain edge for log.
CASES = {
    "add": (lambda a, b: ad.add(a, b), lambda r: [rand(r, 3, 4), rand(r, 3, 4)]),
    "add_bias": (lambda a, b: ad.add(a, b), lambda r: [rand(r, 3, 4), rand(r, 4)]),
    "sub": (lambda a, b: ad.sub(a, b), lambda r: [rand(r, 2, 5), rand(r, 2, 5)]),
    "sub_bias": (lambda a, b: ad.sub(a, b), lambda r: [rand(r, 2, 5), rand(r, 5)]),
    "mul": (lambda a, b: ad.mul(a, b), lambda r: [rand(r, 4), rand(r, 4)]),
    "scale": (lambda a: ad.scale(a, -1.7), lambda r: [rand(r, 3, 2)]),
    "shift": (lambda a: ad.shift(a, 0.3), lambda r: [rand(r, 3)]),
    "neg": (lambda a: ad.neg(a), lambda r: [rand(r, 3)]),
    "square": (lambda a: ad.square(a), lambda r: [rand(r, 2, 3)]),
    "matmul": (lambda a, b: ad.matmul(a, b), lambda r: [rand(r, 3, 4), rand(r, 4, 2)]),
    "matmul_vec": (lambda a, b: ad.matmul(a, b), lambda r: [rand(r, 4), rand(r, 4, 2)]),
    "matmul_3d": (lambda a, b: ad.matmul(a, b), lambda r: [rand(r, 2, 3, 4), rand(r, 4, 2)]),
    "concat": (lambda a, b: ad.concat([a, b], axis=-1), lambda r: [rand(r, 2, 3), rand(r, 2, 1)]),
    "concat0": (lambda a, b: ad.concat([a, b], axis=0), lambda r: [rand(r, 2, 3), rand(r, 1, 3)]),
    "tanh": (lambda a: ad.tanh(a), lambda r: [rand(r, 5)]),
    "relu": (lambda a: ad.relu(a), lambda r: [np.sign(rand(r, 6)) * (0.1 + np.abs(rand(r, 6)))]),
    "sigmoid": (lambda a: ad.sigmoid(a), lambda r: [3 * rand(r, 5)]),
    "log_sigmoid": (lambda a: ad.log_sigmoid(a), lambda r: [3 * rand(r, 5)]),
    "exp": (lambda a: ad.exp(a), lambda r: [rand(r, 4)]),
    "expm1": (lambda a: ad.expm1(a), lambda r: [rand(r, 4)]),
    "log": (lambda a: ad.log(a), lambda r: [0.2 + np.abs(rand(r, 4))]),
    "softmax": (lambda a: ad.softmax(a), lambda r: [rand(r, 3, 5)]),
    "log_softmax": (lambda a: ad.log_softmax(a), lambda r: [rand(r, 3, 5)]),
    "sum": (lambda a: ad.sum(a), lambda r: [rand(r, 3, 2)]),
    "sum_axis": (lambda a: ad.sum(a, axis=0), lambda r: [rand(r, 3, 2)]),
    "mean": (lambda a: ad.mean(a, axis=1), lambda r: [rand(r, 3, 2)]),
    "take_rows": (lambda a: ad.take_rows(a, [2, 0, 2]), lambda r: [rand(r, 4, 3)]),
    "cols": (lambda a: ad.cols(a, 1, 3), lambda r: [rand(r, 2, 4)]),
    "dropout": (lambda a: ad.dropout(a, np.array([[1, 0, 1], [0, 1, 1]]), 0.4), lambda r: [rand(r, 2, 3)]),
    "clamp": (lambda a: ad.clamp(a, -0.5, 0.5), lambda r: [np.array([-2.0, -0.2, 0.1, 0.4, 3.0])]),
    "reshape": (lambda a: ad.reshape(a, (3, 2)), lambda r: [rand(r, 2, 3)]),
    "scale_rows": (lambda a, s: ad.scale_rows(a, s), lambda r: [rand(r, 3, 4), rand(r, 3, 1)]),
}


def test_case_table_covers_every_primitive():
    covered = set()
    for build, make in CASES.values():
        with ad.Tape() as tape:
            build(*[ad.Tensor(a, requires_grad=True) for a in make(np.random.default_rng(0))])
        covered |= {n.kind for n in tape.nodes}
    assert set(ad.PRIMITIVES) - covered <= {"mean"}  # mean is recorded as sum then scale


@pytest.mark.parametrize("name", sorted(CASES))
@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_primitive_jvp_matches_differences_64bit(name, seed):
    build, make = CASES[name]
    assert jvp_error(build, make(np.random.default_rng(seed)), np.float64, seed=seed) < 1e-6


@pytest.mark.parametrize("name", sorted(CASES))
@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_primitive_jvp_matches_differences_32bit(name, seed):
    # float32 rounding alone perturbs a contraction by about kappa * 6e-8, so
    # directions with kappa >= 1e3 cannot meet 1e-4 under any backward rule
    build, make = CASES[name]
    err, kappa = jvp_error(build, make(np.random.default_rng(seed)), np.float32, seed=seed,
                           with_condition=True)
    assume(kappa < 1e3)
    assert err < 1e-4


def test_tanh_of_zero_vector():
    assert np.array_equal(ad.tanh(T(np.zeros(4))).values, np.zeros(4))


def test_softmax_of_two_zeros():
    np.testing.assert_array_equal(ad.softmax(T([0.0, 0.0])).values, [0.5, 0.5])


def test_matmul_identity(rng):
    A = rng.normal(size=(3, 5))
    np.testing.assert_array_equal(ad.matmul(T(np.eye(3)), T(A)).values, A)


def test_apply_primitive_dispatch():
    out = ad.apply_primitive("matmul", T(np.eye(2)), T([[1.0, 2.0], [3.0, 4.0]]))
    np.testing.assert_array_equal(out.values, [[1, 2], [3, 4]])
    with pytest.raises(ContractError):
        ad.apply_primitive("conv2d", T([1.0]))


def test_shape_mismatch_names_both_shapes():
    with pytest.raises(DimensionError, match=r"\(2, 3\).*\(4, 5\)"):
        ad.matmul(T(np.ones((2, 3))), T(np.ones((4, 5))))
    with pytest.raises(DimensionError, match=r"\(3,\).*\(2,\)"):
        ad.mul(T(np.ones(3)), T(np.ones(2)))


def test_only_bias_broadcasting_is_allowed():
    out = ad.add(T(np.zeros((2, 3))), T([1.0, 2.0, 3.0]))
    np.testing.assert_array_equal(out.values, [[1, 2, 3], [1, 2, 3]])
    with pytest.raises(DimensionError):
        ad.add(T(np.zeros((2, 3))), T(np.zeros((2, 1))))
    with pytest.raises(DimensionError):
        ad.mul(T(np.zeros((2, 3))), T(np.zeros(3)))


def test_non_finite_output_is_a_numeric_error():
    with pytest.raises(NumericError, match="log"):
        ad.log(T([0.0, 1.0]))
    with pytest.raises(NumericError):
        ad.Tensor([np.nan])


def test_backward_tanh_and_sigmoid_at_zero():
    for fn, expected in ((ad.tanh, 1.0), (ad.sigmoid, 0.25)):
        x = T([0.0], grad=True)
        with ad.Tape() as tape:
            loss = ad.sum(fn(x))
        assert ad.backward(tape, loss)[x][0] == pytest.approx(expected, abs=1e-15)


def test_two_layer_mlp_with_ten_parameters(rng):
    x = T(rng.normal(size=(4, 3)))
    W1 = T(rng.normal(size=(3, 2)), True)
    b1 = T(rng.normal(size=2), True)
    W2 = T(rng.normal(size=(2, 1)), True)
    assert W1.size + b1.size + W2.size == 10

    def loss():
        return ad.sum(ad.square(ad.matmul(ad.tanh(ad.add(ad.matmul(x, W1), b1)), W2)))

    assert ad.grad_check(loss, [W1, b1, W2]) < 1e-6


def test_backward_needs_a_scalar():
    x = T([1.0, 2.0], grad=True)
    with ad.Tape() as tape:
        y = ad.tanh(x)
    with pytest.raises(ContractError):
        ad.backward(tape, y)


def test_non_finite_gradient_names_the_primitive():
    x = T([1e-310], grad=True)
    with ad.Tape() as tape:
        loss = ad.sum(ad.log(x))
    with pytest.raises(NumericError, match="'log'"):
        ad.backward(tape, loss)


def test_unreachable_leaf_gets_zero():
    x, unused = T([1.0, 2.0], True), T(np.ones((2, 2)), True)
    with ad.Tape() as tape:
        loss = ad.sum(ad.square(x))
    g = ad.backward(tape, loss, [x, unused])
    np.testing.assert_array_equal(g[unused], np.zeros((2, 2)))
    np.testing.assert_array_equal(g[x], [2.0, 4.0])


def test_grad_check_polynomial_is_exact():
    x = T([3.0], True)
    assert ad.grad_check(lambda: ad.sum(ad.square(x)), [x]) < 1e-9


def _double_tanh(a):
    y = np.tanh(a.values)
    return ad.make_node("tanh", y, (a,), lambda g: (2 * g * (1 - y * y),))


def test_grad_check_flags_a_corrupted_rule(rng):
    x = T(rng.normal(size=5), True)
    err = ad.grad_check(lambda: ad.sum(_double_tanh(x)), [x])
    assert err == pytest.approx(0.5, abs=1e-6)


def test_grad_check_rejects_nondeterminism():
    x = T([1.0], True)
    state = {"n": 0}

    def noisy():
        state["n"] += 1
        return ad.sum(ad.scale(x, float(state["n"])))

    with pytest.raises(DeterminismError):
        ad.grad_check(noisy, [x])


def test_accumulation_is_additive(rng):
    v = rng.normal(size=6)
    x1, x2 = T(v, True), T(v, True)
    with ad.Tape() as t1:
        l1 = ad.sum(ad.mul(x1, x1))
    with ad.Tape() as t2:
        l2 = ad.sum(ad.square(x2))
    np.testing.assert_array_equal(ad.backward(t1, l1)[x1], ad.backward(t2, l2)[x2])


def test_zero_output_gradient_gives_zero_gradients(rng):
    W = T(rng.normal(size=(3, 3)), True)
    with ad.Tape() as tape:
        loss = ad.sum(ad.tanh(ad.matmul(W, W)))
    g = ad.backward(tape, loss, [W], grad_output=0.0)
    assert not np.any(g[W])


def test_replaying_a_tape_is_bit_identical(rng):
    W = T(rng.normal(size=(4, 3)), True)
    x = T(rng.normal(size=(2, 4)))
    with ad.Tape() as tape:
        loss = ad.sum(ad.log_softmax(ad.matmul(x, W)))
    a = ad.backward(tape, loss, [W], accumulate=False)[W]
    b = ad.backward(tape, loss, [W], accumulate=False)[W]
    assert a.tobytes() == b.tobytes()


def test_accumulate_adds_into_grad():
    x = T([2.0], True)
    for _ in range(2):
        with ad.Tape() as tape:
            loss = ad.sum(ad.square(x))
        ad.backward(tape, loss)
    assert x.grad[0] == 8.0


def test_tape_records_in_topological_order(rng):
    x = T(rng.normal(size=3), True)
    with ad.Tape() as tape:
        ad.sum(ad.exp(ad.tanh(x)))
    seen = {id(x)}
    for node in tape.nodes:
        assert all(id(i) in seen or not i.requires_grad for i in node.inputs)
        seen.add(id(node.output))


def test_nothing_is_recorded_without_a_tape(rng):
    x = T(rng.normal(size=3), True)
    y = ad.tanh(x)
    assert not y.requires_grad


def test_scalar_operators_route_to_primitives():
    x = T([1.0, 2.0], True)
    with ad.Tape() as tape:
        loss = ((x * 3.0 + 1.0 - x) / 2.0).sum()
    assert float(loss.values) == pytest.approx(((1 * 3 + 1 - 1) + (2 * 3 + 1 - 2)) / 2)
    np.testing.assert_allclose(ad.backward(tape, loss)[x], [1.0, 1.0])


def test_stable_softmax_on_large_logits():
    out = ad.softmax(T([1000.0, 1000.0, -1000.0])).values
    np.testing.assert_allclose(out, [0.5, 0.5, 0.0], atol=1e-300)
    np.testing.assert_allclose(ad.log_softmax(T([800.0, 0.0])).values, [0.0, -800.0])
