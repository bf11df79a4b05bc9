import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from freeunmix import (
    DegenerateSpectrumError,
    MatrixStack,
    ObjectiveKind,
    OptimizerConfig,
    optimize,
    unmixing_error,
    whiten,
)
from freeunmix.datagen import EnsembleSpec, sample, stream
from freeunmix.manifold_opt import (
    euclidean_gradient,
    objective_value,
    retract,
    riemannian_step,
    tangent_projection,
)

from conftest import random_orthogonal, random_symmetric

MATRIX = list(ObjectiveKind)[:4]
H = 1e-5


def random_stack(kind, rng, s=3, N=20, M=30, complex_=False):
    if kind.is_self_adjoint:
        return MatrixStack(np.stack([random_symmetric(rng, N, complex_) for _ in range(s)]), "self-adjoint")
    data = rng.standard_normal((s, N, M))
    if complex_:
        data = data + 1j * rng.standard_normal((s, N, M))
    return MatrixStack(data / np.sqrt(M))


def min_gap(kind, W, Y):
    X = np.tensordot(W.T, Y.data, axes=(1, 0))
    gaps = []
    for Xl in X:
        lam = np.linalg.eigvalsh(Xl if kind.is_self_adjoint else Xl @ Xl.conj().T)
        gaps.append(np.min(np.diff(lam)))
        if not kind.is_self_adjoint:
            gaps.append(lam[0])
    return min(gaps)


def finite_difference(kind, W, Y, h=H):
    G = np.empty_like(W)
    for k, l in itertools.product(range(W.shape[0]), repeat=2):
        E = np.zeros_like(W)
        E[k, l] = h
        G[k, l] = (objective_value(kind, W + E, Y) - objective_value(kind, W - E, Y)) / (2 * h)
    return G


def gradient_points(kind, count, seed, complex_=False):
    rng = np.random.default_rng(seed)
    points = []
    while len(points) < count:
        Y = random_stack(kind, rng, complex_=complex_)
        W = random_orthogonal(rng, 3)
        if kind.is_entropy and min_gap(kind, W, Y) <= 1e-3:
            continue
        points.append((W, Y))
    return points


def assert_gradient_matches(kind, W, Y):
    G = euclidean_gradient(kind, W, Y)
    fd = finite_difference(kind, W, Y)
    # relative 1e-5 per entry; the 1e-9 floor covers entries that are ~0
    np.testing.assert_array_less(np.abs(G - fd), 1e-5 * np.abs(G) + 1e-9)


@pytest.mark.parametrize("kind", MATRIX, ids=lambda k: k.value)
def test_gradient_matches_finite_differences(kind):
    for W, Y in gradient_points(kind, 5, seed=1):
        assert_gradient_matches(kind, W, Y)


@pytest.mark.parametrize("kind", [ObjectiveKind.RECT_KURTOSIS, ObjectiveKind.RECT_ENTROPY, ObjectiveKind.SA_KURTOSIS, ObjectiveKind.SA_ENTROPY], ids=lambda k: k.value)
def test_gradient_complex_input(kind):
    for W, Y in gradient_points(kind, 3, seed=2, complex_=True):
        assert_gradient_matches(kind, W, Y)


@pytest.mark.parametrize("complex_", [False, True])
def test_gradient_tall_rect_entropy(complex_):
    rng = np.random.default_rng(6)
    kind = ObjectiveKind.RECT_ENTROPY
    for _ in range(3):
        Y = random_stack(kind, rng, N=25, M=12, complex_=complex_)
        assert_gradient_matches(kind, random_orthogonal(rng, 3), Y)


@pytest.mark.parametrize("kind", [ObjectiveKind.SCALAR_KURTOSIS, ObjectiveKind.SCALAR_NEGENTROPY], ids=lambda k: k.value)
def test_gradient_scalar_kinds(kind):
    rng = np.random.default_rng(3)
    for _ in range(5):
        Y = MatrixStack(rng.exponential(size=(3, 10, 12)) - 1.0)
        W = random_orthogonal(rng, 3)
        assert_gradient_matches(kind, W, Y)


def test_single_component_gradient_closed_form(rng):
    Y1 = random_symmetric(rng, 15) + 0.3 * np.diag(rng.standard_normal(15))
    Y1 = (Y1 + Y1.T) / 2
    N = 15
    k = np.trace(Y1 @ Y1 @ Y1 @ Y1) / N - 2 * (np.trace(Y1 @ Y1) / N) ** 2
    expected = -np.sign(k) * (4 * np.trace(Y1 @ Y1 @ Y1 @ Y1) / N - 8 * np.trace(Y1 @ Y1) ** 2 / N**2)
    G = euclidean_gradient(ObjectiveKind.SA_KURTOSIS, np.eye(1), MatrixStack(Y1[None], "self-adjoint"))
    assert G[0, 0] == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("kind", [ObjectiveKind.SA_KURTOSIS, ObjectiveKind.RECT_KURTOSIS], ids=lambda k: k.value)
def test_zero_stack_zero_gradient(kind):
    shape = (2, 4, 4) if kind.is_self_adjoint else (2, 4, 6)
    Y = MatrixStack(np.zeros(shape), "self-adjoint" if kind.is_self_adjoint else "rectangular")
    np.testing.assert_array_equal(euclidean_gradient(kind, np.eye(2), Y), 0.0)


def test_entropy_zero_stack_is_degenerate():
    Y = MatrixStack(np.zeros((2, 4, 4)), "self-adjoint")
    with pytest.raises(DegenerateSpectrumError):
        objective_value(ObjectiveKind.SA_ENTROPY, np.eye(2), Y)


def test_objective_is_sum_of_component_statistics(rng):
    from freeunmix.free_stats import free_entropy_rect, free_kurtosis_rect

    Y = random_stack(ObjectiveKind.RECT_KURTOSIS, rng)
    expected = -sum(abs(free_kurtosis_rect(X)) for X in Y.data)
    assert objective_value(ObjectiveKind.RECT_KURTOSIS, np.eye(3), Y) == pytest.approx(expected, rel=1e-12)
    expected = sum(free_entropy_rect(X) for X in Y.data)
    assert objective_value(ObjectiveKind.RECT_ENTROPY, np.eye(3), Y) == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("kind", MATRIX, ids=lambda k: k.value)
@given(seed=st.integers(0, 2**32 - 1))
def test_sign_flip_invariance(kind, seed):
    rng = np.random.default_rng(seed)
    Y = random_stack(kind, rng, N=8, M=11)
    W = random_orthogonal(rng, 3)
    D = np.diag([-1.0, 1.0, 1.0])
    assert objective_value(kind, W @ D, Y) == pytest.approx(objective_value(kind, W, Y), abs=1e-12)


@pytest.mark.parametrize("kind", [ObjectiveKind.SA_KURTOSIS, ObjectiveKind.RECT_KURTOSIS], ids=lambda k: k.value)
@given(seed=st.integers(0, 2**32 - 1))
def test_signed_permutation_invariance(kind, seed):
    rng = np.random.default_rng(seed)
    Y = random_stack(kind, rng, N=8, M=11)
    W = random_orthogonal(rng, 3)
    P = np.eye(3)[rng.permutation(3)] * rng.choice([-1.0, 1.0], size=3)
    assert abs(objective_value(kind, W @ P, Y) - objective_value(kind, W, Y)) < 1e-12


class TestManifoldPrimitives:
    def test_normal_direction_is_annihilated(self, rng):
        W = random_orthogonal(rng, 4)
        S = rng.standard_normal((4, 4))
        S = S + S.T
        np.testing.assert_allclose(riemannian_step(W, W @ S, 0.3), W, atol=1e-12)

    def test_zero_step(self, rng):
        W = random_orthogonal(rng, 4)
        np.testing.assert_allclose(riemannian_step(W, rng.standard_normal((4, 4)), 0.0), W, atol=1e-14)

    def test_projection_is_tangent(self, rng):
        W = random_orthogonal(rng, 5)
        P = tangent_projection(W, rng.standard_normal((5, 5)))
        # tangent vectors at W satisfy W^T P skew-symmetric
        B = W.T @ P
        np.testing.assert_allclose(B + B.T, 0.0, atol=1e-12)

    def test_retraction_positive_r_diagonal(self, rng):
        M = rng.standard_normal((4, 4))
        Q = retract(M)
        R = Q.T @ M
        assert np.all(np.diag(R) > 0)

    @given(st.integers(0, 2**32 - 1), st.floats(0, 10))
    def test_step_is_orthogonal(self, seed, step):
        rng = np.random.default_rng(seed)
        s = int(rng.integers(1, 7))
        W = riemannian_step(random_orthogonal(rng, s), rng.standard_normal((s, s)), step)
        assert np.linalg.norm(W.T @ W - np.eye(s)) < 1e-10


class TestOptimize:
    def test_config_validation(self):
        for bad in (dict(max_iters=0), dict(grad_tol=0.0), dict(initial_step=-1.0), dict(restarts=0)):
            with pytest.raises(ValueError):
                OptimizerConfig(**bad)

    def test_single_component(self, rng):
        Y = MatrixStack(random_symmetric(rng, 10)[None], "self-adjoint")
        W, trace = optimize(ObjectiveKind.SA_KURTOSIS, Y, OptimizerConfig(restarts=2))
        assert abs(abs(W[0, 0]) - 1.0) < 1e-12
        assert trace.converged and trace.iterations == 0

    def _aligned_pair(self, N=300):
        X1 = sample(EnsembleSpec("GOE", N), stream(4, 0))
        X2 = sample(EnsembleSpec("Wishart", N, 2 * N), stream(4, 1))
        return whiten(MatrixStack(np.stack([X1, X2]), "self-adjoint"))

    @pytest.mark.parametrize("kind", [ObjectiveKind.SA_KURTOSIS, ObjectiveKind.SA_ENTROPY], ids=lambda k: k.value)
    def test_aligned_sources_give_signed_permutation(self, kind):
        res = self._aligned_pair()
        W, trace = optimize(kind, res.whitened, OptimizerConfig(restarts=2))
        assert np.linalg.norm(W.T @ W - np.eye(2)) < 1e-10
        # Y mixes the centered sources through the whitening matrix only;
        # at N=300 finite-size effects rotate the optimum by a few hundredths
        assert unmixing_error(res.whitening_matrix, W).error < 0.1
        assert np.all(np.diff(trace.objective_history) <= 1e-12)

    def test_best_restart_not_worse_than_starts(self, rng):
        Y = whiten(random_stack(ObjectiveKind.RECT_KURTOSIS, rng, N=30, M=40)).whitened
        cfg = OptimizerConfig(restarts=4, rng_seed=9)
        W, trace = optimize(ObjectiveKind.RECT_KURTOSIS, Y, cfg)
        f = objective_value(ObjectiveKind.RECT_KURTOSIS, W, Y)
        starts = [np.eye(3)] + [random_orthogonal_from_stream(9, r) for r in range(1, 4)]
        assert all(f <= objective_value(ObjectiveKind.RECT_KURTOSIS, W0, Y) + 1e-12 for W0 in starts)
        assert f == pytest.approx(min(trace.restart_objectives))
        assert len(trace.restart_objectives) == 4

    def test_deterministic(self, rng):
        Y = whiten(random_stack(ObjectiveKind.RECT_ENTROPY, rng, N=15, M=20)).whitened
        cfg = OptimizerConfig(restarts=3, rng_seed=5)
        W1, t1 = optimize(ObjectiveKind.RECT_ENTROPY, Y, cfg)
        W2, t2 = optimize(ObjectiveKind.RECT_ENTROPY, Y, cfg)
        np.testing.assert_array_equal(W1, W2)
        assert t1.objective_history == t2.objective_history

    def test_history_nonincreasing(self, rng):
        Y = whiten(random_stack(ObjectiveKind.SA_ENTROPY, rng, N=25)).whitened
        _, trace = optimize(ObjectiveKind.SA_ENTROPY, Y, OptimizerConfig(restarts=1))
        assert np.all(np.diff(trace.objective_history) <= 0)
        assert trace.iterations == len(trace.objective_history) - 1


def random_orthogonal_from_stream(seed, r):
    from freeunmix.datagen import random_orthogonal as haar

    return haar(3, stream(seed, r))
