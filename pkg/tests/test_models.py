import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from degbias.graph import Graph, Split, generate_synthetic, scaled_split
from degbias.models import (GeneralModel, LinearizedModel, LinearizedParams, attention_filter,
                            build_model, cross_entropy, forward_general, forward_linearized,
                            init_general, logit_gradient, masked_loss, softmax)
from degbias.spectral import apply_filter
from degbias.training import (TrainConfig, TrainingDivergence, load_checkpoint, save_checkpoint,
                              train)

from . import oracles
from .conftest import PATH3, TRIANGLE, make, random_connected_edges


# loss -------------------------------------------------------------------------

@pytest.mark.parametrize("z,c,loss,grad", [
    ([0.0, 0.0], 0, np.log(2), [-0.5, 0.5]),
    ([np.log(2), 0.0], 0, np.log(1.5), [-1 / 3, 1 / 3]),
])
def test_cross_entropy_examples(z, c, loss, grad):
    assert cross_entropy(z, c) == pytest.approx(loss)
    npt.assert_allclose(logit_gradient(z, c), grad, atol=1e-12)


def test_cross_entropy_stable():
    assert cross_entropy([30.0, -30.0], 0) == pytest.approx(0.0, abs=1e-20)
    assert np.isfinite(cross_entropy([1000.0, -1000.0], 1))


@given(st.lists(st.floats(-50, 50), min_size=2, max_size=6))
def test_softmax_rows_normalized(z):
    p = softmax(np.array([z]))
    assert abs(p.sum() - 1) < 1e-9
    assert cross_entropy(z, 0) >= 0


# forward ------------------------------------------------------------------------

def test_linearized_identity():
    g, _ = make([(0, 1)])
    Z = forward_linearized(g, np.eye(2), LinearizedParams([np.eye(2)]), "rw")
    npt.assert_allclose(Z, np.eye(2))
    assert softmax(Z)[0, 0] == pytest.approx(np.e / (np.e + 1), abs=1e-3)


def test_linearized_triangle_neighbor_mean():
    g, _ = make(TRIANGLE)
    Z = forward_linearized(g, np.eye(3), LinearizedParams([np.zeros((3, 3)), np.eye(3)]), "rw")
    npt.assert_allclose(Z, (np.ones((3, 3)) - np.eye(3)) / 2)


def test_linearized_sym_matches_dense_oracle():
    g, A = make(PATH3)
    rng = np.random.default_rng(0)
    X, W0, W1 = rng.normal(size=(3, 2)), rng.normal(size=(2, 2)), rng.normal(size=(2, 2))
    Z = forward_linearized(g, X, LinearizedParams([W0, W1]), "sym")
    npt.assert_allclose(Z, oracles.linearized_logits(oracles.sym_dense(A), X, [W0, W1]), atol=1e-10)


def test_linearized_dimension_mismatch():
    g, _ = make(TRIANGLE)
    with pytest.raises(ValueError):
        forward_linearized(g, np.eye(3), LinearizedParams([np.eye(2)]), "rw")


def test_linearized_rejects_attention():
    g, _ = make(TRIANGLE)
    with pytest.raises(ValueError):
        LinearizedModel(g, np.eye(3), "att", 1)


def test_logits_for_matches_logits():
    g, X, _ = generate_synthetic(120, 3, 0.08, 0.01, 1.0, 0.5, seed=0)
    for kind in ("rw", "sym"):
        m = LinearizedModel(g, X, kind, 3)
        p = m.init_params(3, np.random.default_rng(1))
        npt.assert_allclose(m.logits_for(p, X), m.logits(p), atol=1e-12)


def relu(x):
    return np.maximum(x, 0)


def test_general_without_filter_is_perceptron():
    g, _ = make(PATH3)
    rng = np.random.default_rng(2)
    X = rng.normal(size=(3, 4))
    p = init_general("rw", 4, 2, rng, hidden=5)
    for l in range(3):
        p.W2[l][:] = 0
        p.W3[l][:] = 0
    Z, _ = forward_general(g, X, p)
    npt.assert_allclose(Z, relu(relu(X @ p.W1[0]) @ p.W1[1]) @ p.W1[2], atol=1e-12)


def test_general_filter_only_triangle():
    g, A = make(TRIANGLE)
    X = np.array([[1.0, 0.0], [0.0, 2.0], [3.0, 0.0]])
    p = init_general("rw", 2, 2, np.random.default_rng(0), hidden=2)
    for l in range(3):
        p.W1[l][:] = 0
        p.W3[l][:] = 0
        p.W2[l][:] = np.eye(2)
    # P_rw on the triangle averages the other two rows, all entries stay >= 0
    h1 = np.array([[1.5, 1.0], [2.0, 0.0], [0.5, 1.0]])
    h2 = np.array([[1.25, 0.5], [1.0, 1.0], [1.75, 0.5]])
    h3 = np.array([[1.375, 0.75], [1.5, 0.5], [1.125, 0.75]])
    Z, acts = forward_general(g, X, p)
    npt.assert_allclose(acts[0][4], h1)
    npt.assert_allclose(acts[1][4], h2)
    npt.assert_allclose(Z, h3)
    P = oracles.rw_dense(A)
    npt.assert_allclose(Z, P @ relu(P @ relu(P @ X)))


@pytest.mark.parametrize("kind", ["rw", "sym", "att"])
def test_general_softmax_normalized(kind):
    g, X, _ = generate_synthetic(80, 3, 0.1, 0.02, 1.0, 0.5, seed=1)
    p = init_general(kind, 3, 3, np.random.default_rng(3), hidden=8)
    Z, _ = forward_general(g, X, p)
    npt.assert_allclose(softmax(Z).sum(axis=1), 1.0, atol=1e-9)


def test_general_dimension_mismatch():
    g, _ = make(TRIANGLE)
    p = init_general("rw", 4, 2, np.random.default_rng(0), hidden=3)
    with pytest.raises(ValueError):
        forward_general(g, np.eye(3), p)


def test_general_shapes_chain():
    p = init_general("att", 7, 4, np.random.default_rng(0))
    assert [w.shape for w in p.W1] == [(7, 64), (64, 64), (64, 4)]
    assert [w.shape for w in p.W3] == [(7, 64), (7, 64), (7, 4)]
    assert [a.shape for a in p.att] == [(128,), (128,), (8,)]
    assert init_general("rw", 7, 4, np.random.default_rng(0)).att == []


def test_init_bounds():
    p = init_general("att", 10, 3, np.random.default_rng(0))
    assert np.abs(p.W1[0]).max() <= 1 / np.sqrt(10)
    assert np.abs(p.W1[1]).max() <= 1 / 8
    assert np.abs(p.att[0]).max() <= 1 / np.sqrt(128)


# attention ------------------------------------------------------------------------

def test_attention_zero_vector_is_rw():
    g, A = make(random_connected_edges(np.random.default_rng(0), 12, 0.2))
    H = np.random.default_rng(1).normal(size=(12, 3))
    P = attention_filter(g, H, np.zeros(4), np.eye(3)[:, :2])
    npt.assert_allclose(P.toarray(), oracles.rw_dense(A), atol=1e-12)


def test_attention_rows_stochastic_on_support():
    g, A = make(random_connected_edges(np.random.default_rng(5), 20, 0.15))
    rng = np.random.default_rng(2)
    P = attention_filter(g, rng.normal(size=(20, 4)), rng.normal(size=6) * 3, rng.normal(size=(4, 3)))
    dense = P.toarray()
    npt.assert_allclose(dense.sum(axis=1), 1.0, atol=1e-9)
    assert np.all((dense > 0) == (A > 0))


def test_attention_single_neighbor():
    g, _ = make([(0, 1)])
    H = np.array([[1.0], [-1.0]])
    P = attention_filter(g, H, np.array([1.0, 0.0]), np.eye(1))
    npt.assert_allclose(P.toarray(), [[0, 1], [1, 0]])


def test_attention_hand_computed():
    # star centre 0 with leaves 1,2,3 ; G = H, a = [0, 1] so score = leaky(G_j)
    g, _ = make([(0, 1), (0, 2), (0, 3)])
    H = np.array([[0.0], [1.0], [-1.0], [2.0]])
    P = attention_filter(g, H, np.array([0.0, 1.0]), np.eye(1)).toarray()
    s = np.exp([1.0, -0.2, 2.0])
    npt.assert_allclose(P[0, 1:], s / s.sum(), atol=1e-12)


# gradients ------------------------------------------------------------------------

def random_instance(seed, n=8, d=3, C=3):
    rng = np.random.default_rng(seed)
    g = Graph.from_edges(random_connected_edges(rng, n, 0.3), n)
    X = rng.normal(size=(n, d))
    y = rng.integers(0, C, size=n)
    mask = rng.random(n) < 0.7
    mask[0] = True
    return g, X, y, mask


def fd_check(model, params, y, mask):
    _, grads, _ = model.loss_and_grad(params, y, mask)
    named = params.named()
    numeric = oracles.finite_difference(lambda: masked_loss(model.logits(params), y, mask)[0], named)
    return max(oracles.max_relative_error(grads[k], numeric[k]) for k in named)


@pytest.mark.parametrize("seed", range(4))
@pytest.mark.parametrize("kind", ["rw", "sym"])
def test_linearized_gradients_fd(seed, kind):
    g, X, y, mask = random_instance(seed)
    m = LinearizedModel(g, X, kind, 2)
    assert fd_check(m, m.init_params(3, np.random.default_rng(seed)), y, mask) <= 1e-4


def clear_of_kinks(model, params, margin=1e-3):
    _, acts = forward_general(model.graph, model.X, params)
    for l, (_, _, _, att, Z) in enumerate(acts):
        if l < len(acts) - 1 and np.min(np.abs(Z)) < margin:
            return False
        if att is not None and np.min(np.abs(att[0])) < margin:
            return False
    return True


@pytest.mark.parametrize("seed", range(3))
@pytest.mark.parametrize("kind", ["rw", "sym", "att"])
def test_general_gradients_fd(seed, kind):
    g, X, y, mask = random_instance(seed)
    m = GeneralModel(g, X, kind, hidden=16)
    rng = np.random.default_rng(100 + seed)
    params = m.init_params(3, rng)
    while not clear_of_kinks(m, params):
        params = m.init_params(3, rng)
    assert fd_check(m, params, y, mask) <= 1e-4


def test_linearized_gradient_direct_formula():
    g, X, y, mask = random_instance(7)
    m = LinearizedModel(g, X, "rw", 0)
    p = m.init_params(3, np.random.default_rng(0))
    _, grads, Z = m.loss_and_grad(p, y, mask)
    eps = softmax(Z) - np.eye(3)[y]
    eps[~mask] = 0
    npt.assert_allclose(grads["W0"], X.T @ eps / mask.sum(), atol=1e-14)


@pytest.mark.parametrize("family,kind", [("linear", "rw"), ("general", "sym"), ("general", "att")])
def test_empty_mask_zero_gradients(family, kind):
    g, X, y, _ = random_instance(1)
    m = build_model(family, g, X, kind, hidden=4)
    p = m.init_params(3, np.random.default_rng(0))
    loss, grads, _ = m.loss_and_grad(p, y, np.zeros(len(y), dtype=bool))
    assert loss == 0.0
    assert all(np.all(v == 0) for v in grads.values())


@pytest.mark.parametrize("kind", ["rw", "sym"])
def test_gd_step_changes_logits_exactly(kind):
    g, X, y, mask = random_instance(3, n=12)
    m = LinearizedModel(g, X, kind, 2)
    p = m.init_params(3, np.random.default_rng(0))
    _, grads, Z0 = m.loss_and_grad(p, y, mask)
    eta = 0.3
    delta = [-eta * grads[f"W{l}"] for l in range(3)]
    stepped = LinearizedParams([w + dw for w, dw in zip(p.weights, delta)])
    predicted = Z0 + sum(F @ dW for F, dW in zip(m.feats, delta))
    npt.assert_allclose(m.logits(stepped), predicted, atol=1e-12)


@given(st.integers(0, 10_000))
@settings(max_examples=20, deadline=None)
def test_rw_equals_sym_on_regular_graphs(seed):
    rng = np.random.default_rng(seed)
    n = 2 * int(rng.integers(3, 10))
    # circulant 4-regular graph
    edges = [(i, (i + 1) % n) for i in range(n)] + [(i, (i + 2) % n) for i in range(n)]
    g = Graph.from_edges(edges, n)
    X = rng.normal(size=(n, 3))
    p = LinearizedParams([rng.normal(size=(3, 2)) for _ in range(3)])
    npt.assert_allclose(forward_linearized(g, X, p, "rw"), forward_linearized(g, X, p, "sym"), atol=1e-10)


# training ----------------------------------------------------------------------------

def separable_instance():
    g, _ = make(random_connected_edges(np.random.default_rng(0), 40, 0.1))
    y = np.arange(40) % 2
    X = np.stack([2 * y - 1.0, np.ones(40)], axis=1)
    split = Split(train=np.arange(30), val=np.arange(30, 35), test=np.arange(35, 40))
    return g, X, y, split


def test_training_separable_reaches_full_accuracy():
    g, X, y, split = separable_instance()
    m = LinearizedModel(g, X, "rw", 0)
    best, trace = train(m, y, split, TrainConfig(learning_rate=0.5, epochs=300, optimizer="gd"))
    assert max(trace.train_acc) == 1.0
    assert trace.stop_reason == "epoch budget"


def test_training_stops_at_ceiling():
    g, X, y, split = separable_instance()
    m = LinearizedModel(g, X, "rw", 0)
    _, trace = train(m, y, split, TrainConfig(learning_rate=0.5, epochs=300, optimizer="gd"), ceiling=1.0)
    assert trace.stop_reason == "reached MAJ_WL ceiling"
    assert trace.train_acc[-1] == 1.0 and trace.epochs < 301


def test_zero_learning_rate_keeps_params():
    g, X, y, split = separable_instance()
    m = GeneralModel(g, X, "att", hidden=4)
    p0 = m.init_params(2, np.random.default_rng(0))
    for opt in ("gd", "adam"):
        p = p0.copy()
        train(m, y, split, TrainConfig(learning_rate=0.0, epochs=5, optimizer=opt), params=p)
        for k, v in p0.named().items():
            npt.assert_array_equal(p.named()[k], v)


def test_training_deterministic():
    g, X, y = generate_synthetic(200, 3, 0.05, 0.005, 1.5, 1.0, seed=0)
    split = scaled_split(g.num_nodes, 0, test_size=50, val_size=25)
    runs = [train(GeneralModel(g, X, "sym", hidden=8), y, split, TrainConfig(epochs=20, seed=4))[1]
            for _ in range(2)]
    assert runs[0].train_loss == runs[1].train_loss
    assert runs[0].epochs == 21


def test_trace_lengths_and_groups():
    g, X, y, split = separable_instance()
    groups = {"low": np.array([0, 1]), "high": np.array([2, 3])}
    _, trace = train(LinearizedModel(g, X, "sym", 1), y, split, TrainConfig(epochs=7), tracked_groups=groups)
    assert trace.epochs == 8
    for seq in (trace.train_acc, trace.val_acc, trace.mean_abs_grad, *trace.group_loss.values()):
        assert len(seq) == 8


def test_best_snapshot_is_first_best():
    g, X, y, split = separable_instance()
    best, trace = train(LinearizedModel(g, X, "rw", 0), y, split,
                        TrainConfig(learning_rate=0.5, epochs=50, optimizer="gd"))
    assert trace.val_acc[trace.best_epoch] == max(trace.val_acc)
    assert trace.val_acc.index(max(trace.val_acc)) == trace.best_epoch


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_reported():
    g, X, y, split = separable_instance()
    with pytest.raises(TrainingDivergence) as err:
        train(LinearizedModel(g, X * 1e200, "rw", 0), y, split, TrainConfig(learning_rate=1e200, epochs=5,
                                                                            optimizer="gd"))
    assert err.value.epoch >= 0


def test_empty_train_rejected():
    g, X, y, _ = separable_instance()
    with pytest.raises(ValueError):
        train(LinearizedModel(g, X, "rw", 0), y, Split(np.array([], int), np.arange(3), np.arange(3, 6)),
              TrainConfig())


@pytest.mark.parametrize("family,kind", [("linear", "sym"), ("general", "att")])
def test_checkpoint_roundtrip(tmp_path, family, kind):
    g, X, y, _ = random_instance(0)
    m = build_model(family, g, X, kind, hidden=4)
    p = m.init_params(3, np.random.default_rng(0))
    save_checkpoint(tmp_path / "ckpt", p, family, kind, 0, "abc")
    q, manifest = load_checkpoint(tmp_path / "ckpt")
    assert manifest["config_hash"] == "abc" and manifest["kind"] == kind
    npt.assert_array_equal(m.logits(q), m.logits(p))


def test_apply_filter_used_by_general_sym():
    g, A = make(PATH3)
    M = np.arange(6.0).reshape(3, 2)
    npt.assert_allclose(apply_filter(g, "sym", M), oracles.sym_dense(A) @ M)
