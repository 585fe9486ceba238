import numpy as np
import pytest

from asg import (AsgConfig, KmeansParams, Vocab, ValidationError, generate_synthetic, probe_eval,
                 quantization_error, reconstruct_all, segment_neighbors, train_asg, SyntheticSpec)
from asg.errors import ShapeError


def train(E, k, m, seed=0, mode="separate"):
    V, D = E.shape
    return train_asg(E, AsgConfig(k=k, m=m, D=D, V=V, mode=mode, kmeans=KmeansParams(k=k, seed=seed)))


def test_error_zero():
    E = np.ones((3, 4), np.float32)
    s = quantization_error(E, E, m=2)
    assert s.total_mse == 0 and s.per_segment_mse == (0.0, 0.0) and s.max_row_error == 0


def test_error_single_entry():
    E = np.zeros((2, 2))
    R = E.copy()
    R[1, 0] = 2.0
    s = quantization_error(E, R)
    assert s.total_mse == 1.0 and s.worst_token == 1 and s.max_row_error == 4.0


def test_error_shape_mismatch():
    with pytest.raises(ShapeError):
        quantization_error(np.zeros((2, 2)), np.zeros((2, 3)))


def test_error_decomposition_matches_objectives(rng):
    E = rng.standard_normal((120, 16)).astype(np.float32)
    model = train(E, 8, 4, seed=3)
    s = quantization_error(E, reconstruct_all(model), m=4)
    assert sum(s.per_segment_mse) == pytest.approx(s.total_mse, rel=1e-6)
    np.testing.assert_allclose(np.array(s.per_segment_mse) * E.size, model.objectives, rtol=1e-6)


def blob_vocab(labels):
    return Vocab([f"b{c}_{t}" for t, c in enumerate(labels)])


def test_neighbors_reflexive_and_blob(blobs):
    E, labels, _ = blobs
    model = train(E, 8, 2, seed=2)
    vocab = blob_vocab(labels)
    for t in (0, 13, 40):
        for seg in range(2):
            rep = segment_neighbors(model, vocab, vocab[t], seg, limit=100, embeddings=E)
            names = {tok for tok, _ in rep.co_clustered}
            assert vocab[t] in names
            assert names == {vocab[u] for u in np.flatnonzero(labels == labels[t])}
            assert all(d == 0.0 for _, d in rep.co_clustered)


def test_neighbors_sorted_and_limited(rng):
    E = rng.standard_normal((60, 8)).astype(np.float32)
    model = train(E, 3, 2, seed=1)
    vocab = Vocab([f"w{i}" for i in range(60)])
    rep = segment_neighbors(model, vocab, "w7", 1, limit=5, embeddings=E)
    assert len(rep.co_clustered) <= 5
    d = [x for _, x in rep.co_clustered]
    assert d == sorted(d)
    full = segment_neighbors(model, vocab, "w7", 1, limit=1000, embeddings=E)
    members = np.flatnonzero(model.ids[:, 1] == model.ids[7, 1])
    assert {t for t, _ in full.co_clustered} == {f"w{i}" for i in members}
    # without embeddings: token-index order
    plain = segment_neighbors(model, vocab, "w7", 1, limit=1000)
    assert [t for t, _ in plain.co_clustered] == [f"w{i}" for i in members]


def test_neighbors_symmetry(rng):
    E = rng.standard_normal((40, 8)).astype(np.float32)
    model = train(E, 4, 4, seed=5)
    vocab = Vocab([f"w{i}" for i in range(40)])
    for seg in range(4):
        sets = {w: {t for t, _ in segment_neighbors(model, vocab, w, seg, 100).co_clustered} for w in vocab.tokens}
        for a in vocab.tokens:
            for b in sets[a]:
                assert a in sets[b]


def test_neighbors_identical_embeddings(rng):
    E = rng.standard_normal((30, 8)).astype(np.float32)
    E[17] = E[4]
    model = train(E, 5, 4, seed=0)
    vocab = Vocab([f"w{i}" for i in range(30)])
    for seg in range(4):
        assert "w17" in {t for t, _ in segment_neighbors(model, vocab, "w4", seg, 100).co_clustered}


def test_neighbors_errors(blobs):
    E, labels, _ = blobs
    model = train(E, 8, 2)
    vocab = blob_vocab(labels)
    with pytest.raises(ValidationError):
        segment_neighbors(model, vocab, "nope", 0)
    with pytest.raises(ValidationError):
        segment_neighbors(model, vocab, vocab[0], 2)


def test_probe_identical_inputs(rng):
    E, labels = generate_synthetic(SyntheticSpec(4, 200, 8, 0.5, 1))
    res = probe_eval(E, E, labels, split_seed=3)
    assert res.relative == 1.0
    assert res == probe_eval(E, E, labels, split_seed=3)


def test_probe_chance_level():
    accs = []
    for seed in range(10):
        rng = np.random.default_rng(seed)
        E = rng.standard_normal((200, 16)).astype(np.float32)
        labels = rng.integers(0, 2, 200)
        accs.append(probe_eval(E, E, labels, split_seed=seed).base_accuracy)
    assert abs(np.mean(accs) - 0.5) <= 0.1


def test_probe_retention_small_blobs():
    E, labels = generate_synthetic(SyntheticSpec(8, 400, 16, 0.1, 2))
    model = train(E, 8, 2, seed=1)
    res = probe_eval(E, reconstruct_all(model), labels, split_seed=0)
    assert res.relative >= 0.95


def test_probe_errors(rng):
    E = rng.standard_normal((20, 3))
    with pytest.raises(ValidationError):
        probe_eval(E, E, np.zeros(20, int))
    with pytest.raises(ValidationError):
        probe_eval(E, E, np.array([0] * 18 + [1] * 2))
    with pytest.raises(ShapeError):
        probe_eval(E, E, np.zeros(19, int))
