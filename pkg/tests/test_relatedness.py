import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crowdmap.errors import InputError, ProtocolError, TransportError
from crowdmap.relatedness import (
    EmbeddingClient,
    RelatednessMatrix,
    RelatednessOptions,
    build_matrix,
    embed_via_service,
    exact_id_score,
    find_duplicate_labels,
    lexical_embed,
    score_from_vectors,
    trigrams,
)
from helpers import obs


def test_exact_id():
    assert exact_id_score("ID-00", "ID-00") == 1.0
    assert exact_id_score("ID-00", "ID-01") == 0.0
    assert exact_id_score("Snacks", "snacks") == 0.0


def test_lexical_unit_norm_and_deterministic():
    for label in ["a", "Snacks", "Calpis Water 500", "日本茶"]:
        v = lexical_embed(label)
        assert np.linalg.norm(v) == pytest.approx(1.0, abs=1e-9)
        assert np.array_equal(v, lexical_embed(label))
    with pytest.raises(InputError):
        lexical_embed("")


def test_lexical_trigram_overlap():
    # ^sn sna nac ack ck$  vs  ^sn sna nac ack cks ks$ : 4 shared trigrams
    assert trigrams("Snack") == ["^sn", "sna", "nac", "ack", "ck$"]
    assert trigrams("Snacks") == ["^sn", "sna", "nac", "ack", "cks", "ks$"]
    assert not set(trigrams("Snack")) & set(trigrams("Beverage"))
    near = float(lexical_embed("Snack") @ lexical_embed("Snacks"))
    far = float(lexical_embed("Snack") @ lexical_embed("Beverage"))
    # without hash collisions the cosine is 4 / sqrt(5 * 6)
    assert near == pytest.approx(4 / math.sqrt(30), abs=0.1)
    assert near > far


def test_kernel_examples():
    u = np.array([1.0, 0.0])
    v = np.array([0.0, 1.0])
    assert score_from_vectors(u, u, 0.5) == 1.0
    assert score_from_vectors(u, v, 0.5) == pytest.approx(math.exp(-4.0), rel=1e-12)
    assert score_from_vectors(u, v, math.inf) == 1.0
    assert score_from_vectors(u, v, 1e6) == pytest.approx(1.0)
    with pytest.raises(InputError):
        score_from_vectors(u, np.ones(3), 0.5)


def test_build_examples():
    two = [obs("A", 0, "ID-00", 0, 0), obs("B", 0, "ID-00", 1, 1)]
    assert build_matrix(two).values[0, 1] == 1.0
    same = [obs("A", 0, "ID-00", 0, 0), obs("A", 1, "ID-00", 1, 1)]
    assert build_matrix(same).values[0, 1] == 0.0

    three = [obs("A", 0, "A", 0, 0), obs("A", 1, "B", 1, 0), obs("B", 0, "A", 2, 0)]
    expected = np.zeros((3, 3))
    expected[0, 2] = expected[2, 0] = 1.0
    assert np.array_equal(build_matrix(three).values, expected)


def test_keep_same_recording():
    same = [obs("A", 0, "x", 0, 0), obs("A", 1, "x", 1, 1)]
    opts = RelatednessOptions(exclude_same_recording=False)
    assert build_matrix(same, options=opts).values[0, 1] == 1.0


def test_duplicate_drop_detected_and_flagged():
    data = [
        obs("A", 0, "X", 0, 0), obs("A", 1, "X", 5, 0),  # X seen twice far apart in A
        obs("A", 2, "Y", 1, 1), obs("B", 0, "X", 0, 0), obs("B", 1, "Y", 1, 1), obs("B", 2, "Z", 2, 2),
        obs("A", 3, "Z", 2, 2),
    ]
    assert find_duplicate_labels(data) == {"X"}
    S = build_matrix(data, options=RelatednessOptions(drop_duplicate_labels=True)).values
    assert not S[[0, 1, 3]].any() and not S[:, [0, 1, 3]].any()
    assert S[2, 4] == 1.0 and S[5, 6] == 1.0
    S = build_matrix(data, options=RelatednessOptions(drop_duplicate_labels=True), flagged_labels=["Z"]).values
    assert S[5, 6] == 0.0 and S[2, 4] == 1.0
    # without the option, flags are ignored
    assert build_matrix(data, flagged_labels=["Z"]).values[5, 6] == 1.0


def test_duplicates_close_together_not_flagged():
    data = [obs("A", 0, "X", 0, 0), obs("A", 1, "X", 2.9, 0)]
    assert find_duplicate_labels(data) == set()


def test_matrix_validation():
    with pytest.raises(InputError):
        RelatednessMatrix(np.array([[0, 1], [0.5, 0]]))
    with pytest.raises(InputError):
        RelatednessMatrix(np.array([[1.0]]))
    with pytest.raises(InputError):
        RelatednessMatrix(np.array([[0, 2], [2, 0]]))
    with pytest.raises(InputError):
        RelatednessMatrix(np.zeros((2, 3)))
    m = RelatednessMatrix(np.array([[0, 0.5], [0.5, 0]]))
    with pytest.raises(ValueError):
        m.values[0, 1] = 0.2
    with pytest.raises(InputError):
        RelatednessOptions(sparsify_below=1.0)
    with pytest.raises(InputError):
        RelatednessOptions(tau=0.0)
    with pytest.raises(InputError):
        build_matrix([])
    with pytest.raises(InputError):
        build_matrix([obs("A", 0, "x", 0, 0)], provider="nope")


label_st = st.sampled_from(["Snack", "Snacks", "Tea", "Green tea", "Pens", "ID-00", "ID-01"])


@st.composite
def observation_sets(draw):
    n = draw(st.integers(1, 12))
    out = []
    for k in range(n):
        rid = draw(st.sampled_from(["A", "B", "C"]))
        out.append(obs(rid, k, draw(label_st), draw(st.floats(-10, 10)), draw(st.floats(-10, 10))))
    return out


@settings(max_examples=150, deadline=None)
@given(
    observation_sets(),
    st.sampled_from(["exact-id", "lexical"]),
    st.booleans(),
    st.floats(0.0, 0.99),
    st.booleans(),
    st.floats(0.05, 5.0),
)
def test_matrix_invariants_hold_for_all_options(data, provider, exclude, sparsify, drop, tau):
    options = RelatednessOptions(exclude, sparsify, drop, tau)
    S = build_matrix(data, provider, options).values
    assert np.array_equal(S, S.T)
    assert np.all((S >= 0) & (S <= 1))
    assert not np.diag(S).any()
    if provider == "exact-id":
        assert set(np.unique(S)) <= {0.0, 1.0}
    # sparsification only ever zeroes entries
    dense = build_matrix(data, provider, RelatednessOptions(exclude, 0.0, drop, tau)).values
    assert np.all(S <= dense)
    assert np.all((S == dense) | (S == 0))


def test_embedding_service(http_server):
    table = {"Snacks": [3.0, 4.0], "Tea": [0.0, 2.0]}
    http_server.handler = lambda p: (200, {"vectors": [table[t] for t in p["texts"]]})
    client = EmbeddingClient(http_server.url)
    vecs = client.embed(["Snacks", "Tea", "Snacks"])
    assert len(vecs) == 3 and {v.shape for v in vecs} == {(2,)}
    assert np.allclose(vecs[0], [0.6, 0.8])
    assert np.array_equal(vecs[0], vecs[2])
    assert http_server.requests == [{"texts": ["Snacks", "Tea"]}]
    client.embed(["Tea"])  # served from the cache
    assert len(http_server.requests) == 1
    with pytest.raises(InputError):
        embed_via_service([], http_server.url)


def test_service_provider_matrix(http_server):
    vectors = {"a": [1.0, 0.0], "b": [0.0, 1.0]}
    http_server.handler = lambda p: (200, {"vectors": [vectors[t] for t in p["texts"]]})
    data = [obs("A", 0, "a", 0, 0), obs("B", 0, "a", 0, 0), obs("B", 1, "b", 0, 0)]
    S = build_matrix(data, "service", RelatednessOptions(sparsify_below=0.0), endpoint=http_server.url).values
    assert S[0, 1] == 1.0
    assert S[0, 2] == pytest.approx(math.exp(-4.0))


@pytest.mark.parametrize(
    "response",
    [{"vectors": [[1, 0], [1, 0, 0]]}, {"vectors": [[1, 0]]}, {"vectors": [[0, 0], [1, 0]]}, {"nope": 1}],
)
def test_embedding_protocol_errors(http_server, response):
    http_server.handler = lambda p: (200, response)
    with pytest.raises(ProtocolError):
        EmbeddingClient(http_server.url).embed(["a", "b"])


def test_embedding_dimension_change_across_batches(http_server):
    dims = iter([2, 3])
    http_server.handler = lambda p: (200, {"vectors": [[1.0] * next(dims)]})
    client = EmbeddingClient(http_server.url)
    client.embed(["a"])
    with pytest.raises(ProtocolError):
        client.embed(["b"])


def test_embedding_unreachable(dead_endpoint):
    with pytest.raises(TransportError):
        EmbeddingClient(dead_endpoint, timeout=2).embed(["a"])
