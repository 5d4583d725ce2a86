from __future__ import annotations

import math
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from plangen.conformance import assert_conformant, run_conformance_suite
from plangen.errors import GeneratorError, ProtocolError, TransportError
from plangen.genclient import (
    MAX_BATCH,
    GeneratorRequest,
    MockGenerator,
    MockScript,
    RemoteGenerator,
    ServiceAddress,
    default_template,
    generate_many,
    inversion_count,
    length_normalized_score,
    mock_generate,
    score_sequence,
)

from oracles import oracle_inversions
from stubserver import running_stub


# ---------------------------------------------------------------------------
# scoring
# ---------------------------------------------------------------------------


def test_score_sequence_basics():
    assert score_sequence([]) == 0.0
    assert score_sequence([-0.5, -1.5]) == -2.0
    with pytest.raises(ValueError):
        score_sequence([-0.5, 0.1])
    with pytest.raises(ValueError):
        score_sequence([float("nan")])


def test_score_sequence_against_product_oracle():
    rng = random.Random(7)
    for _ in range(120):
        logprobs = [rng.uniform(-3.0, 0.0) for _ in range(rng.randint(0, 12))]
        product = 1.0
        for lp in logprobs:
            product *= math.exp(lp)
        expected = math.log(product) if product > 0 else float("-inf")
        if product > 0:
            assert abs(score_sequence(logprobs) - expected) < 1e-9
        else:  # underflow: compare against the plain sum instead
            assert score_sequence(logprobs) == sum(logprobs)


@given(st.lists(st.floats(min_value=-5, max_value=0), max_size=10))
def test_score_sequence_permutation_invariant_and_monotone(logprobs):
    shuffled = sorted(logprobs)
    assert math.isclose(
        score_sequence(logprobs), score_sequence(shuffled), abs_tol=1e-12
    )
    if logprobs:
        extended = logprobs + [-0.25]
        assert score_sequence(extended) < score_sequence(logprobs)


def test_length_normalized_score():
    assert length_normalized_score([]) == 0.0
    assert length_normalized_score([-2.0, -4.0]) == -3.0


# ---------------------------------------------------------------------------
# mock generator
# ---------------------------------------------------------------------------


def test_default_template_fig1_order():
    text = default_template(["pitcher", "throw", "ball", "batter"])
    assert text == "the pitcher throw the ball the batter ."


def test_mock_scripted_entry_overrides_template():
    script = MockScript()
    script.add(["a", "b"], "b after a .", [-0.5, -0.25])
    response = mock_generate(GeneratorRequest(("a", "b")), script)
    assert response.text == "b after a ."
    assert response.token_logprobs == (-0.5, -0.25)


def test_mock_inversion_score_rule():
    script = MockScript(score_rule="inversions")
    generator = MockGenerator(script)
    for order in [("a", "b", "c"), ("c", "a", "b"), ("c", "b", "a")]:
        response = generator.generate(GeneratorRequest(order))
        total = sum(response.token_logprobs)
        assert total == -oracle_inversions(list(order))
        assert inversion_count(order) == oracle_inversions(list(order))


def test_mock_determinism():
    generator = MockGenerator(MockScript(score_rule="inversions"))
    request = GeneratorRequest(("dance", "crowd"), want_logprobs=True)
    assert generator.generate(request) == generator.generate(request)


def test_mock_without_logprobs():
    response = MockGenerator().generate(
        GeneratorRequest(("a",), want_logprobs=False)
    )
    assert response.token_logprobs is None
    assert response.text


def test_mock_script_json_round_trip(tmp_path):
    script = MockScript(score_rule="inversions", model_tag="m1")
    script.add(["x", "y"], "y of x", [-1.0])
    path = tmp_path / "script.json"
    path.write_text(__import__("json").dumps(script.to_json()))
    loaded = MockScript.load(str(path))
    assert loaded == script


def test_generate_many_preserves_order_and_caps_batch():
    generator = MockGenerator(MockScript(score_rule="inversions"))
    batch = [
        GeneratorRequest(order)
        for order in [("a", "b"), ("b", "a"), ("a", "b")]
    ]
    responses = generate_many(generator, batch, max_inflight=2)
    assert [r.text for r in responses] == [
        generator.generate(r).text for r in batch
    ]
    assert generate_many(generator, []) == []
    oversized = [GeneratorRequest(("a",))] * (MAX_BATCH + 1)
    with pytest.raises(ValueError):
        generate_many(generator, oversized)


def test_request_validation():
    with pytest.raises(ValueError):
        GeneratorRequest((), mode="draft")
    with pytest.raises(ValueError):
        GeneratorRequest(("a",), mode="nonsense")
    with pytest.raises(ValueError):
        MockScript(score_rule="nonsense")


# ---------------------------------------------------------------------------
# remote client against the stub server
# ---------------------------------------------------------------------------


def test_remote_generate_round_trip():
    with running_stub() as stub:
        client = RemoteGenerator(ServiceAddress(stub.url, retries=0))
        assert client.healthz() == "stub-model"
        response = client.generate(
            GeneratorRequest(("pitcher", "throw", "ball", "batter"), mode="draft")
        )
        assert response.text == "the pitcher throw the ball the batter ."
        assert response.token_logprobs is not None
        assert response.model_tag == "stub-model"


def test_remote_missing_logprobs_is_protocol_error():
    with running_stub() as stub:
        stub.behavior.omit_logprobs = True
        client = RemoteGenerator(ServiceAddress(stub.url, retries=0))
        with pytest.raises(ProtocolError):
            client.generate(GeneratorRequest(("a", "b"), want_logprobs=True))


def test_remote_retry_exhaustion_surfaces_transport_error():
    with running_stub() as stub:
        stub.behavior.drop_connections = 3
        client = RemoteGenerator(
            ServiceAddress(stub.url, retries=2, backoff=0.01)
        )
        with pytest.raises(TransportError):
            client.generate(GeneratorRequest(("a", "b")))


def test_remote_recovers_within_retry_budget():
    with running_stub() as stub:
        stub.behavior.drop_connections = 2
        client = RemoteGenerator(
            ServiceAddress(stub.url, retries=2, backoff=0.01)
        )
        response = client.generate(GeneratorRequest(("a", "b")))
        assert response.text


def test_remote_500_retried_then_surfaced():
    with running_stub() as stub:
        stub.behavior.fail_500 = 5
        client = RemoteGenerator(
            ServiceAddress(stub.url, retries=1, backoff=0.01)
        )
        with pytest.raises(TransportError):
            client.generate(GeneratorRequest(("a", "b")))


def test_remote_400_not_retried():
    with running_stub() as stub:
        client = RemoteGenerator(ServiceAddress(stub.url, retries=2))
        with pytest.raises(GeneratorError) as err:
            client._request(
                "POST", "/generate",
                {"concepts": [], "mode": "draft", "want_logprobs": True},
            )
        assert "400" in str(err.value)


def test_unreachable_endpoint():
    client = RemoteGenerator(
        ServiceAddress("http://127.0.0.1:1", retries=0, timeout=0.5)
    )
    with pytest.raises(TransportError):
        client.healthz()


def test_dump_endpoint_returns_container():
    with running_stub() as stub:
        client = RemoteGenerator(ServiceAddress(stub.url, retries=0))
        raw = client.dump(("tea", "glass"), mode="draft")
        assert raw[:4] == b"PLGD"


def test_conformance_suite_against_stub():
    with running_stub() as stub:
        results = assert_conformant(stub.url)
        assert all(r.ok for r in results)
        names = {r.name for r in results}
        assert {"healthz", "dump_container", "empty_concepts_rejected"} <= names


def test_conformance_suite_reports_failures():
    with running_stub() as stub:
        stub.behavior.omit_logprobs = True
        results = run_conformance_suite(stub.url)
        failed = {r.name for r in results if not r.ok}
        assert "generate_with_logprobs" in failed
