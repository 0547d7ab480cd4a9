"""Wire envelope encoding, decoding, golden bytes, and the wellknown map."""

import os

import pytest
from hypothesis import given, strategies as st

from agentmesh.documents import compute_hash
from agentmesh.envelope import (DecodeError, EncodeError, RequestEnvelope,
                                ResponseEnvelope, WellknownMap, build_wellknown,
                                decode_request, decode_response, encode_request,
                                encode_response, parse_wellknown)
from agentmesh.catalog import WEATHER_PD_TEXT

GOLDEN_DIR = os.path.join(os.path.dirname(__file__), "golden")
WEATHER_HASH = compute_hash(WEATHER_PD_TEXT)


def golden(name: str) -> str:
    with open(os.path.join(GOLDEN_DIR, name), "r", encoding="utf-8", newline="") as fh:
        return fh.read()


class TestGoldenFixtures:
    def test_natural_language_request(self):
        env = RequestEnvelope(
            None, (), "What is the weather forecast for London, UK on 2024-09-27?")
        assert encode_request(env) == golden("alice_nl_request.json")

    def test_protocol_request(self):
        env = RequestEnvelope(
            WEATHER_HASH,
            (f"mem://db1/pd/{WEATHER_HASH}",),
            '{"location": "London, UK", "date": "2024-09-27"}',
        )
        assert encode_request(env) == golden("alice_pd_request.json")

    def test_success_response(self):
        env = ResponseEnvelope(
            "success",
            'The weather forecast for London, UK, on 2024-09-27 is as follows: '
            '"Rainy, 11 degrees Celsius, with a precipitation of 12 mm."',
        )
        assert encode_response(env) == golden("bob_success_response.json")

    def test_goldens_decode_back(self):
        assert decode_request(golden("alice_nl_request.json")).is_natural_language
        decoded = decode_request(golden("alice_pd_request.json"))
        assert decoded.protocol_hash == WEATHER_HASH
        assert decode_response(golden("bob_success_response.json")).ok


class TestEncodeRequest:
    def test_sources_without_hash_is_error(self):
        with pytest.raises(EncodeError):
            encode_request(RequestEnvelope(None, ("x",), "hi"))

    def test_hash_without_sources_is_error(self):
        with pytest.raises(EncodeError):
            encode_request(RequestEnvelope(WEATHER_HASH, (), "hi"))

    def test_malformed_hash_is_error(self):
        with pytest.raises(EncodeError):
            encode_request(RequestEnvelope("zz", ("s",), "hi"))

    def test_explicit_null_hash_emitted(self):
        assert encode_request(RequestEnvelope(None, (), "")).startswith('{"protocolHash":null')


class TestDecodeRequest:
    def test_missing_keys(self):
        with pytest.raises(DecodeError, match="protocolSources"):
            decode_request('{"protocolHash":"zz"}')

    def test_bad_hash(self):
        with pytest.raises(DecodeError, match="protocolHash"):
            decode_request('{"protocolHash":"zz","protocolSources":["s"],"body":""}')

    def test_hash_with_empty_sources_rejected(self):
        text = ('{"protocolHash":"%s","protocolSources":[],"body":""}' % WEATHER_HASH)
        with pytest.raises(DecodeError, match="non-empty"):
            decode_request(text)

    def test_null_hash_with_sources_rejected(self):
        with pytest.raises(DecodeError, match="empty"):
            decode_request('{"protocolHash":null,"protocolSources":["s"],"body":""}')

    def test_unknown_keys_rejected(self):
        with pytest.raises(DecodeError, match="unknown"):
            decode_request('{"protocolHash":null,"protocolSources":[],"body":"","x":1}')

    def test_absent_hash_means_natural_language(self):
        env = decode_request('{"protocolSources":[],"body":"hello"}')
        assert env.is_natural_language

    def test_any_key_order_accepted(self):
        env = decode_request('{"body":"b","protocolSources":[],"protocolHash":null}')
        assert env.body == "b"

    def test_uppercase_hash_normalized(self):
        text = ('{"protocolHash":"%s","protocolSources":["s"],"body":""}'
                % WEATHER_HASH.upper())
        assert decode_request(text).protocol_hash == WEATHER_HASH


class TestResponses:
    def test_rejected_carries_only_status(self):
        assert encode_response(ResponseEnvelope("rejected")) == '{"status":"rejected"}'

    def test_rejected_with_body_is_encode_error(self):
        with pytest.raises(EncodeError):
            encode_response(ResponseEnvelope("rejected", "nope"))

    def test_unknown_status_encode(self):
        with pytest.raises(EncodeError):
            encode_response(ResponseEnvelope("maybe", "x"))

    def test_unknown_status_decode(self):
        with pytest.raises(DecodeError, match="maybe"):
            decode_response('{"status":"maybe"}')

    def test_rejected_with_body_is_decode_error(self):
        with pytest.raises(DecodeError):
            decode_response('{"status":"rejected","body":"x"}')

    def test_failure_round_trip(self):
        env = ResponseEnvelope("failure", "backend down")
        assert decode_response(encode_response(env)) == env


_hashes = st.text("0123456789abcdef", min_size=40, max_size=40)
_bodies = st.text(max_size=200)
_sources = st.lists(st.text(min_size=1, max_size=30), min_size=1, max_size=3).map(tuple)


@given(body=_bodies)
def test_nl_request_round_trip(body):
    env = RequestEnvelope(None, (), body)
    assert decode_request(encode_request(env)) == env


@given(digest=_hashes, sources=_sources, body=_bodies)
def test_protocol_request_round_trip(digest, sources, body):
    env = RequestEnvelope(digest, sources, body)
    assert decode_request(encode_request(env)) == env


@given(status=st.sampled_from(["success", "failure"]), body=st.none() | _bodies)
def test_response_round_trip(status, body):
    env = ResponseEnvelope(status, body)
    assert decode_response(encode_response(env)) == env


class TestWellknown:
    def test_empty_map(self):
        assert build_wellknown(WellknownMap()) == "{}"
        assert parse_wellknown("{}") == WellknownMap()

    def test_round_trip_two_sources(self):
        wk = WellknownMap.from_dict(
            {WEATHER_HASH: [f"https://db1/pd/{WEATHER_HASH}", "ipfs://Q"]})
        assert parse_wellknown(build_wellknown(wk)) == wk

    def test_empty_source_list_rejected_on_parse(self):
        with pytest.raises(DecodeError):
            parse_wellknown('{"%s":[]}' % WEATHER_HASH)

    def test_empty_source_list_rejected_on_build(self):
        with pytest.raises(EncodeError):
            build_wellknown(WellknownMap(entries=((WEATHER_HASH, ()),)))

    def test_bad_key_rejected(self):
        with pytest.raises(DecodeError):
            parse_wellknown('{"nothex":["s"]}')

    def test_contains_and_sources(self):
        wk = WellknownMap.from_dict({WEATHER_HASH: ["a"]})
        assert WEATHER_HASH in wk
        assert wk.sources_for(WEATHER_HASH) == ("a",)
        assert wk.sources_for("0" * 40) == ()
