"""Generation backends, retry behavior, caching, and the cascaded pipeline."""

from __future__ import annotations

import threading

import pytest

from commonact.context import ContextTriple
from commonact.errors import (
    BackendError,
    BackendTimeout,
    BackendUnavailable,
    EmptyContext,
)
from commonact.generation import (
    DescriptionPipeline,
    GenerationCache,
    HttpGenerationBackend,
    MockGenerationBackend,
    cached_generate,
    generate,
    make_request,
)
from commonact.prompts import (
    PromptKind,
    PromptText,
    render_description_prompt,
    template_version,
)

from conftest import fake_http_server

FIG_TRIPLE = ContextTriple(interactions=(0, 1, 2), objects=(0, 1, 2), verbs=(0, 1))


def current_prompt(vocab, triple=FIG_TRIPLE):
    return render_description_prompt(triple, vocab)


class TestRequestDefaults:
    def test_current_description_defaults_to_260(self, tiny_vocab):
        req = make_request(current_prompt(tiny_vocab))
        assert req.max_tokens == 260

    def test_subsequent_defaults_to_200(self):
        prompt = PromptText("...The person then proceeds to ",
                            PromptKind.SUBSEQUENT_ACTION)
        assert make_request(prompt).max_tokens == 200

    def test_explicit_override(self, tiny_vocab):
        assert make_request(current_prompt(tiny_vocab), max_tokens=16).max_tokens == 16

    def test_non_positive_rejected(self, tiny_vocab):
        with pytest.raises(ValueError):
            make_request(current_prompt(tiny_vocab), max_tokens=0)

    def test_negative_temperature_rejected(self, tiny_vocab):
        with pytest.raises(ValueError):
            make_request(current_prompt(tiny_vocab), temperature=-0.5)


class TestMockBackend:
    def test_deterministic(self, tiny_vocab):
        backend = MockGenerationBackend(seed=5)
        req = make_request(current_prompt(tiny_vocab), seed=1)
        assert backend.complete(req) == backend.complete(req)

    def test_seed_changes_output_space(self, tiny_vocab):
        req = make_request(current_prompt(tiny_vocab), seed=1)
        texts = {MockGenerationBackend(seed=s).complete(req) for s in range(8)}
        assert len(texts) > 1

    def test_embeds_object_and_verb_names(self, tiny_vocab):
        backend = MockGenerationBackend()
        raw = backend.complete(make_request(current_prompt(tiny_vocab)))
        head = raw.split("\n\n")[0]
        assert "bread" in head
        assert "Holding some food" in head

    def test_arbitrary_prompt_still_deterministic(self):
        backend = MockGenerationBackend()
        req = make_request(PromptText("weird prompt", PromptKind.CURRENT_DESCRIPTION),
                           max_tokens=10)
        assert backend.complete(req) == backend.complete(req)

    def test_counts_calls(self, tiny_vocab):
        backend = MockGenerationBackend()
        req = make_request(current_prompt(tiny_vocab))
        generate(backend, req)
        generate(backend, req)
        assert backend.calls == 2


class TestHttpBackend:
    def test_wire_contract_fields(self, tiny_vocab):
        with fake_http_server(lambda path, body: (200, {"text": "a caption"})) as (srv, url):
            backend = HttpGenerationBackend(url, backoff_s=0.01)
            req = make_request(current_prompt(tiny_vocab), seed=3)
            resp = generate(backend, req)
        assert resp.text == "a caption"
        path, body = srv.requests[0]
        assert path == "/v1/generate"
        assert body["max_tokens"] == 260
        assert body["temperature"] == 0.0
        assert body["seed"] == 3
        assert body["prompt"].endswith("Video Caption: ")
        assert "\n\n" in body["stop"]

    def test_500_three_times_raises_after_retries(self, tiny_vocab):
        with fake_http_server(lambda path, body: (500, {})) as (srv, url):
            backend = HttpGenerationBackend(url, backoff_s=0.01)
            with pytest.raises(BackendError) as exc_info:
                backend.complete(make_request(current_prompt(tiny_vocab)))
        assert exc_info.value.status == 500
        assert len(srv.requests) == 3

    def test_unreachable_raises_backend_unavailable(self, tiny_vocab):
        backend = HttpGenerationBackend("http://127.0.0.1:1", backoff_s=0.01)
        with pytest.raises(BackendUnavailable):
            backend.complete(make_request(current_prompt(tiny_vocab)))

    def test_recovers_on_retry(self, tiny_vocab):
        state = {"n": 0}

        def flaky(path, body):
            state["n"] += 1
            return (500, {}) if state["n"] == 1 else (200, {"text": "ok"})

        with fake_http_server(flaky) as (srv, url):
            backend = HttpGenerationBackend(url, backoff_s=0.01)
            assert backend.complete(make_request(current_prompt(tiny_vocab))) == "ok"
        assert len(srv.requests) == 2

    def test_slow_server_raises_backend_timeout(self, tiny_vocab):
        import time as time_module

        def slow(path, body):
            time_module.sleep(0.5)
            return 200, {"text": "too late"}

        with fake_http_server(slow) as (_, url):
            backend = HttpGenerationBackend(url, timeout_s=0.05, max_attempts=1)
            with pytest.raises(BackendTimeout):
                backend.complete(make_request(current_prompt(tiny_vocab)))

    def test_success_body_without_text_field(self, tiny_vocab):
        with fake_http_server(lambda p, b: (200, {"other": 1})) as (srv, url):
            backend = HttpGenerationBackend(url, backoff_s=0.01)
            with pytest.raises(BackendError, match="text"):
                backend.complete(make_request(current_prompt(tiny_vocab)))
        assert len(srv.requests) == 1  # malformed success is not retried


class TestCache:
    def test_hit_skips_backend(self, tmp_path, tiny_vocab):
        cache = GenerationCache(tmp_path / "cache")
        backend = MockGenerationBackend()
        req = make_request(current_prompt(tiny_vocab))
        first = cached_generate(cache, backend, req)
        second = cached_generate(cache, backend, req)
        assert not first.cached and second.cached
        assert first.text == second.text
        assert backend.calls == 1

    def test_key_includes_max_tokens(self, tiny_vocab, tmp_path):
        cache = GenerationCache(tmp_path)
        ver = template_version()
        a = cache.key_for(make_request(current_prompt(tiny_vocab), max_tokens=260), ver)
        b = cache.key_for(make_request(current_prompt(tiny_vocab), max_tokens=100), ver)
        assert a != b

    def test_key_includes_template_version(self, tiny_vocab, tmp_path):
        cache = GenerationCache(tmp_path)
        req = make_request(current_prompt(tiny_vocab))
        assert cache.key_for(req, "v1") != cache.key_for(req, "v2")

    def test_key_uniqueness_over_many_prompts(self, tmp_path):
        cache = GenerationCache(tmp_path)
        keys = set()
        for i in range(10_000):
            prompt = PromptText(f"prompt body {i}", PromptKind.CURRENT_DESCRIPTION)
            keys.add(cache.key_for(make_request(prompt, max_tokens=8), "v1"))
        assert len(keys) == 10_000

    def test_layout(self, tmp_path, tiny_vocab):
        cache = GenerationCache(tmp_path / "c")
        backend = MockGenerationBackend()
        req = make_request(current_prompt(tiny_vocab))
        cached_generate(cache, backend, req)
        key = cache.key_for(req, template_version())
        path = tmp_path / "c" / key[:2] / f"{key}.txt"
        assert path.is_file()

    def test_corrupt_entry_regenerated(self, tmp_path, tiny_vocab, caplog):
        cache = GenerationCache(tmp_path / "c")
        backend = MockGenerationBackend()
        req = make_request(current_prompt(tiny_vocab))
        first = cached_generate(cache, backend, req)
        key = cache.key_for(req, template_version())
        cache.path_for(key).write_bytes(b"\xff\xfe broken utf8 \xff")
        with caplog.at_level("WARNING"):
            again = cached_generate(cache, backend, req)
        assert not again.cached
        assert again.text == first.text
        assert any("corrupt" in r.message for r in caplog.records)
        assert cache.load(key) == first.text  # repaired on disk

    def test_unwritable_entry_still_serves_response(self, tmp_path, tiny_vocab, caplog):
        cache = GenerationCache(tmp_path / "c")
        backend = MockGenerationBackend()
        req = make_request(current_prompt(tiny_vocab))
        key = cache.key_for(req, template_version())
        cache.path_for(key).parent.mkdir(parents=True)
        cache.path_for(key).mkdir()  # a directory squats the entry path
        with caplog.at_level("WARNING"):
            resp = cached_generate(cache, backend, req)
        assert resp.text
        assert not resp.cached
        assert any("cache entry" in r.message for r in caplog.records)

    def test_concurrent_identical_misses_single_entry(self, tmp_path, tiny_vocab):
        cache = GenerationCache(tmp_path / "c")
        backend = MockGenerationBackend()
        req = make_request(current_prompt(tiny_vocab))
        results: list[str] = []
        errors: list[Exception] = []

        def worker():
            try:
                results.append(cached_generate(cache, backend, req).text)
            except Exception as exc:  # pragma: no cover - failure reporting
                errors.append(exc)

        threads = [threading.Thread(target=worker) for _ in range(16)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert not errors
        assert len(set(results)) == 1
        entries = [p for p in (tmp_path / "c").rglob("*.txt")]
        assert len(entries) == 1


class TestDescriptionPipeline:
    def test_describe_frame_mentions_objects(self, tiny_vocab, tmp_path):
        pipe = DescriptionPipeline(vocab=tiny_vocab, backend=MockGenerationBackend(),
                                   cache=GenerationCache(tmp_path), seed=0)
        sentence = pipe.describe_frame(FIG_TRIPLE)
        assert sentence
        assert "bread" in sentence
        assert "\n" not in sentence

    def test_empty_objects_still_generates(self, tiny_vocab):
        pipe = DescriptionPipeline(vocab=tiny_vocab, backend=MockGenerationBackend())
        triple = ContextTriple(interactions=(), objects=(), verbs=(0,))
        assert pipe.describe_frame(triple)

    def test_cascade(self, tiny_vocab, tmp_path):
        pipe = DescriptionPipeline(vocab=tiny_vocab, backend=MockGenerationBackend(),
                                   cache=GenerationCache(tmp_path), seed=0)
        pair = pipe.describe(FIG_TRIPLE)
        assert pair.current and pair.subsequent
        assert pair.subsequent != pair.current

    def test_infer_subsequent_rejects_empty(self, tiny_vocab):
        pipe = DescriptionPipeline(vocab=tiny_vocab, backend=MockGenerationBackend())
        with pytest.raises(EmptyContext):
            pipe.infer_subsequent("")

    def test_byte_reproducible_across_cache_states(self, tiny_vocab, tmp_path):
        cache_dir = tmp_path / "shared"
        cold = DescriptionPipeline(vocab=tiny_vocab, backend=MockGenerationBackend(seed=2),
                                   cache=GenerationCache(cache_dir), seed=2)
        pair_cold = cold.describe(FIG_TRIPLE)
        # Fresh objects over the same cache directory: a process restart.
        warm_backend = MockGenerationBackend(seed=2)
        warm = DescriptionPipeline(vocab=tiny_vocab, backend=warm_backend,
                                   cache=GenerationCache(cache_dir), seed=2)
        pair_warm = warm.describe(FIG_TRIPLE)
        assert pair_warm == pair_cold
        assert warm_backend.calls == 0
        # And an entirely cold cache elsewhere gives the same bytes.
        other = DescriptionPipeline(vocab=tiny_vocab, backend=MockGenerationBackend(seed=2),
                                    cache=GenerationCache(tmp_path / "other"), seed=2)
        assert other.describe(FIG_TRIPLE) == pair_cold

    def test_at_most_two_calls_per_frame(self, tiny_vocab, tmp_path):
        backend = MockGenerationBackend()
        pipe = DescriptionPipeline(vocab=tiny_vocab, backend=backend,
                                   cache=GenerationCache(tmp_path), seed=0)
        triples = [FIG_TRIPLE,
                   ContextTriple(interactions=(1,), objects=(2,), verbs=(3,)),
                   FIG_TRIPLE]  # repeated frame context hits the cache
        for triple in triples:
            pipe.describe(triple)
        assert backend.calls <= 2 * len(triples)
        assert backend.calls == 4
