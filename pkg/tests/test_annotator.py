"""Annotation pipeline tests: prompts, parsing, retries, cache, export."""

from __future__ import annotations

import json
import threading

import pytest
from conftest import FIXTURES, make_dialogue

from dialogue_kt.annotator import (
    AnnotationConfig,
    AnnotationResult,
    Decoding,
    EndpointClient,
    ParseError,
    ScriptedClient,
    TransportError,
    annotate_corpus,
    annotate_correctness,
    annotate_dialogue,
    annotate_kcs,
    apply_annotations,
)
from dialogue_kt.annotator.parse import (
    extract_json,
    parse_correctness,
    parse_selection,
    parse_standards,
)
from dialogue_kt.annotator.pipeline import dialogue_content_hash
from dialogue_kt.annotator.prompts import (
    PROMPT_VERSION,
    cluster_messages,
    correctness_messages,
    domain_messages,
    render_transcript,
    standard_messages,
)
from dialogue_kt.corpus import NA, AnnotatedDialogue, TurnPair


def golden_dialogue():
    return AnnotatedDialogue(
        id="golden-1",
        s0="Hi, I am stuck on my fractions homework.",
        turn_pairs=(
            TurnPair(j=1, tutor_text="What is 1/4 plus 2/4?", student_text="3/4.",
                     correctness=NA, kcs=()),
            TurnPair(j=2, tutor_text="Good. Now multiply 3/4 by 8.",
                     student_text="I think it is 6.", correctness=NA, kcs=()),
        ),
        meta={},
    )


def render_messages(messages):
    return "\n".join(f"--- {m['role']} ---\n{m['content']}" for m in messages) + "\n"


CORRECTNESS_OK = json.dumps(
    {
        "pairs": [
            {"index": 1, "summary": "Added like fractions.", "label": "correct"},
            {"index": 2, "summary": "Multiplied by a whole number.", "label": "correct"},
        ]
    }
)


def staged_responder(domains=("NF",), clusters=("NF.B",), standards=None):
    """Scripted responses keyed off the stage marker in the user prompt."""
    standards = standards or {1: ["NF.B.3"], 2: ["NF.B.4"]}

    def respond(messages):
        user = messages[-1]["content"]
        if "Candidate domains" in user:
            return json.dumps({"selected": list(domains)})
        if "Candidate clusters" in user:
            return json.dumps({"summaries": ["adds", "multiplies"], "selected": list(clusters)})
        if "Candidate standards" in user:
            return json.dumps(
                {"pairs": [{"index": j, "standards": ids} for j, ids in standards.items()]}
            )
        return CORRECTNESS_OK

    return respond


class FlakyClient:
    """Raises TransportError for the first `failures` calls, then delegates."""

    def __init__(self, failures, inner):
        self.failures = failures
        self.inner = inner
        self.calls = 0

    def complete(self, messages, decoding):
        self.calls += 1
        if self.calls <= self.failures:
            raise TransportError("connection reset")
        return self.inner.complete(messages, decoding)


class TestPrompts:
    # The prompt text is part of the cache contract: any wording change must
    # come with a PROMPT_VERSION bump and regenerated golden files.
    def test_prompt_version_pinned(self):
        assert PROMPT_VERSION == "v1"

    def test_transcript_with_opening(self):
        text = render_transcript(golden_dialogue())
        lines = text.split("\n")
        assert lines[0] == "Student (opening): Hi, I am stuck on my fractions homework."
        assert lines[1] == "[pair 1] Tutor: What is 1/4 plus 2/4?"
        assert lines[2] == "[pair 1] Student: 3/4."
        assert len(lines) == 5

    def test_transcript_without_opening(self):
        dlg = make_dialogue("d", [(NA, [])])
        assert render_transcript(dlg).startswith("[pair 1] Tutor:")

    @pytest.mark.parametrize(
        "name, build",
        [
            ("golden_correctness_prompt.txt", lambda d, t: correctness_messages(d)),
            ("golden_domain_prompt.txt", lambda d, t: domain_messages(d, t)),
            ("golden_cluster_prompt.txt", lambda d, t: cluster_messages(d, t, ["NF"])),
            ("golden_standard_prompt.txt", lambda d, t: standard_messages(d, t, ["NF.B"])),
        ],
    )
    def test_golden_prompts(self, name, build, toy_taxonomy):
        messages = build(golden_dialogue(), toy_taxonomy)
        assert render_messages(messages) == (FIXTURES / name).read_text()

    def test_prompts_deterministic(self, toy_taxonomy):
        a = cluster_messages(golden_dialogue(), toy_taxonomy, ["NF"])
        b = cluster_messages(golden_dialogue(), toy_taxonomy, ["NF"])
        assert a == b

    def test_cluster_candidates_restricted_to_selected_domains(self, toy_taxonomy):
        user = cluster_messages(golden_dialogue(), toy_taxonomy, ["NF"])[-1]["content"]
        assert "NF.A:" in user and "NF.B:" in user
        assert "EE.A" not in user

    def test_standard_candidates_restricted_to_selected_clusters(self, toy_taxonomy):
        user = standard_messages(golden_dialogue(), toy_taxonomy, ["NF.B"])[-1]["content"]
        assert "NF.B.3:" in user and "NF.B.4:" in user
        assert "NF.A.1" not in user


class TestExtractJson:
    def test_strict(self):
        assert extract_json('{"a": 1}') == {"a": 1}

    def test_fenced_block(self):
        text = 'Sure, here it is:\n```json\n{"a": [1, 2]}\n```\nLet me know!'
        assert extract_json(text) == {"a": [1, 2]}

    def test_balanced_braces_in_prose(self):
        text = 'The answer: {"outer": {"inner": 1}} as requested.'
        assert extract_json(text) == {"outer": {"inner": 1}}

    def test_skips_broken_then_finds_valid(self):
        text = '{not json} but then {"ok": true}'
        assert extract_json(text) == {"ok": True}

    def test_no_json_raises(self):
        with pytest.raises(ParseError, match="no JSON object"):
            extract_json("I cannot answer that.")


class TestParseCorrectness:
    def test_labels_and_na(self):
        text = json.dumps(
            {
                "pairs": [
                    {"index": 1, "label": "correct"},
                    {"index": 2, "label": "Incorrect"},
                    {"index": "3", "label": "na"},
                ]
            }
        )
        assert parse_correctness(text, [1, 2, 3]) == {1: 1, 2: 0, 3: NA}

    def test_missing_pair_is_count_mismatch(self):
        text = json.dumps({"pairs": [{"index": 1, "label": "correct"}]})
        with pytest.raises(ParseError, match="label count mismatch"):
            parse_correctness(text, [1, 2])

    def test_duplicate_index(self):
        text = json.dumps(
            {"pairs": [{"index": 1, "label": "correct"}, {"index": 1, "label": "na"}]}
        )
        with pytest.raises(ParseError, match="duplicate entry for pair 1"):
            parse_correctness(text, [1])

    def test_unknown_label(self):
        text = json.dumps({"pairs": [{"index": 1, "label": "mostly right"}]})
        with pytest.raises(ParseError, match="unknown label"):
            parse_correctness(text, [1])

    def test_non_integer_index(self):
        text = json.dumps({"pairs": [{"index": "first", "label": "na"}]})
        with pytest.raises(ParseError, match="non-integer pair index"):
            parse_correctness(text, [1])

    def test_pairs_not_a_list(self):
        with pytest.raises(ParseError, match='"pairs" list'):
            parse_correctness('{"pairs": {"1": "correct"}}', [1])


class TestParseSelection:
    def test_keeps_order_drops_duplicates(self):
        text = json.dumps({"selected": ["NF.B", "NF.A", "NF.B", "  ", ""]})
        assert parse_selection(text) == ["NF.B", "NF.A"]

    def test_empty_selection_parses(self):
        assert parse_selection('{"selected": []}') == []

    def test_missing_key(self):
        with pytest.raises(ParseError, match='"selected" list'):
            parse_selection('{"chosen": ["NF"]}')


class TestParseStandards:
    def test_per_pair_lists(self):
        text = json.dumps(
            {
                "pairs": [
                    {"index": 1, "standards": ["NF.B.3", "NF.B.3"]},
                    {"index": 2, "standards": []},
                ]
            }
        )
        assert parse_standards(text, [1, 2]) == {1: ["NF.B.3"], 2: []}

    def test_standards_not_a_list(self):
        text = json.dumps({"pairs": [{"index": 1, "standards": "NF.B.3"}]})
        with pytest.raises(ParseError, match="not a list"):
            parse_standards(text, [1])


class TestRetries:
    def test_transport_errors_then_success(self):
        client = FlakyClient(2, ScriptedClient([CORRECTNESS_OK]))
        result = annotate_correctness(golden_dialogue(), client, AnnotationConfig(retries=3))
        assert not result.failed
        assert client.calls == 3

    def test_parse_errors_then_success(self):
        client = ScriptedClient(["not json", "still not json", CORRECTNESS_OK])
        result = annotate_correctness(golden_dialogue(), client, AnnotationConfig(retries=3))
        assert not result.failed
        assert result.correctness == {1: 1, 2: 1}
        assert client.call_count == 3

    def test_exhaustion_reports_last_error(self):
        client = ScriptedClient(["nope"] * 3)
        result = annotate_correctness(golden_dialogue(), client, AnnotationConfig(retries=3))
        assert result.failed
        assert result.reason.startswith("correctness:")
        assert "no JSON object" in result.reason
        assert client.call_count == 3

    def test_retry_budget_respected(self):
        client = FlakyClient(5, ScriptedClient([CORRECTNESS_OK]))
        result = annotate_correctness(golden_dialogue(), client, AnnotationConfig(retries=2))
        assert result.failed
        assert client.calls == 2


class TestAnnotateCorrectness:
    def test_happy_path(self):
        client = ScriptedClient([CORRECTNESS_OK])
        result = annotate_correctness(golden_dialogue(), client)
        assert result.dialogue_id == "golden-1"
        assert result.correctness == {1: 1, 2: 1}
        assert result.raw["correctness"] == CORRECTNESS_OK
        assert not result.failed

    def test_empty_dialogue_rejected(self):
        dlg = AnnotatedDialogue(id="e", turn_pairs=(), s0=None, meta={})
        with pytest.raises(ValueError, match="no turn pairs"):
            annotate_correctness(dlg, ScriptedClient([]))


class TestKcFlow:
    def test_three_stages_in_order(self, toy_taxonomy):
        client = ScriptedClient(staged_responder())
        config = AnnotationConfig(tasks=("kcs",))
        result = annotate_kcs(golden_dialogue(), client, toy_taxonomy, config)
        assert not result.failed
        assert result.kcs == {1: ("NF.B.3",), 2: ("NF.B.4",)}
        assert set(result.raw) == {"domains", "clusters", "standards"}
        markers = ["Candidate domains", "Candidate clusters", "Candidate standards"]
        assert [m for call in client.calls for m in markers if m in call[-1]["content"]] == markers

    def test_stage_two_candidates_follow_stage_one(self, toy_taxonomy):
        client = ScriptedClient(staged_responder(domains=("EE",), clusters=("EE.A",),
                                                 standards={1: ["EE.A.1"], 2: []}))
        result = annotate_kcs(golden_dialogue(), client, toy_taxonomy)
        assert result.kcs == {1: ("EE.A.1",), 2: ()}
        cluster_prompt = client.calls[1][-1]["content"]
        assert "EE.A:" in cluster_prompt
        assert "NF.A" not in cluster_prompt and "NF.B" not in cluster_prompt

    def test_foreign_ids_dropped_with_warning(self, toy_taxonomy, caplog):
        client = ScriptedClient(
            staged_responder(domains=("NF", "BOGUS"), standards={1: ["NF.B.3", "NF.A.1"], 2: []})
        )
        with caplog.at_level("WARNING"):
            result = annotate_kcs(golden_dialogue(), client, toy_taxonomy)
        assert "dropping id outside candidate set" in caplog.text
        # NF.A.1 is outside the stage-3 candidate set once only NF.B is selected.
        assert result.kcs == {1: ("NF.B.3",), 2: ()}

    def test_empty_domain_selection_fails(self, toy_taxonomy):
        client = ScriptedClient(staged_responder(domains=()))
        result = annotate_kcs(golden_dialogue(), client, toy_taxonomy)
        assert result.failed
        assert result.reason == "empty domain selection"
        assert client.call_count == 1

    def test_foreign_only_domains_fail_the_same_way(self, toy_taxonomy):
        client = ScriptedClient(staged_responder(domains=("XX", "YY")))
        result = annotate_kcs(golden_dialogue(), client, toy_taxonomy)
        assert result.failed
        assert result.reason == "empty domain selection"

    def test_empty_cluster_selection_fails(self, toy_taxonomy):
        client = ScriptedClient(staged_responder(clusters=()))
        result = annotate_kcs(golden_dialogue(), client, toy_taxonomy)
        assert result.failed
        assert result.reason == "empty cluster selection"
        assert result.raw.keys() == {"domains", "clusters"}

    def test_stage_failure_reports_kcs_prefix(self, toy_taxonomy):
        client = ScriptedClient(["garbage"] * 3)
        result = annotate_kcs(golden_dialogue(), client, toy_taxonomy,
                              AnnotationConfig(retries=3))
        assert result.failed
        assert result.reason.startswith("kcs:")


class TestAnnotateDialogue:
    def test_correctness_only_task(self, toy_taxonomy):
        client = ScriptedClient([CORRECTNESS_OK])
        config = AnnotationConfig(tasks=("correctness",))
        result = annotate_dialogue(golden_dialogue(), client, toy_taxonomy, config)
        assert result.correctness == {1: 1, 2: 1}
        assert result.kcs == {}
        assert client.call_count == 1

    def test_kcs_only_task(self, toy_taxonomy):
        client = ScriptedClient(staged_responder())
        config = AnnotationConfig(tasks=("kcs",))
        result = annotate_dialogue(golden_dialogue(), client, toy_taxonomy, config)
        assert result.correctness == {}
        assert result.kcs == {1: ("NF.B.3",), 2: ("NF.B.4",)}
        assert client.call_count == 3

    def test_kcs_task_requires_taxonomy(self):
        config = AnnotationConfig(tasks=("kcs",))
        with pytest.raises(ValueError, match="requires a taxonomy"):
            annotate_dialogue(golden_dialogue(), ScriptedClient([]), None, config)

    def test_correctness_failure_skips_kc_stages(self, toy_taxonomy):
        client = ScriptedClient(["junk"] * 10)
        config = AnnotationConfig(retries=2)
        result = annotate_dialogue(golden_dialogue(), client, toy_taxonomy, config)
        assert result.failed
        assert result.reason.startswith("correctness:")
        assert client.call_count == 2

    def test_kc_failure_keeps_correctness_for_audit(self, toy_taxonomy):
        client = ScriptedClient(staged_responder(domains=()))
        result = annotate_dialogue(golden_dialogue(), client, toy_taxonomy)
        assert result.failed
        assert result.reason == "empty domain selection"
        assert result.correctness == {1: 1, 2: 1}
        assert set(result.raw) == {"correctness", "domains"}


class TestResultSerde:
    def test_round_trip_with_na(self):
        result = AnnotationResult(
            dialogue_id="d1",
            correctness={1: 1, 2: 0, 3: NA},
            kcs={1: ("NF.B.3", "NF.B.4"), 2: (), 3: ()},
            raw={"correctness": "{...}"},
        )
        back = AnnotationResult.from_dict(result.to_dict())
        assert back == result
        assert back.correctness[3] is NA

    def test_dict_encoding(self):
        result = AnnotationResult(dialogue_id="d1", correctness={2: NA, 1: 1})
        doc = result.to_dict()
        assert doc["correctness"] == {"1": "1", "2": "na"}
        assert list(doc["correctness"]) == ["1", "2"]
        assert doc["failed"] is False

    def test_failed_round_trip(self):
        result = AnnotationResult(dialogue_id="d2", failed=True, reason="kcs: nope")
        assert AnnotationResult.from_dict(result.to_dict()) == result


class TestContentHash:
    def test_stable_for_equal_dialogues(self):
        assert dialogue_content_hash(golden_dialogue()) == dialogue_content_hash(golden_dialogue())

    def test_sensitive_to_text(self):
        changed = make_dialogue("golden-1", [(NA, []), (NA, [])],
                                s0="Hi, I am stuck on my fractions homework.")
        assert dialogue_content_hash(changed) != dialogue_content_hash(golden_dialogue())


class TestAnnotateCorpus:
    def corpus(self, n=3):
        return [
            make_dialogue(f"d{i}", [(NA, []), (NA, [])], s0=f"Opener {i}.")
            for i in range(n)
        ]

    def config(self, tmp_path, **kw):
        kw.setdefault("cache_dir", str(tmp_path / "cache"))
        return AnnotationConfig(**kw)

    def test_batch_summary(self, toy_taxonomy, tmp_path):
        client = ScriptedClient(staged_responder())
        results, summary = annotate_corpus(self.corpus(), client, toy_taxonomy,
                                           self.config(tmp_path))
        assert summary == {
            "total": 3, "succeeded": 3, "failed": 0, "cache_hits": 0, "failures": {},
        }
        assert [r.dialogue_id for r in results] == ["d0", "d1", "d2"]

    def test_warm_cache_makes_zero_calls(self, toy_taxonomy, tmp_path):
        config = self.config(tmp_path)
        first = ScriptedClient(staged_responder())
        results1, _ = annotate_corpus(self.corpus(), first, toy_taxonomy, config)

        second = ScriptedClient(staged_responder())
        results2, summary = annotate_corpus(self.corpus(), second, toy_taxonomy, config)
        assert second.call_count == 0
        assert summary["cache_hits"] == 3
        assert [r.to_dict() for r in results2] == [r.to_dict() for r in results1]

    def test_cache_keyed_by_model(self, toy_taxonomy, tmp_path):
        cache = str(tmp_path / "cache")
        annotate_corpus(self.corpus(1), ScriptedClient(staged_responder()), toy_taxonomy,
                        AnnotationConfig(model="model-a", cache_dir=cache))
        client = ScriptedClient(staged_responder())
        _, summary = annotate_corpus(self.corpus(1), client, toy_taxonomy,
                                     AnnotationConfig(model="model-b", cache_dir=cache))
        assert summary["cache_hits"] == 0
        assert client.call_count > 0

    def test_cache_keyed_by_tasks(self, toy_taxonomy, tmp_path):
        cache = str(tmp_path / "cache")
        annotate_corpus(self.corpus(1), ScriptedClient(staged_responder()), toy_taxonomy,
                        AnnotationConfig(cache_dir=cache))
        client = ScriptedClient(staged_responder())
        _, summary = annotate_corpus(
            self.corpus(1), client, toy_taxonomy,
            AnnotationConfig(cache_dir=cache, tasks=("correctness",)),
        )
        assert summary["cache_hits"] == 0

    def test_failures_are_recorded_not_raised(self, toy_taxonomy, tmp_path):
        def respond(messages):
            if "Opener 1." in messages[-1]["content"]:
                return "no json here"
            return staged_responder()(messages)

        client = ScriptedClient(respond)
        results, summary = annotate_corpus(self.corpus(), client, toy_taxonomy,
                                           self.config(tmp_path, retries=1))
        assert summary["failed"] == 1
        assert summary["succeeded"] == 2
        assert set(summary["failures"]) == {"d1"}
        assert summary["failures"]["d1"].startswith("correctness:")
        assert results[1].failed

    def test_failed_results_are_not_cached(self, toy_taxonomy, tmp_path):
        config = self.config(tmp_path, retries=1)
        bad = ScriptedClient(["junk"] * 10)
        annotate_corpus(self.corpus(1), bad, toy_taxonomy, config)

        good = ScriptedClient(staged_responder())
        results, summary = annotate_corpus(self.corpus(1), good, toy_taxonomy, config)
        assert summary["cache_hits"] == 0
        assert not results[0].failed
        assert good.call_count > 0

    def test_corrupt_cache_entry_is_a_miss(self, toy_taxonomy, tmp_path, caplog):
        config = self.config(tmp_path)
        annotate_corpus(self.corpus(1), ScriptedClient(staged_responder()), toy_taxonomy, config)
        entries = list((tmp_path / "cache").glob("*.json"))
        assert len(entries) == 1
        entries[0].write_text("{broken")

        client = ScriptedClient(staged_responder())
        with caplog.at_level("WARNING"):
            _, summary = annotate_corpus(self.corpus(1), client, toy_taxonomy, config)
        assert "ignoring unreadable cache entry" in caplog.text
        assert summary["cache_hits"] == 0
        assert client.call_count > 0

    def test_parallelism_matches_serial(self, toy_taxonomy, tmp_path):
        corpus = self.corpus(6)
        serial = annotate_corpus(corpus, ScriptedClient(staged_responder()), toy_taxonomy,
                                 AnnotationConfig(parallelism=1))
        parallel = annotate_corpus(corpus, ScriptedClient(staged_responder()), toy_taxonomy,
                                   AnnotationConfig(parallelism=8))
        assert [r.to_dict() for r in serial[0]] == [r.to_dict() for r in parallel[0]]
        assert serial[1] == parallel[1]

    def test_parallelism_validated(self, toy_taxonomy):
        with pytest.raises(ValueError, match="parallelism"):
            annotate_corpus(self.corpus(1), ScriptedClient([]), toy_taxonomy,
                            AnnotationConfig(parallelism=0))

    def test_no_cache_dir_always_calls(self, toy_taxonomy):
        config = AnnotationConfig()
        client = ScriptedClient(staged_responder())
        annotate_corpus(self.corpus(1), client, toy_taxonomy, config)
        before = client.call_count
        annotate_corpus(self.corpus(1), client, toy_taxonomy, config)
        assert client.call_count == 2 * before


class TestApplyAnnotations:
    def test_merge_and_export_rules(self, toy_taxonomy):
        dialogues = [make_dialogue("d0", [(NA, []), (NA, []), (NA, []), (1, ["NF.A.1"])],
                                   s0="Hello.", meta={"source": "x"})]
        result = AnnotationResult(
            dialogue_id="d0",
            correctness={1: 1, 2: NA, 3: 0},
            # Pair 2 is na so its tags must not export; pair 3 got no tags
            # so it cannot be scored and flips to na.
            kcs={1: ("NF.B.3",), 2: ("NF.B.4",), 3: ()},
        )
        (out,) = apply_annotations(dialogues, [result], toy_taxonomy)
        p1, p2, p3, p4 = out.turn_pairs
        assert (p1.correctness, p1.kcs) == (1, ("NF.B.3",))
        assert (p2.correctness, p2.kcs) == (NA, ())
        assert (p3.correctness, p3.kcs) == (NA, ())
        # Pair 4 had no annotation entries, so its original fields survive.
        assert (p4.correctness, p4.kcs) == (1, ("NF.A.1",))
        assert out.s0 == "Hello." and out.meta == {"source": "x"}

    def test_failed_and_missing_dialogues_dropped(self, toy_taxonomy):
        dialogues = [make_dialogue(f"d{i}", [(NA, [])]) for i in range(3)]
        results = [
            AnnotationResult(dialogue_id="d0", correctness={1: 1}, kcs={1: ("NF.B.3",)}),
            AnnotationResult(dialogue_id="d1", failed=True, reason="kcs: nope"),
        ]
        out = apply_annotations(dialogues, results, toy_taxonomy)
        assert [d.id for d in out] == ["d0"]

    def test_foreign_kc_rejected_with_taxonomy(self, toy_taxonomy):
        dialogues = [make_dialogue("d0", [(NA, [])])]
        result = AnnotationResult(dialogue_id="d0", correctness={1: 1}, kcs={1: ("ZZ.9",)})
        with pytest.raises(ValueError, match=r"d0 pair 1.*ZZ\.9"):
            apply_annotations(dialogues, [result], toy_taxonomy)

    def test_foreign_kc_allowed_without_taxonomy(self):
        dialogues = [make_dialogue("d0", [(NA, [])])]
        result = AnnotationResult(dialogue_id="d0", correctness={1: 1}, kcs={1: ("ZZ.9",)})
        (out,) = apply_annotations(dialogues, [result])
        assert out.turn_pairs[0].kcs == ("ZZ.9",)

    def test_originals_untouched(self, toy_taxonomy):
        dialogues = [make_dialogue("d0", [(NA, [])])]
        result = AnnotationResult(dialogue_id="d0", correctness={1: 1}, kcs={1: ("NF.B.3",)})
        apply_annotations(dialogues, [result], toy_taxonomy)
        assert dialogues[0].turn_pairs[0].correctness is NA
        assert dialogues[0].turn_pairs[0].kcs == ()


class TestClients:
    def test_scripted_client_exhaustion(self):
        client = ScriptedClient(["one"])
        assert client.complete([{"role": "user", "content": "x"}], Decoding()) == "one"
        with pytest.raises(TransportError, match="ran out of responses"):
            client.complete([{"role": "user", "content": "x"}], Decoding())

    def test_scripted_client_records_calls(self):
        client = ScriptedClient(lambda messages: "ok")
        messages = [{"role": "user", "content": "ping"}]
        client.complete(messages, Decoding())
        assert client.calls == [messages]

    def test_scripted_client_thread_safety(self):
        client = ScriptedClient(lambda messages: "ok")

        def hammer():
            for _ in range(50):
                client.complete([{"role": "user", "content": "x"}], Decoding())

        threads = [threading.Thread(target=hammer) for _ in range(4)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert client.call_count == 200

    def test_endpoint_requires_api_key(self, monkeypatch):
        monkeypatch.delenv("TEST_ANNOTATOR_KEY", raising=False)
        client = EndpointClient("http://localhost:9", "m", api_key_env="TEST_ANNOTATOR_KEY")
        with pytest.raises(TransportError, match="TEST_ANNOTATOR_KEY"):
            client.complete([{"role": "user", "content": "x"}], Decoding())

    def test_decoding_defaults(self):
        assert Decoding() == Decoding(temperature=0.0, max_tokens=2048, seed=None)
        decoding = AnnotationConfig(temperature=0.5, max_tokens=128).decoding()
        assert (decoding.temperature, decoding.max_tokens) == (0.5, 128)
