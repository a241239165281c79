import json
import threading
import urllib.error
import urllib.request

import numpy as np
import pytest

from atelier import artistio as ao
from atelier import cli
from atelier import embedding as em
from atelier import engine as eg
from atelier import labanstr as lb
from atelier.server import serve
from atelier.store import EventLog, StoreError, attach_log, read_log, session_load, truncate_to_complete


def small_config(**kwargs):
    defaults = dict(
        embed_dim=8, gen_length=3, session_pairs=2, align_steps=2, align_step_size=0.02,
        phase1_steps=1, phase1_step_size=0.01, phase2_steps=2, phase2_step_size=0.5,
        trajectory_length=2, accept_threshold=0.95,
    )
    defaults.update(kwargs)
    return eg.LoopConfig(**defaults)


def oracle_spec():
    target = np.zeros((8, 9, 3))
    target[lb.COLUMN_INDEX[lb.Column.ARM_R], lb.DIRECTION_INDEX[lb.Direction.FORWARD], 2] = 0.5
    target[lb.COLUMN_INDEX[lb.Column.HEAD], lb.DIRECTION_INDEX[lb.Direction.BACK], 0] = 0.5
    return ao.OracleSpec(target=target)


def event_lines(events):
    return [json.dumps(e, sort_keys=True) for e in events]


class TestEventLog:
    def test_first_append_is_seq_one(self, tmp_path):
        log = EventLog(tmp_path / "a.jsonl")
        assert log.append({"seq": 1, "kind": "session_created", "payload": {}}) == 1

    def test_two_appends_no_gap(self, tmp_path):
        log = EventLog(tmp_path / "a.jsonl")
        log.append({"seq": 1, "kind": "x", "payload": {}})
        assert log.append({"seq": 2, "kind": "y", "payload": {}}) == 2
        events, recovered = read_log(tmp_path / "a.jsonl")
        assert [e["seq"] for e in events] == [1, 2]
        assert not recovered

    def test_gap_rejected(self, tmp_path):
        log = EventLog(tmp_path / "a.jsonl")
        log.append({"seq": 1, "kind": "x", "payload": {}})
        with pytest.raises(StoreError):
            log.append({"seq": 3, "kind": "y", "payload": {}})

    def test_truncated_tail_recovered(self, tmp_path):
        path = tmp_path / "a.jsonl"
        with open(path, "w") as handle:
            handle.write(json.dumps({"seq": 1, "kind": "x", "payload": {}}) + "\n")
            handle.write('{"seq": 2, "kind": "y", "pay')  # crash mid-write
        events, recovered = read_log(path)
        assert recovered
        assert [e["seq"] for e in events] == [1]
        assert truncate_to_complete(path)
        events, recovered = read_log(path)
        assert not recovered
        assert [e["seq"] for e in events] == [1]

    def test_gap_detected_on_read(self, tmp_path):
        path = tmp_path / "a.jsonl"
        with open(path, "w") as handle:
            handle.write(json.dumps({"seq": 1, "kind": "x", "payload": {}}) + "\n")
            handle.write(json.dumps({"seq": 3, "kind": "y", "payload": {}}) + "\n")
        with pytest.raises(StoreError, match="gap"):
            read_log(path)


class TestSessionLoad:
    def test_empty_file_rejected(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        path.write_text("")
        with pytest.raises(StoreError, match="session_created"):
            session_load(path)

    def test_fold_restores_iteration(self, tmp_path):
        path = tmp_path / "run.jsonl"
        session = eg.create_session(small_config(), em.default_vocab(), seed=3)
        attach_log(session, path)
        eg.drive(session, ao.make_oracle(oracle_spec()), 5)
        loaded = session_load(path)
        assert loaded.iteration == session.iteration == 5
        assert loaded.stage == session.stage
        assert event_lines(loaded.events) == event_lines(session.events)

    def test_mismatched_log_rejected(self, tmp_path):
        path = tmp_path / "run.jsonl"
        session = eg.create_session(small_config(), em.default_vocab(), seed=3)
        attach_log(session, path)
        eg.drive(session, ao.make_oracle(oracle_spec()), 3)
        events, _ = read_log(path)
        events[2]["payload"]["tampered"] = True
        path.write_text("".join(json.dumps(e, sort_keys=True) + "\n" for e in events))
        with pytest.raises(StoreError, match="mismatch"):
            session_load(path)

    @pytest.mark.parametrize("cut_kind", ["feedback", "generated"])
    def test_resume_equals_uninterrupted(self, tmp_path, cut_kind):
        config = small_config()
        vocab = em.default_vocab()
        oracle = ao.make_oracle(oracle_spec())

        full = eg.run_session(config, vocab, oracle, 6, seed=9)
        full_lines = event_lines(full.events)

        # Cut the log just after the third event of the chosen kind.
        indices = [i for i, e in enumerate(full.events) if e["kind"] == cut_kind]
        cut_at = indices[2] + 1
        partial_path = tmp_path / "partial.jsonl"
        partial_path.write_text(
            "".join(line + "\n" for line in full_lines[:cut_at])
        )

        resumed = session_load(partial_path)
        eg.drive(resumed, oracle, 6)
        assert event_lines(resumed.events) == full_lines

    def test_resume_after_crash_truncation(self, tmp_path):
        config = small_config()
        vocab = em.default_vocab()
        oracle = ao.make_oracle(oracle_spec())
        full = eg.run_session(config, vocab, oracle, 4, seed=2)
        full_lines = event_lines(full.events)

        crashed = tmp_path / "crashed.jsonl"
        crashed.write_text(
            "".join(line + "\n" for line in full_lines[:7]) + full_lines[7][:20]
        )
        assert truncate_to_complete(crashed)
        resumed = session_load(crashed)
        attach_log(resumed, crashed)
        eg.drive(resumed, oracle, 4)
        assert event_lines(resumed.events) == full_lines
        events_on_disk, _ = read_log(crashed)
        assert event_lines(events_on_disk) == full_lines


@pytest.fixture
def api(tmp_path):
    server, service = serve(0, tmp_path / "data", max_iterations=50)
    port = server.server_address[1]
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    base = f"http://127.0.0.1:{port}"

    def call(method, path, payload=None):
        data = json.dumps(payload).encode() if payload is not None else None
        request = urllib.request.Request(
            base + path, data=data, method=method,
            headers={"Content-Type": "application/json"} if data else {},
        )
        try:
            with urllib.request.urlopen(request) as response:
                body = response.read().decode()
                return response.status, body
        except urllib.error.HTTPError as err:
            return err.code, err.read().decode()

    yield call
    server.shutdown()
    server.server_close()


def small_config_payload(**kwargs):
    payload = dict(
        embed_dim=8, gen_length=3, session_pairs=2, align_steps=2, align_step_size=0.02,
        phase1_steps=1, phase1_step_size=0.01, phase2_steps=2, phase2_step_size=0.5,
        trajectory_length=2, accept_threshold=0.9, seed=5,
    )
    payload.update(kwargs)
    return payload


class TestHttpApi:
    def test_create_snapshot_feedback_accept(self, api):
        status, body = api("POST", "/api/v1/sessions", {"config": small_config_payload()})
        assert status == 200
        session_id = json.loads(body)["id"]

        status, body = api("GET", f"/api/v1/sessions/{session_id}")
        snapshot = json.loads(body)
        assert status == 200
        assert snapshot["stage"] == "artist_eval"
        assert snapshot["latest_score"].startswith("LABANSTR 1\n")
        assert snapshot["rating_history"] == []
        assert any(w["role"] == "verb" for w in snapshot["vocab"])

        status, body = api(
            "POST",
            f"/api/v1/sessions/{session_id}/feedback",
            {"rating": 0.2, "judgement": {"text": [], "targets": []}, "decision": "resample"},
        )
        assert status == 200
        assert json.loads(body)["stage"] == "artist_eval"

        status, body = api(
            "POST",
            f"/api/v1/sessions/{session_id}/feedback",
            {"rating": 0.95, "judgement": {"text": [], "targets": []}, "decision": "none"},
        )
        assert status == 200
        assert json.loads(body)["stage"] == "accepted"

        status, body = api("GET", f"/api/v1/sessions/{session_id}")
        assert json.loads(body)["stage"] == "accepted"

    def test_events_since(self, api):
        status, body = api("POST", "/api/v1/sessions", {"config": small_config_payload()})
        session_id = json.loads(body)["id"]
        status, body = api("GET", f"/api/v1/sessions/{session_id}/events?since=0")
        events = json.loads(body)["events"]
        assert events[0]["kind"] == "session_created"
        seqs = [e["seq"] for e in events]
        assert seqs == list(range(1, len(seqs) + 1))
        last = seqs[-1]
        status, body = api("GET", f"/api/v1/sessions/{session_id}/events?since={last}")
        assert json.loads(body)["events"] == []

    def test_artifact_latest_is_canonical_text(self, api):
        status, body = api("POST", "/api/v1/sessions", {"config": small_config_payload()})
        session_id = json.loads(body)["id"]
        status, text = api("GET", f"/api/v1/sessions/{session_id}/artifact/latest")
        assert status == 200
        score = lb.parse_score(text)
        assert lb.validate_score(score).ok
        assert lb.serialize_score(score) == text

    def test_error_body_shape(self, api):
        status, body = api("GET", "/api/v1/sessions/snot-there")
        assert status == 404
        error = json.loads(body)
        assert set(error) == {"code", "message"}

    def test_feedback_requires_eval_stage(self, api):
        status, body = api("POST", "/api/v1/sessions", {"config": small_config_payload()})
        session_id = json.loads(body)["id"]
        api(
            "POST",
            f"/api/v1/sessions/{session_id}/feedback",
            {"rating": 0.95, "judgement": {"text": [], "targets": []}, "decision": "accept"},
        )
        status, body = api(
            "POST",
            f"/api/v1/sessions/{session_id}/feedback",
            {"rating": 0.1, "judgement": {"text": [], "targets": []}, "decision": "none"},
        )
        assert status == 409
        assert json.loads(body)["code"] == "not_waiting"


class TestCli:
    def test_init_vocab_and_lint(self, tmp_path, capsys):
        vocab_file = tmp_path / "vocab.txt"
        assert cli.main(["init-vocab", str(vocab_file)]) == 0
        assert em.load_vocab(vocab_file.read_text()) == em.default_vocab()

        good = tmp_path / "good.score"
        good.write_text(lb.serialize_score(lb.Score((4, 4), (lb.make_token(lb.Column.ARM_R),))))
        assert cli.main(["lint", str(good)]) == 0

        bad = tmp_path / "bad.score"
        bad.write_text(
            "LABANSTR 1\nmeter 4/4\n"
            "tok start=0/1 dur=2/1 col=arm_r dir=forward lvl=high rot=none flex=none path=none face=front pos=center_center\n"
            "tok start=1/1 dur=2/1 col=arm_r dir=forward lvl=high rot=none flex=none path=none face=front pos=center_center\n"
        )
        assert cli.main(["lint", str(bad)]) == 1
        out = capsys.readouterr().out
        assert "overlap" in out

    def test_run_then_replay(self, tmp_path, capsys):
        spec_file = tmp_path / "oracle.spec"
        spec_file.write_text(ao.save_oracle_spec(oracle_spec()))
        config_file = tmp_path / "loop.cfg"
        config_file.write_text(eg.save_config(small_config()))
        log_file = tmp_path / "run.jsonl"
        assert (
            cli.main(
                [
                    "run", "--oracle", str(spec_file), "--iters", "4", "--seed", "6",
                    "--out", str(log_file), "--config", str(config_file),
                ]
            )
            == 0
        )
        assert cli.main(["replay", "--log", str(log_file)]) == 0
        out = capsys.readouterr().out
        assert "replay OK" in out
