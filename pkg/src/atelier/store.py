"""Session persistence: append-only JSONL event logs and replay-based loading.

The log is the source of truth.  Loading a session replays its recorded
feedback through a fresh engine run (everything else is a deterministic
function of config, seed and feedback), verifies the regenerated events match
the stored ones, and hands back a state ready to continue where the log ends.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

from . import embedding as em
from . import engine as eg


class StoreError(RuntimeError):
    pass


class EventLog:
    """Append-only JSONL log; one event object per line, seq-contiguous."""

    def __init__(self, path, fsync: bool = False):
        self.path = Path(path)
        self.fsync = fsync
        self.last_seq = 0
        if self.path.exists():
            events, _ = read_log(self.path)
            if events:
                self.last_seq = events[-1]["seq"]

    def append(self, event: dict) -> int:
        seq = event.get("seq")
        if not isinstance(seq, int):
            raise StoreError("event is missing an integer seq")
        if seq != self.last_seq + 1:
            raise StoreError(f"seq gap: expected {self.last_seq + 1}, got {seq}")
        line = json.dumps(event, sort_keys=True) + "\n"
        with open(self.path, "a", encoding="utf-8") as handle:
            handle.write(line)
            if self.fsync:
                handle.flush()
                os.fsync(handle.fileno())
        self.last_seq = seq
        return seq


def read_log(path) -> tuple[list[dict], bool]:
    """Read events in seq order.  A truncated final line (crash mid-write) is
    dropped and reported via the second return value; a malformed line in the
    middle or a seq gap is an error."""
    text = Path(path).read_text(encoding="utf-8")
    lines = text.split("\n")
    trailing_complete = text.endswith("\n")
    events: list[dict] = []
    recovered = False
    for i, line in enumerate(lines):
        if not line.strip():
            continue
        final = i == len(lines) - 1 and not trailing_complete
        try:
            event = json.loads(line)
        except json.JSONDecodeError:
            if final:
                recovered = True
                break
            raise StoreError(f"malformed event at line {i + 1}") from None
        if not isinstance(event, dict) or "seq" not in event or "kind" not in event:
            raise StoreError(f"line {i + 1} is not an event object")
        events.append(event)
    events.sort(key=lambda e: e["seq"])
    for expected, event in enumerate(events, start=1):
        if event["seq"] != expected:
            raise StoreError(f"seq gap detected on recovery: expected {expected}, got {event['seq']}")
    return events, recovered


def truncate_to_complete(path) -> bool:
    """Rewrite the log keeping only complete lines; True if anything was cut."""
    events, recovered = read_log(path)
    if recovered:
        text = "".join(json.dumps(e, sort_keys=True) + "\n" for e in events)
        Path(path).write_text(text, encoding="utf-8")
    return recovered


def _feedback_events(events) -> list[eg.FeedbackEvent]:
    out = []
    for event in events:
        if event["kind"] != "feedback":
            continue
        payload = event["payload"]
        out.append(
            eg.FeedbackEvent(
                iteration=int(payload["iteration"]),
                rating=float(payload["rating"]),
                judgement=eg.judgement_from_payload(payload["judgement"]),
                decision=eg.Decision(payload["decision"]),
            )
        )
    return out


def session_load(path, verify: bool = True) -> eg.SessionState:
    """Reconstruct a session state as a pure fold of its log.

    The fold replays the recorded feedback through a fresh deterministic run;
    with ``verify`` the regenerated event stream must match the stored one.
    Continuing the returned state with the original oracle and seed equals an
    uninterrupted run.
    """
    events, _ = read_log(path)
    if not events or events[0]["kind"] != "session_created":
        raise StoreError("missing session_created event")
    created = events[0]["payload"]
    config = eg.LoopConfig(**created["config"])
    vocab = em.load_vocab(created["vocab"])
    seed = int(created["seed"])
    feedback = _feedback_events(events)

    session = eg.create_session(config, vocab, seed)
    fb_index = 0
    while len(session.events) < len(events) and session.stage is not eg.Stage.ACCEPTED:
        if session.stage is eg.Stage.ARTIST_EVAL:
            if fb_index >= len(feedback):
                break
            eg.flow_step(session, feedback[fb_index])
            fb_index += 1
        else:
            eg.flow_step(session)
    if verify:
        for stored, regenerated in zip(events, session.events):
            if stored != regenerated:
                raise StoreError(
                    f"log mismatch at seq {stored['seq']}: stored {stored['kind']}, "
                    f"regenerated {regenerated['kind']}"
                )
        if len(session.events) < len(events):
            raise StoreError(
                f"log has {len(events)} events but replay regenerated only {len(session.events)}"
            )
    return session


def attach_log(session: eg.SessionState, path, fsync: bool = False) -> EventLog:
    """Attach an appender so future events persist.

    Any in-memory events the file does not hold yet (fresh session, or a tail
    regenerated after crash recovery) are written first.
    """
    log = EventLog(path, fsync=fsync)
    if log.last_seq > session.seq:
        raise StoreError("log on disk is ahead of the in-memory session")
    for event in session.events[log.last_seq :]:
        log.append(event)
    session.sink = log.append
    return log
