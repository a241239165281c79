// Pure fold of the session event log into the view state.  The console never
// computes ratings, defaults or transitions itself: what it shows must equal
// this fold of /events, which in turn equals the API snapshot.

export interface SessionEvent {
  seq: number;
  iso_time: string;
  kind: string;
  payload: Record<string, unknown>;
}

export interface FoldedState {
  stage: string;
  iteration: number;
  latestScore: string | null;
  ratingHistory: number[];
  lastSeq: number;
  accepted: boolean;
}

export function emptyState(): FoldedState {
  return {
    stage: "multimodal_train",
    iteration: 0,
    latestScore: null,
    ratingHistory: [],
    lastSeq: 0,
    accepted: false,
  };
}

export function applyEvent(state: FoldedState, event: SessionEvent): FoldedState {
  const next: FoldedState = {
    ...state,
    ratingHistory: [...state.ratingHistory],
    lastSeq: event.seq,
  };
  switch (event.kind) {
    case "stage_entered":
      next.stage = String(event.payload["stage"]);
      next.accepted = next.stage === "accepted";
      break;
    case "generated":
      next.latestScore = String(event.payload["score"]);
      break;
    case "feedback":
      next.ratingHistory.push(Number(event.payload["rating"]));
      next.iteration = Number(event.payload["iteration"]) + 1;
      break;
    default:
      break;
  }
  return next;
}

export function foldEvents(events: SessionEvent[]): FoldedState {
  return [...events]
    .sort((a, b) => a.seq - b.seq)
    .reduce(applyEvent, emptyState());
}

export interface Snapshot {
  id: string;
  stage: string;
  iteration: number;
  latest_score: string | null;
  rating_history: number[];
}

// The snapshot-equality invariant: a fold of /events must agree with the
// server snapshot on everything the console displays.
export function foldMatchesSnapshot(state: FoldedState, snapshot: Snapshot): boolean {
  return (
    state.stage === snapshot.stage &&
    state.iteration === snapshot.iteration &&
    state.latestScore === snapshot.latest_score &&
    state.ratingHistory.length === snapshot.rating_history.length &&
    state.ratingHistory.every((value, i) => value === snapshot.rating_history[i])
  );
}
