"""Command-line entry points for vocab setup, training, headless runs,
replay verification, score linting and the HTTP service."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import artistio as ao
from . import composer as cp
from . import embedding as em
from . import engine as eg
from . import labanstr as lb
from .store import attach_log, read_log, session_load


def _load_config(path) -> eg.LoopConfig:
    if path is None:
        return eg.LoopConfig()
    return eg.load_config(Path(path).read_text(encoding="utf-8"))


def _load_vocab(path) -> em.Vocab:
    if path is None:
        return em.default_vocab()
    return em.load_vocab(Path(path).read_text(encoding="utf-8"))


def cmd_init_vocab(args) -> int:
    text = em.save_vocab(em.default_vocab())
    Path(args.file).write_text(text, encoding="utf-8")
    print(f"wrote {len(em.default_vocab())} words to {args.file}")
    return 0


def cmd_train(args) -> int:
    config = _load_config(args.config)
    vocab = _load_vocab(args.vocab)
    enc = em.init_encoder_params(vocab, dim=config.embed_dim, seed=args.seed)
    comp = cp.init_composer_params(enc, seed=args.seed + 1, temperature=config.temperature)
    pairs = cp.procedural_pairs(vocab, args.seed, config.session_pairs)
    enc, align_trace = em.train_alignment(pairs, enc, config.align_steps, config.align_step_size)
    print(f"alignment: {align_trace[0]:.6f} -> {align_trace[-1]:.6f} over {len(align_trace) - 1} steps")
    corpus = cp.procedural_corpus(vocab, args.seed)
    comp, comp_trace = cp.train_composer(corpus, enc, comp, args.composer_steps, args.composer_step_size)
    print(f"composer:  {comp_trace[0]:.6f} -> {comp_trace[-1]:.6f} over {len(comp_trace) - 1} steps")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "encoder.params").write_text(em.save_encoder_params(enc), encoding="utf-8")
        (out / "composer.params").write_text(cp.save_composer_params(comp), encoding="utf-8")
        print(f"saved parameter snapshots under {out}")
    return 0


def cmd_run(args) -> int:
    config = _load_config(args.config)
    vocab = _load_vocab(args.vocab)
    spec = ao.load_oracle_spec(Path(args.oracle).read_text(encoding="utf-8"))
    session = eg.create_session(config, vocab, seed=args.seed)
    if args.out:
        attach_log(session, args.out)
    eg.drive(session, ao.make_oracle(spec), args.iters)
    ratings = session.rating_history()
    print(f"ran {session.iteration} iterations, stage={session.stage.value}")
    if ratings:
        print(f"first rating {ratings[0]:.4f}, best rating {max(ratings):.4f}")
    if args.out:
        print(f"event log: {args.out}")
    return 0


def cmd_replay(args) -> int:
    session = session_load(args.log)
    events, recovered = read_log(args.log)
    status = "recovered truncated tail; " if recovered else ""
    print(
        f"replay OK: {status}{len(events)} events verified, iteration={session.iteration}, "
        f"stage={session.stage.value}"
    )
    return 0


def cmd_lint(args) -> int:
    text = Path(args.score_file).read_text(encoding="utf-8")
    try:
        score = lb.parse_score(text)
    except lb.ScoreError as err:
        print(f"parse error: {err}")
        return 1
    report = lb.validate_score(score)
    if report.ok:
        print(f"ok: {len(score.tokens)} tokens, meter {score.meter[0]}/{score.meter[1]}")
        return 0
    for violation in report.violations:
        print(f"{violation.kind}: {violation.message}")
    return 1


def cmd_serve(args) -> int:
    from .server import serve

    server, _ = serve(
        args.port, args.data, vocab=_load_vocab(args.vocab),
        static_dir=args.static, max_iterations=args.iters,
    )
    print(f"serving on http://127.0.0.1:{args.port} (data: {args.data})")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="atelier")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("init-vocab", help="write the default vocabulary file")
    p.add_argument("file")
    p.set_defaults(func=cmd_init_vocab)

    p = sub.add_parser("train", help="train alignment and composer on the procedural corpus")
    p.add_argument("--config")
    p.add_argument("--vocab")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--composer-steps", type=int, default=250)
    p.add_argument("--composer-step-size", type=float, default=20.0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("run", help="run a scripted-oracle session headless")
    p.add_argument("--oracle", required=True)
    p.add_argument("--iters", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.add_argument("--config")
    p.add_argument("--vocab")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("replay", help="verify a recorded session log replays byte-for-byte")
    p.add_argument("--log", required=True)
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("lint", help="parse and validate a score file")
    p.add_argument("score_file")
    p.set_defaults(func=cmd_lint)

    p = sub.add_parser("serve", help="serve the HTTP session API")
    p.add_argument("--port", type=int, default=8765)
    p.add_argument("--data", required=True)
    p.add_argument("--vocab")
    p.add_argument("--static")
    p.add_argument("--iters", type=int, default=500)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
