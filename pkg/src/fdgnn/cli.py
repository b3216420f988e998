"""Command-line driver. All stdout is ``key=value`` lines; logs go to stderr.

Exit codes: 0 ok, 1 invalid stream or event, 2 I/O or parse error,
3 numerical divergence.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import torch

from .config import ConfigError, read_config, sim_spec
from .events import (
    StreamError,
    StreamFormatError,
    check_event,
    edge_id,
    event_from_json,
    read_stream,
    validate_stream,
)
from .intensity import ForbiddenEventError, intensity
from .model import FDGNN
from .params import ModelParams, load_model, save_model
from .simulator import thinning_sample
from .training import NonFiniteGradientError, TrainingDivergedError, evaluate, local_update, train

log = logging.getLogger("fdgnn")

EXIT_INVALID, EXIT_IO, EXIT_DIVERGED = 1, 2, 3


def fmt(x: float) -> str:
    return format(float(x), ".17g")


def _emit(**kv) -> None:
    for k, v in kv.items():
        print(f"{k}={v}")


def _subject(args):
    if (args.node is None) == (args.edge is None):
        raise ConfigError("give exactly one of --node or --edge")
    if args.node is not None:
        return args.node
    try:
        u, v = (int(x) for x in args.edge.split(","))
    except ValueError as exc:
        raise ConfigError(f"bad --edge {args.edge!r}, expected u,v") from exc
    return edge_id(u, v)


def _model_at(args, strict: bool) -> FDGNN:
    params, cfg = load_model(args.model)
    header, events = read_stream(args.stream)
    model = FDGNN(header, params, cfg)
    with torch.no_grad():
        for ev in events:
            if ev.t > args.at or (strict and ev.t == args.at):
                break
            model.observe(ev)
    return model


def cmd_validate(args) -> int:
    header, events = read_stream(args.stream)
    violations = validate_stream(header, events)
    for v in violations:
        print(f"violation {v}")
    return EXIT_INVALID if violations else 0


def cmd_train(args) -> int:
    run = read_config(args.config, seed=args.seed)
    header, events = read_stream(args.stream)
    violations = validate_stream(header, events)
    if violations:
        raise StreamError(violations)
    mcfg = run.model_config(header.node_attr_dim, header.edge_attr_dim)
    params = ModelParams.initialize(mcfg, seed=run.train.seed)
    history: list[float] = []
    best_epoch = -1
    if not args.init_only:
        result = train(header, events, mcfg, run.train, params)
        params, history, best_epoch = result.params, result.history, result.best_epoch
    save_model(args.out, params, mcfg)
    hist_path = Path(str(args.out) + ".history")
    hist_path.write_text("".join(f"epoch={i} loss={fmt(x)}\n" for i, x in enumerate(history)), encoding="utf-8")
    _emit(model=args.out, history=hist_path, epochs=len(history), best_epoch=best_epoch)
    if history:
        _emit(final_loss=fmt(history[-1]), best_loss=fmt(min(history)))
    return 0


def cmd_update(args) -> int:
    params, cfg = load_model(args.model)
    header, events = read_stream(args.stream)
    try:
        event = event_from_json(json.loads(args.event_line))
    except json.JSONDecodeError as exc:
        raise StreamFormatError(f"bad --event-line: {exc}") from exc
    model = FDGNN(header, params, cfg)
    with torch.no_grad():
        model.replay(events)
    errs = check_event(header, model.ledger, model.snapshot, event)
    if errs:
        raise StreamError(errs)
    upd = local_update(event, model, args.lr)
    save_model(args.out, upd.params, cfg)
    _emit(model=args.out, loss=fmt(upd.loss), touched=",".join(sorted(upd.touched)))
    return 0


def cmd_embed(args) -> int:
    model = _model_at(args, strict=False)
    x = _subject(args)
    with torch.no_grad():
        z = model.embedding(x)
    _emit(status=model.status(x).value, embedding=",".join(fmt(v) for v in z.tolist()))
    return 0


def cmd_intensity(args) -> int:
    model = _model_at(args, strict=True)
    x = _subject(args)
    attr = None
    if args.attr is not None:
        attr = tuple(float(a) for a in args.attr.split(","))
    with torch.no_grad():
        rep = intensity(model, args.kind, x, attr)
    _emit(kind=args.kind, **{"lambda": fmt(rep.lam)}, branch=rep.branch.value)
    return 0


def cmd_simulate(args) -> int:
    run = read_config(args.config, seed=args.seed)
    spec = sim_spec(run, base_dir=Path(args.config).parent)
    trace = thinning_sample(spec)
    side = trace.write(args.out)
    _emit(stream=args.out, sidecar=side, events=len(trace.events), horizon=fmt(trace.header.horizon))
    return 0


def cmd_evaluate(args) -> int:
    params, cfg = load_model(args.model)
    header, events = read_stream(args.stream)
    metrics = evaluate(header, events, params, cfg, start=args.start)
    for k, v in metrics.as_dict().items():
        _emit(**{k: v if isinstance(v, int) else fmt(v)})
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fdgnn", description=__doc__.splitlines()[0])
    ap.add_argument("--threads", type=int, default=1, help="torch intra-op threads (1 = deterministic)")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate")
    p.add_argument("stream")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("train")
    p.add_argument("--stream", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--init-only", action="store_true", help="write the initialized model without training")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("update")
    p.add_argument("--model", required=True)
    p.add_argument("--stream", required=True)
    p.add_argument("--event-line", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--lr", type=float, default=0.01)
    p.set_defaults(func=cmd_update)

    for name, func in (("embed", cmd_embed), ("intensity", cmd_intensity)):
        p = sub.add_parser(name)
        p.add_argument("--model", required=True)
        p.add_argument("--stream", required=True)
        p.add_argument("--at", type=float, required=True)
        p.add_argument("--node", type=int)
        p.add_argument("--edge")
        if name == "intensity":
            p.add_argument("--kind", type=int, required=True, choices=range(6))
            p.add_argument("--attr", help="candidate attribute, comma separated")
        p.set_defaults(func=func)

    p = sub.add_parser("simulate")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("evaluate")
    p.add_argument("--model", required=True)
    p.add_argument("--stream", required=True)
    p.add_argument("--start", type=int, default=0, help="index of the first scored event")
    p.set_defaults(func=cmd_evaluate)
    return ap


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )
    torch.set_num_threads(max(1, args.threads))
    try:
        return args.func(args)
    except (StreamError, ForbiddenEventError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (TrainingDivergedError, NonFiniteGradientError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (OSError, StreamFormatError, ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
