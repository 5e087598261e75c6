"""The `hhmon` command line: gen, prepare, flow, train, eval, infer.

Exit codes: 0 success, 2 configuration or usage, 3 data, 4 model.  Commands
on the same output roots are serialized through an advisory lock file; a lock
left behind by a dead process is reclaimed automatically.
"""

from __future__ import annotations

import argparse
import contextlib
import os
import sys

from . import metrics, pipeline
from .config import PipelineConfig, dump_config, load_config
from .errors import ConfigError, HhmonError


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH",
                        help="JSON config file overlaying the defaults")
    common.add_argument("--seed", type=int, metavar="N",
                        help="override the global seed")
    common.add_argument("--print-config", action="store_true",
                        help="print the fully resolved config and exit")

    parser = argparse.ArgumentParser(
        prog="hhmon",
        description="Hand-rubbing action detection on synthetic desk scenes.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", parents=[common],
                       help="generate the synthetic scene dataset")
    p.add_argument("--force", action="store_true",
                   help="overwrite a non-empty dataset directory")

    sub.add_parser("prepare", parents=[common],
                   help="detect, link, smooth and split into annotated clips")

    p = sub.add_parser("flow", parents=[common],
                       help="compute TV-L1 flow for every scene")
    p.add_argument("--force", action="store_true",
                   help="recompute scenes that already have flow")

    p = sub.add_parser("train", parents=[common],
                       help="pretrain, inflate and fit one stream's classifier")
    p.add_argument("--stream", choices=("rgb", "flow"), required=True)

    sub.add_parser("eval", parents=[common],
                   help="score the test split and write the ablation report")

    p = sub.add_parser("infer", parents=[common],
                       help="score a single 16-frame clip directory")
    p.add_argument("clip_dir", help="directory of 16 frames plus meta.json")
    return parser


@contextlib.contextmanager
def _command_lock(work_dir: str):
    """One command at a time per output root; stale locks are reclaimed."""
    os.makedirs(work_dir, exist_ok=True)
    path = os.path.join(work_dir, ".lock")
    for attempt in (0, 1):
        try:
            fd = os.open(path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
            break
        except FileExistsError:
            pid = _lock_holder(path)
            if attempt == 0 and pid is not None and not _alive(pid):
                with contextlib.suppress(FileNotFoundError):
                    os.unlink(path)
                continue
            raise ConfigError(f"another command holds the lock at {path}"
                              f"{f' (pid {pid})' if pid else ''}")
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield
    finally:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(path)


def _lock_holder(path: str) -> int | None:
    try:
        with open(path) as fh:
            return int(fh.read().strip())
    except (OSError, ValueError):
        return None


def _alive(pid: int) -> bool:
    try:
        os.kill(pid, 0)
    except ProcessLookupError:
        return False
    except PermissionError:
        return True
    return True


def _cmd_gen(cfg: PipelineConfig, args) -> int:
    manifest = pipeline.generate(cfg, force=args.force)
    print(f"wrote {len(manifest['scenes'])} scenes to {cfg.paths.dataset_dir}")
    print(pipeline.stats_from_manifest(cfg, manifest))
    return 0


def _cmd_prepare(cfg: PipelineConfig, args) -> int:
    res = pipeline.prepare(cfg)
    print(f"prepared {len(res.records)} annotated clips "
          f"(train {len(res.split.train)}, val {len(res.split.val)}, "
          f"test {len(res.split.test)})")
    print(res.table)
    return 0


def _cmd_flow(cfg: PipelineConfig, args) -> int:
    n = pipeline.compute_flow(cfg, force=args.force)
    print(f"computed flow for {n} scenes under "
          f"{os.path.join(cfg.paths.work_dir, 'flow')}")
    return 0


def _cmd_train(cfg: PipelineConfig, args) -> int:
    s = pipeline.train_stream(cfg, args.stream)
    print(f"{args.stream}: head loss {s.finetune_curve[0]:.4f} -> "
          f"{s.finetune_curve[-1]:.4f} over {len(s.finetune_curve)} epochs "
          f"({s.n_windows} training windows)")
    if s.scratch_curve:
        print(f"{args.stream} scratch baseline: head loss "
              f"{s.scratch_curve[0]:.4f} -> {s.scratch_curve[-1]:.4f}")
    return 0


def _cmd_eval(cfg: PipelineConfig, args) -> int:
    res = pipeline.evaluate(cfg)
    for w in res.warnings:
        print(f"warning: {w}", file=sys.stderr)
    print(metrics.render_report(res.report))
    print(f"report written to {cfg.paths.report_dir}")
    return 0


def _cmd_infer(cfg: PipelineConfig, args) -> int:
    score, label = pipeline.infer_clip(cfg, args.clip_dir)
    print(f"{score:.6f} {label}")
    return 0


_DISPATCH = {
    "gen": _cmd_gen,
    "prepare": _cmd_prepare,
    "flow": _cmd_flow,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "infer": _cmd_infer,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, seed_override=args.seed)
        if args.print_config:
            print(dump_config(cfg))
            return 0
        with _command_lock(cfg.paths.work_dir):
            return _DISPATCH[args.command](cfg, args)
    except HhmonError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    raise SystemExit(main())
