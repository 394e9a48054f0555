"""Command-line entry point (``conda-cosod``).

Configuration precedence, lowest to highest: built-in defaults, ``--config``
file, ``--set section.key=value`` overrides, then dedicated flags such as
``--steps`` or ``--seed``.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np
from PIL import Image

from . import gradcheck, macs
from .checkpoint import load_checkpoint
from .config import RunConfig
from .data import load_dataset, save_group, synth_dataset
from .export import overlay, write_corr
from .trainer import evaluate, predict, thread_limit, train

REFERENCE_MACS = {"full": "91.38G", "cac": "77.19G"}


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _load_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if getattr(args, "config", None) else RunConfig()
    overrides = {}
    for item in getattr(args, "set", None) or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise SystemExit(f"--set expects section.key=value, got {item!r}")
        overrides[key] = _parse_value(value)
    for flag, key in (("steps", "train.steps"), ("seed", "train.seed"), ("lr", "train.lr"),
                      ("mode", "pipeline.mode")):
        value = getattr(args, flag, None)
        if value is not None:
            overrides[key] = value
    return cfg.override(overrides) if overrides else cfg


def cmd_synth(args) -> int:
    out = Path(args.out)
    groups = synth_dataset(args.groups, args.n, args.size, args.seed, args.max_distractors)
    for g in groups:
        save_group(g, out / g.name)
    print(f"wrote {len(groups)} groups, {sum(g.n for g in groups)} image/mask pairs to {out}")
    return 0


def cmd_config(args) -> int:
    cfg = _load_config(args)
    text = json.dumps(cfg.to_dict(), indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    return 0


def cmd_train(args) -> int:
    cfg = _load_config(args)
    dataset = load_dataset(args.data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg.save(out / "config.json")
    print("step,group,lr,grad_norm,bce,iou,occ,occ_s3,occ_s4,occ_s5,total")
    started = time.time()

    def log(rec):
        row = rec.row()
        print(",".join(f"{v:.6g}" if isinstance(v, float) else str(v) for v in row.values()), flush=True)

    result = train(dataset, cfg, out_dir=out, log=log)
    print(f"# finished {len(result.history)} steps in {time.time() - started:.1f}s; "
          f"checkpoint {out / 'final.ckpt'}")
    return 0


def cmd_eval(args) -> int:
    ckpt = load_checkpoint(args.ckpt)
    report = evaluate(load_dataset(args.data), ckpt)
    if args.csv:
        report.write_csv(args.csv, Path(args.data).name)
    print("s_measure,e_max,f_max,mae,count")
    print(f"{report.s_measure:.6f},{report.e_max:.6f},{report.f_max:.6f},{report.mae:.6f},{report.count}")
    return 0


def cmd_infer(args) -> int:
    ckpt = load_checkpoint(args.ckpt)
    model = ckpt.model()
    out = Path(args.out)
    written = 0
    for g in load_dataset(args.data):
        pred = predict(model, g)
        gdir = out / g.name
        gdir.mkdir(parents=True, exist_ok=True)
        for i, stem in enumerate(g.stems):
            prob = np.clip(pred.prob.data[i, ..., 0], 0.0, 1.0)
            Image.fromarray(np.round(prob * 255).astype(np.uint8), "L").save(gdir / f"{stem}.png")
            written += 1
        if args.dump_corr:
            if not pred.fields:
                raise SystemExit("--dump-corr needs a model with correspondence fields (mode sac or cac)")
            for s, fld in sorted(pred.fields.items()):
                refined = fld.refined.data
                write_corr(gdir / f"corr_s{s}.bin", s, refined)
                overlay(g.images, g.masks, refined).save(gdir / f"corr_s{s}.png")
    print(f"wrote {written} saliency maps to {out}")
    return 0


def cmd_macs(args) -> int:
    cfg = _load_config(args)
    ks = tuple(args.k) if args.k else (3, 5, cfg.pipeline.k)
    result = macs.compare(cfg, args.n, args.size, ks)
    print(macs.format_table(result))
    if (args.n or cfg.data.n) == 6 and (args.size or cfg.data.size) == 256:
        print(f"# reference figures for this geometry with a VGG-16 channel plan: full-pixel PAG "
              f"{REFERENCE_MACS['full']}, condensed {REFERENCE_MACS['cac']} (context only; channel plans differ)")
    return 0


def cmd_gradcheck(args) -> int:
    failed = False
    print("op,max_rel_error,status")
    for name, err in gradcheck.check_all_ops(trials=args.trials).items():
        ok = err < args.tol
        failed |= not ok
        print(f"{name},{err:.3e},{'ok' if ok else 'FAIL'}")
    cfg = _load_config(args) if args.config else gradcheck.toy_config()
    cfg = cfg.override({"train.dtype": "float64"})
    err = gradcheck.end_to_end(cfg, max_entries=args.max_entries)
    ok = err < args.tol
    failed |= not ok
    print(f"end_to_end,{err:.3e},{'ok' if ok else 'FAIL'}")
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="conda-cosod", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def with_config(sp):
        sp.add_argument("--config", help="JSON run config")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override a config key, e.g. pipeline.mode=sac (repeatable)")

    sp = sub.add_parser("synth", help="write synthetic co-salient groups")
    sp.add_argument("--out", required=True)
    sp.add_argument("--groups", type=int, default=4)
    sp.add_argument("--n", type=int, default=6)
    sp.add_argument("--size", type=int, default=64)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--max-distractors", type=int, default=2)
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("config", help="print (or write) the effective config")
    with_config(sp)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_config)

    sp = sub.add_parser("train", help="train on a dataset directory")
    with_config(sp)
    sp.add_argument("--data", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--steps", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--lr", type=float)
    sp.add_argument("--mode", choices=("off", "full", "sac", "cac"))
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("eval", help="evaluate a checkpoint")
    sp.add_argument("--ckpt", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--csv", help="write per-image metrics here")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("infer", help="write saliency maps (and correspondences)")
    sp.add_argument("--ckpt", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--dump-corr", action="store_true")
    sp.set_defaults(func=cmd_infer)

    sp = sub.add_parser("macs", help="closed-form MAC table, full-pixel vs condensed")
    with_config(sp)
    sp.add_argument("--n", type=int)
    sp.add_argument("--size", type=int)
    sp.add_argument("--k", type=int, nargs="+")
    sp.set_defaults(func=cmd_macs)

    sp = sub.add_parser("gradcheck", help="finite-difference check of every op and the full loss")
    with_config(sp)
    sp.add_argument("--trials", type=int, default=20)
    sp.add_argument("--tol", type=float, default=1e-3)
    sp.add_argument("--max-entries", type=int, default=10,
                    help="entries probed per parameter tensor in the end-to-end check (0 = all)")
    sp.set_defaults(func=cmd_gradcheck)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with thread_limit():
            return args.func(args)
    except (ValueError, OSError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
