"""``dream`` command line: prepare, train, eval, ablate, diagnose, gradcheck, export-embeddings.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numeric failure.
"""

import argparse
import csv
import json
import logging
from pathlib import Path
import sys

import numpy as np

from .config import ABLATIONS, load_config
from .diagnostics import DiagnosticsRecorder
from .errors import ConfigError, DreamError, NumericError
from .evaluation import evaluate
from .numerics.checkpoint import load_checkpoint, restore_into
from .numerics.gradcheck import grad_check
from .pipeline import build_model, prepare
from .storage import write_features
from .training import TripleSampler, train

log = logging.getLogger("dream")

REPORT_KS = (10, 20)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _run_config(args):
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
        overrides["train.seed"] = args.seed
    if getattr(args, "out", None):
        overrides["output_dir"] = args.out
    flags = [name for name in ABLATIONS if getattr(args, _dest(name), False)]
    cfg = load_config(args.config, overrides)
    if flags:
        cfg = cfg.with_ablations(flags)
    return cfg


def _dest(name):
    return name.replace("-", "_")


def _out_dir(cfg):
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _echo(cfg, out):
    cfg.dump(out / "config.yaml")


def _append_csv(path, row):
    path = Path(path)
    new = not path.exists()
    with open(path, "a", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(row))
        if new:
            w.writeheader()
        w.writerow(row)


def _report_doc(report):
    doc = report.as_dict()
    doc.pop("wall_time")
    return doc


def _load_model(cfg, checkpoint):
    dataset, graphs, _ = prepare(cfg)
    model = build_model(cfg, dataset, graphs)
    slots, _, meta = load_checkpoint(checkpoint)
    restore_into(model.slots, slots)
    return dataset, model, meta


# --- commands --------------------------------------------------------------

def cmd_prepare(args):
    cfg = _run_config(args)
    dataset, graphs, info = prepare(cfg)
    print(f"dataset: {info['dataset_dir']} ({'reused' if info['dataset_reused'] else 'built'})")
    print(f"graphs:  {info['graph_dir']} ({'reused' if info['graphs_reused'] else 'built'})")
    print(f"{dataset.n_users} users, {dataset.n_items} items, train/val/test = "
          f"{len(dataset.train)}/{len(dataset.val)}/{len(dataset.test)}")
    return 0


def _train_one(cfg, out):
    dataset, graphs, _ = prepare(cfg)
    model = build_model(cfg, dataset, graphs)
    out.mkdir(parents=True, exist_ok=True)
    _echo(cfg, out)
    rec = None
    if cfg.diagnostics.enabled:
        rec = DiagnosticsRecorder(dataset, cfg.diagnostics.sample_size, cfg.seed,
                                  cfg.diagnostics.line_eval, ks=(20,))
    tc = cfg.train
    result = train(model, dataset, tc, out_dir=out, on_epoch=rec)
    if rec is not None:
        rec.write(out)
    if result.test_report is not None:
        _append_csv(out / "eval.csv", {"run": out.name, **_report_doc(result.test_report)})
    return result


def cmd_train(args):
    cfg = _run_config(args)
    out = _out_dir(cfg)
    result = _train_one(cfg, out)
    print(f"best epoch {result.best_epoch}: val {cfg.train.stop_metric} = {result.best_score:.4f}")
    if result.test_report is not None:
        print("test " + " ".join(f"{k}={v:.4f}" for k, v in result.test_report.metrics.items()))
    print(f"checkpoint: {out / 'best.ckpt'}")
    return 0


def cmd_eval(args):
    cfg = _run_config(args)
    out = _out_dir(cfg)
    dataset, model, meta = _load_model(cfg, args.checkpoint)
    report = evaluate(model, dataset, args.split, REPORT_KS, epoch=meta.get("epoch"))
    doc = _report_doc(report)
    (out / "eval_report.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    _append_csv(out / "eval.csv", {"run": Path(args.checkpoint).parent.name, **doc})
    print(" ".join(f"{k}={v:.4f}" for k, v in report.metrics.items()))
    return 0


def cmd_ablate(args):
    cfg = _run_config(args)
    out = _out_dir(cfg)
    flags = args.flags.split(",") if args.flags else list(ABLATIONS)
    unknown = [f for f in flags if f not in ABLATIONS]
    if unknown:
        raise ConfigError(f"unknown ablation flag(s): {unknown}")
    _echo(cfg, out)
    rows = []
    for name in ["full"] + flags:
        run_cfg = cfg if name == "full" else cfg.with_ablations([name])
        log.info("ablation row %s", name)
        result = _train_one(run_cfg, out / name)
        rep = result.test_report
        rows.append({"variant": name, "dataset": cfg.data.source,
                     "recall@20": f"{rep['recall@20']:.6f}", "ndcg@20": f"{rep['ndcg@20']:.6f}"})
        print(f"{name:<20} R@20={rep['recall@20']:.4f} N@20={rep['ndcg@20']:.4f}")
    with open(out / "ablation.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
    print(f"table: {out / 'ablation.csv'}")
    return 0


def cmd_diagnose(args):
    cfg = _run_config(args)
    out = _out_dir(cfg)
    checkpoint = args.checkpoint or (Path(args.logdir) / "best.ckpt" if args.logdir else None)
    if checkpoint is None:
        raise ConfigError("diagnose needs --checkpoint or --logdir")
    dataset, model, meta = _load_model(cfg, checkpoint)
    rec = DiagnosticsRecorder(dataset, cfg.diagnostics.sample_size, cfg.seed,
                              line_eval=True, ks=REPORT_KS, split=args.split)
    rec.record(meta.get("epoch", 0), model)
    rec.write(out)
    for row in rec.drift:
        print(f"drift {row['value']:.6f}")
    for row in rec.alignment:
        print(f"alignment pooled={row['value']:.6f} users={row['users']:.6f} items={row['items']:.6f}")
    return 0


def cmd_gradcheck(args):
    cfg = _run_config(args)
    dataset, graphs, _ = prepare(cfg)
    model = build_model(cfg, dataset, graphs, dtype="float64")
    sampler = TripleSampler(dataset.train, dataset.n_users, dataset.n_items)
    batch = sampler.sample(args.batch_size, np.random.default_rng(cfg.seed))
    terms = list(model.loss_parts(batch, model.leaves())) + ["total"]
    failed = []
    lines = []
    for term in terms:
        rep = grad_check(model, batch, h=args.h, tol=args.tol, term=term,
                         max_coords=args.max_coords, seed=cfg.seed)
        worst = max(rep.max_rel_error.values())
        status = "pass" if rep.passed else "FAIL"
        lines.append(f"{term:<8} max_rel_err={worst:.3e} {status}")
        if not rep.passed:
            failed.append(term)
    text = "\n".join(lines) + "\n"
    print(text, end="")
    if args.out:
        out = _out_dir(cfg)
        (out / "gradcheck.txt").write_text(text)
    if failed:
        raise NumericError(f"gradient check failed for {failed}", term=failed[0])
    return 0


def cmd_export(args):
    cfg = _run_config(args)
    out = _out_dir(cfg) / "embeddings"
    dataset, model, _ = _load_model(cfg, args.checkpoint)
    reps = model.representations()
    for line in ("general", "behavior", "modal"):
        u, i = reps.line(line)
        write_features(out / f"{line}_user", u, line, ids=list(dataset.user_ids), side="user")
        write_features(out / f"{line}_item", i, line, ids=list(dataset.item_ids), side="item")
    print(f"wrote 6 matrices to {out}")
    return 0


COMMANDS = {
    "prepare": (cmd_prepare, "load raw data, split it and cache the graphs"),
    "train": (cmd_train, "train with early stopping; writes checkpoint and logs"),
    "eval": (cmd_eval, "evaluate a checkpoint"),
    "ablate": (cmd_ablate, "train the full model and each ablation; writes ablation.csv"),
    "diagnose": (cmd_diagnose, "drift, alignment and per-line metrics for a checkpoint"),
    "gradcheck": (cmd_gradcheck, "finite-difference check of every active loss term"),
    "export-embeddings": (cmd_export, "write user/item representations of each line"),
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run config (defaults: built-in)")
    common.add_argument("--seed", type=int, help="override the run seed")
    common.add_argument("--out", help="output directory (overrides output_dir)")
    common.add_argument("-v", "--verbose", action="store_true")
    switches = argparse.ArgumentParser(add_help=False)
    for name in ABLATIONS:
        switches.add_argument(f"--{name}", dest=_dest(name), action="store_true")

    parser = _Parser(prog="dream", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, (_, help_text) in COMMANDS.items():
        parents = [common] if name == "ablate" else [common, switches]
        p = sub.add_parser(name, parents=parents, help=help_text, description=help_text)
        if name in ("eval", "export-embeddings"):
            p.add_argument("--checkpoint", required=True)
        if name in ("eval", "diagnose"):
            p.add_argument("--split", default="test", choices=("val", "test"))
        if name == "diagnose":
            p.add_argument("--checkpoint")
            p.add_argument("--logdir", help="training output dir (uses its best.ckpt)")
        if name == "ablate":
            p.add_argument("--flags", help="comma-separated subset of: " + ", ".join(ABLATIONS))
        if name == "gradcheck":
            p.add_argument("--batch-size", type=int, default=16)
            p.add_argument("--max-coords", type=int, default=200)
            p.add_argument("--h", type=float, default=1e-3)
            p.add_argument("--tol", type=float, default=1e-3)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command][0](args)
    except DreamError as exc:
        print(f"dream {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
