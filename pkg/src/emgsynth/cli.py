"""Command-line pipeline.

Subcommands: toygen, train, generate, eval-similarity, eval-augment, ablate,
plot. Every run resolves its configuration (file + ``--set`` overrides),
writes artifacts under ``--out`` (default ``$SEQEMG_OUT/<command>``), and
echoes an ``effective-config`` file that reproduces the run. Input dataset
directories are never written to.

Exit codes: 0 success, 1 runtime failure, 2 bad usage or invalid config.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import ConfigError, load_config, write_effective_config
from .dataset import denormalize_emg, EmgSequence, load_dataset, save_dataset, split_samples_by_tag
from .evalbench import (
    ABLATION_ORDER,
    default_envelope_window,
    run_ablation,
    run_augmentation_protocol,
    run_similarity_report,
)
from .model import load_checkpoint
from .toyoracle import generate_toy_dataset
from .training import assemble_windows, train


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="emgsynth",
        description="Angle-conditioned EMG synthesis: data, training, evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, data=False, checkpoint=False):
        p.add_argument("--config", help="INI config file")
        p.add_argument("--set", dest="overrides", action="append", default=[],
                       metavar="SECTION.KEY=VALUE", help="config override (repeatable)")
        p.add_argument("--out", help="output directory (default $SEQEMG_OUT/<command>)")
        p.add_argument("--seed", type=int, default=None, help="seed shortcut")
        if data:
            p.add_argument("--data", required=True, help="dataset directory or manifest")
        if checkpoint:
            p.add_argument("--checkpoint", required=True, help="model checkpoint file")

    p = sub.add_parser("toygen", help="generate the synthetic paired dataset")
    common(p)
    p.set_defaults(func=cmd_toygen)

    p = sub.add_parser("train", help="adversarial training on a dataset")
    common(p, data=True)
    p.add_argument("--epochs", type=int, default=None, help="override train.epochs")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("generate", help="synthesize EMG for dataset angle sequences")
    common(p, data=True, checkpoint=True)
    p.add_argument("--split", default="test", choices=("train", "val", "test", "all"))
    p.add_argument("--indices", default=None, help="comma list within the split")
    p.add_argument("--denormalize", action="store_true",
                   help="map output back to raw units via dataset stats")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("eval-similarity", help="DTW / FFT MSE / EECC on held-out pairs")
    common(p, data=True, checkpoint=True)
    p.add_argument("--split", default="test", choices=("train", "val", "test", "all"))
    p.set_defaults(func=cmd_eval_similarity)

    p = sub.add_parser("eval-augment", help="RR/GR/MR classifier accuracy study")
    common(p, data=True, checkpoint=True)
    p.set_defaults(func=cmd_eval_augment)

    p = sub.add_parser("ablate", help="train and score all architecture variants")
    common(p, data=True)
    p.add_argument("--seeds", default="0,1,2", help="comma list of seeds")
    p.add_argument("--variants", default=",".join(ABLATION_ORDER))
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("plot", help="signal overlays (real vs generated) as SVG+CSV")
    common(p, data=True, checkpoint=True)
    p.add_argument("--split", default="test", choices=("train", "val", "test", "all"))
    p.add_argument("--indices", default="0", help="comma list within the split")
    p.set_defaults(func=cmd_plot)
    return parser


def _out_dir(args):
    root = Path(os.environ.get("SEQEMG_OUT", "."))
    out = Path(args.out) if args.out else root / args.command
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_data(args):
    manifest, samples = load_dataset(args.data)
    return manifest, samples


def _pick_split(samples, split):
    if split == "all":
        return samples
    train_s, val_s, test_s = split_samples_by_tag(samples)
    chosen = {"train": train_s, "val": val_s, "test": test_s}[split]
    if not chosen:
        raise ConfigError(f"split {split!r} is empty in this dataset")
    return chosen


def _parse_int_list(text, what):
    try:
        return [int(v) for v in text.split(",") if v.strip() != ""]
    except ValueError:
        raise ConfigError(f"bad {what} list {text!r}") from None


def _model_cfg_for(manifest, cfg, seed=None):
    mc = replace(
        cfg.model,
        d_j=manifest.d_j,
        d_e=manifest.d_e,
        upsample_factor=int(round(manifest.sample_rate_hz / manifest.frame_rate_hz)),
    )
    if seed is not None:
        mc = replace(mc, seed=seed)
    return mc


def _echo_config(out, cfg, args, **extra):
    info = {"command": args.command, "out": str(out)}
    for key in ("data", "checkpoint", "split", "indices", "seed", "epochs", "seeds"):
        val = getattr(args, key, None)
        if val is not None:
            info[key] = val
    info.update(extra)
    write_effective_config(out / "effective-config", cfg, cli_extra=info)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_toygen(args):
    cfg = load_config(args.config, args.overrides)
    if args.seed is not None:
        cfg.toy = replace(cfg.toy, seed=args.seed)
    out = _out_dir(args)
    manifest, samples = generate_toy_dataset(cfg.toy)
    save_dataset(out, samples, stats=manifest.stats, extra=manifest.extra)
    _echo_config(out, cfg, args)
    counts = {}
    for s in samples:
        counts[s.split] = counts.get(s.split, 0) + 1
    print(f"wrote {len(samples)} samples to {out} "
          f"(train={counts.get('train', 0)} val={counts.get('val', 0)} "
          f"test={counts.get('test', 0)})")
    return 0


def cmd_train(args):
    cfg = load_config(args.config, args.overrides)
    tc = cfg.train
    if args.seed is not None:
        tc = replace(tc, seed=args.seed)
    if args.epochs is not None:
        tc = replace(tc, epochs=args.epochs)
    manifest, samples = _load_data(args)
    mc = _model_cfg_for(manifest, cfg, seed=args.seed)
    train_samples = _pick_split(samples, "train")
    windows = assemble_windows(train_samples, tc, stats=manifest.stats)
    out = _out_dir(args)
    cfg = replace(cfg, model=mc, train=tc)
    _echo_config(out, cfg, args, n_windows=len(windows))
    _, _, history = train(windows, mc, tc, out_dir=out)
    last = history[-1]
    print(f"trained {tc.epochs} epochs on {len(windows)} windows -> {out}")
    print(f"final epoch means: disc={last['disc_loss']:.4f} "
          f"gen={last['gen_loss']:.4f} kl={last['kl']:.4f}")
    return 0


def cmd_generate(args):
    cfg = load_config(args.config, args.overrides)
    manifest, samples = _load_data(args)
    synth, _, _ = load_checkpoint(args.checkpoint)
    chosen = _pick_split(samples, args.split)
    if args.indices is not None:
        idx = _parse_int_list(args.indices, "index")
        try:
            chosen = [chosen[i] for i in idx]
        except IndexError:
            raise ConfigError(
                f"index out of range for split of {len(chosen)} samples"
            ) from None
    out = _out_dir(args)
    _echo_config(out, cfg, args)
    rng = np.random.default_rng(np.random.SeedSequence(args.seed or 0))
    lines = ["file,rows,cols,label"]
    for i, s in enumerate(chosen):
        gen = synth.generate(s.angles.values, rng=rng)
        if args.denormalize and manifest.stats is not None:
            gen = denormalize_emg(
                EmgSequence(gen, s.emg.sample_rate_hz), manifest.stats
            ).values
        name = f"gen-{i:06d}.f32"
        np.ascontiguousarray(gen, dtype="<f4").tofile(out / name)
        lines.append(f"{name},{gen.shape[0]},{gen.shape[1]},{s.gesture_label}")
    (out / "generated.csv").write_text("\n".join(lines) + "\n")
    print(f"generated {len(chosen)} sequences -> {out}")
    return 0


def cmd_eval_similarity(args):
    cfg = load_config(args.config, args.overrides)
    manifest, samples = _load_data(args)
    synth, _, _ = load_checkpoint(args.checkpoint)
    chosen = _pick_split(samples, args.split)
    rng = np.random.default_rng(np.random.SeedSequence([args.seed or 0, 7]))
    real_set, gen_set = [], []
    for s in chosen:
        from .dataset import normalize_sample

        real = normalize_sample(s, manifest.stats) if manifest.stats else s
        real_set.append(real.emg.values)
        gen_set.append(synth.generate(s.angles.values, rng=rng))
    report = run_similarity_report(
        real_set, gen_set,
        envelope_window=default_envelope_window(manifest.sample_rate_hz),
        seed=args.seed or 0,
    )
    out = _out_dir(args)
    _echo_config(out, cfg, args)
    report.write_csv(out / "similarity.csv")
    text = report.render_text(title=f"Similarity on split={args.split!r} (n={len(chosen)})")
    (out / "similarity.txt").write_text(text + "\n")
    print(text)
    return 0


def cmd_eval_augment(args):
    cfg = load_config(args.config, args.overrides)
    spec = cfg.protocol
    if args.seed is not None:
        spec = replace(spec, seed=args.seed)
    manifest, samples = _load_data(args)
    report = run_augmentation_protocol(samples, args.checkpoint, spec,
                                       stats=manifest.stats)
    out = _out_dir(args)
    cfg = replace(cfg, protocol=spec)
    _echo_config(out, cfg, args)
    report.write_csv(out / "augmentation.csv")
    text = report.render_text(title="Classifier accuracy [%] by training data")
    (out / "augmentation.txt").write_text(text + "\n")
    print(text)
    return 0


def cmd_ablate(args):
    cfg = load_config(args.config, args.overrides)
    tc = cfg.train
    if args.seed is not None:
        tc = replace(tc, seed=args.seed)
    manifest, samples = _load_data(args)
    mc = _model_cfg_for(manifest, cfg, seed=args.seed)
    seeds = _parse_int_list(args.seeds, "seed")
    variants = [v.strip() for v in args.variants.split(",") if v.strip()]
    train_samples = _pick_split(samples, "train")
    try:
        eval_samples = _pick_split(samples, "val")
    except ConfigError:
        eval_samples = _pick_split(samples, "test")
    windows = assemble_windows(train_samples, tc, stats=manifest.stats)
    report = run_ablation(
        windows, eval_samples, mc, tc,
        variants=variants, seeds=seeds, stats=manifest.stats,
    )
    out = _out_dir(args)
    cfg = replace(cfg, model=mc, train=tc)
    _echo_config(out, cfg, args)
    report.write_csv(out / "ablation.csv")
    text = report.render_text(title=f"Ablation (median over seeds {seeds})")
    (out / "ablation.txt").write_text(text + "\n")
    print(text)
    return 0


def cmd_plot(args):
    from . import plotting
    from .dataset import normalize_sample

    cfg = load_config(args.config, args.overrides)
    manifest, samples = _load_data(args)
    synth, _, _ = load_checkpoint(args.checkpoint)
    chosen = _pick_split(samples, args.split)
    idx = _parse_int_list(args.indices, "index")
    out = _out_dir(args)
    _echo_config(out, cfg, args)
    rng = np.random.default_rng(np.random.SeedSequence([args.seed or 0, 3]))
    for i in idx:
        try:
            s = chosen[i]
        except IndexError:
            raise ConfigError(
                f"index {i} out of range for split of {len(chosen)} samples"
            ) from None
        real = normalize_sample(s, manifest.stats) if manifest.stats else s
        gen = synth.generate(s.angles.values, rng=rng)
        plotting.plot_pair_overlay(
            out / f"pair-{i:06d}.svg", real.emg.values, gen,
            manifest.sample_rate_hz,
            title=f"sample {i} (label {s.gesture_label})",
        )
        plotting.write_series_csv(
            out / f"pair-{i:06d}.csv", real.emg.values, gen, manifest.sample_rate_hz
        )
    print(f"wrote {len(idx)} overlay plots -> {out}")
    return 0


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except Exception as err:  # noqa: BLE001 - CLI boundary
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
