"""Command-line surface tying the pipeline together.

Commands: synth (generate events), prepare (label, rasterize, split,
normalize), train (classifier or autoencoder), evaluate (AUC report),
visualize (autoencoder base images), predict (score new events). Every
command with a --seed is end-to-end deterministic; outputs are byte-identical
across identical runs.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import architectures, storage, training
from .autoencoder import AutoencoderSpec, maximal_activation_images, train_autoencoder
from .evaluation import evaluate_scores
from .imaging import CHANNEL_SETS, fit_normalizer, normalize, rasterize, stack_images, CustomerImage
from .labeling import EXCLUDED, WindowConfig, assess, group_by_customer
from .synth import SynthConfig, generate_customers
from .training import TrainConfig, predict, stratified_split

DEFAULT_SEED = 42


def cmd_synth(args) -> int:
    config = SynthConfig(customer_count=args.customers, churn_rate=args.churn_rate,
                         excluded_fraction=args.excluded, seed=args.seed)
    counts = {"0": 0, "1": 0, "excluded": 0}
    intended = {}
    import csv
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(storage.EVENTS_HEADER)
        for cid, label, events in generate_customers(config):
            intended[cid] = label
            counts[label] += 1
            for ev in events:
                writer.writerow([ev.customer_id, ev.day, ev.channel, repr(ev.value)])
    storage.write_labels(args.labels_out, intended)
    print(f"customers={args.customers} kept={counts['0']} churned={counts['1']} "
          f"excluded={counts['excluded']} reference_day={config.reference_day}")
    return 0


def _assess_and_rasterize(grouped, window_config, channels):
    """Run the labeling protocol and build raw matrices for labeled customers.

    Returns (rows, tally-style counts, ignored-event count). Events on known
    channels outside the selected set are ignored, not errors.
    """
    selected = set(channels)
    rows = []
    counts = {"label0": 0, "label1": 0, "excluded": 0}
    reasons: dict[str, int] = {}
    ignored = 0
    for cid, events in grouped.items():
        kept = [ev for ev in events if ev.channel in selected]
        ignored += len(events) - len(kept)
        outcome = assess(events, window_config)
        if outcome.status == EXCLUDED:
            counts["excluded"] += 1
            reasons[outcome.reason] = reasons.get(outcome.reason, 0) + 1
            continue
        counts["label0" if outcome.label == 0 else "label1"] += 1
        raw = rasterize(kept, outcome.predictor_window, channels)
        rows.append((cid, outcome.label, outcome.predictor_window, raw))
    return rows, counts, reasons, ignored


def _churn_rate(images) -> float:
    labels = [im.label for im in images]
    return sum(labels) / len(labels) if labels else float("nan")


def cmd_prepare(args) -> int:
    channels = CHANNEL_SETS[args.channels]
    window_config = WindowConfig(reference_day=args.reference_day)
    events = storage.read_events(args.events)
    grouped = group_by_customer(events)
    rows, counts, reasons, ignored = _assess_and_rasterize(grouped, window_config, channels)
    if ignored:
        print(f"warning: ignored {ignored} events on channels outside the {args.channels} set",
              file=sys.stderr)
    if not rows:
        raise ValueError("no labeled customers: nothing to prepare")
    train_rows, test_rows = stratified_split(rows, args.split, args.seed,
                                             labels=[r[1] for r in rows])
    if not train_rows:
        raise ValueError(f"split {args.split} left no training data to fit on")
    if not test_rows:
        print("warning: the test side of the split is empty", file=sys.stderr)
    normalizer = fit_normalizer([r[3] for r in train_rows], args.percentile)

    def to_dataset(split_rows):
        images = [CustomerImage(cid, normalize(raw, normalizer), label, window)
                  for cid, label, window, raw in split_rows]
        return storage.Dataset(images, channels, window_config.to_dict(), normalizer)

    train_ds, test_ds = to_dataset(train_rows), to_dataset(test_rows)
    storage.write_dataset(args.out_train, train_ds)
    storage.write_dataset(args.out_test, test_ds)
    labeled = counts["label0"] + counts["label1"]
    reason_text = " ".join(f"{k}={v}" for k, v in sorted(reasons.items()))
    print(f"labeled={labeled} (label0={counts['label0']} label1={counts['label1']}) "
          f"excluded={counts['excluded']}" + (f" [{reason_text}]" if reason_text else ""))
    print(f"train={len(train_ds.images)} churn_rate={_churn_rate(train_ds.images):.6f}")
    print(f"test={len(test_ds.images)} churn_rate={_churn_rate(test_ds.images):.6f}")
    return 0


ARCH_BUILDERS = {"dl1": architectures.build_dl1, "dl2": architectures.build_dl2}
DEFAULT_EPOCHS = {"dl1": 20, "dl2": 40, "ae": 40}


def cmd_train(args) -> int:
    if bool(args.arch) == bool(args.ae):
        raise ValueError("choose exactly one of --arch or --ae")
    dataset = storage.read_dataset(args.train)
    images, labels = stack_images(dataset.images)
    days, n_channels = images.shape[1], images.shape[2]
    epochs = args.epochs if args.epochs else DEFAULT_EPOCHS[args.arch or "ae"]
    config = TrainConfig(epochs=epochs, batch_size=args.batch, seed=args.seed)

    def progress(epoch, stats):
        print(f"epoch {epoch + 1}/{epochs} loss={stats.loss:.6f}")

    if args.arch:
        spec = ARCH_BUILDERS[args.arch]()
        if (days, n_channels, 1) != spec.input_shape:
            raise ValueError(f"dataset images are {days}x{n_channels}, "
                             f"{args.arch} expects {spec.input_shape[0]}x{spec.input_shape[1]}")
        if (labels < 0).any():
            raise ValueError("classifier training needs labeled images")
        params, history = training.train(spec, images, labels, config)
        for i, stats in enumerate(history):
            progress(i, stats)
        storage.save_checkpoint(args.out, storage.CLASSIFIER, spec, params,
                                dataset.channels, dataset.normalizer, dataset.window,
                                config.to_dict(), args.seed)
    else:
        ae_spec = AutoencoderSpec(days, n_channels, args.hidden)
        params, history = train_autoencoder(images, ae_spec, config)
        for i, stats in enumerate(history):
            progress(i, stats)
        storage.save_checkpoint(args.out, storage.AUTOENCODER, ae_spec.to_network_spec(),
                                params, dataset.channels, dataset.normalizer, dataset.window,
                                config.to_dict(), args.seed, ae_spec=ae_spec)
    print(f"saved {args.out}")
    return 0


def cmd_evaluate(args) -> int:
    ckpt = storage.load_checkpoint(args.model)
    if ckpt.kind != storage.CLASSIFIER:
        raise ValueError(f"evaluate needs a classifier checkpoint, got {ckpt.kind}")
    dataset = storage.read_dataset(args.data)
    if dataset.channels != ckpt.channels:
        raise ValueError(f"dataset channels {dataset.channels} do not match checkpoint {ckpt.channels}")
    images, labels = stack_images(dataset.images)
    if (labels < 0).any():
        raise ValueError("evaluation needs labeled images")
    scores = predict(ckpt.network_spec, ckpt.params, images)
    report = evaluate_scores(scores, labels, dataset=args.data)
    out = args.out or (args.data + ".auc.txt")
    storage.write_auc_report(out, report)
    print(f"auc={report.auc!r}")
    return 0


def cmd_visualize(args) -> int:
    import os
    ckpt = storage.load_checkpoint(args.model)
    if ckpt.kind != storage.AUTOENCODER:
        raise ValueError(f"visualize needs an autoencoder checkpoint, got {ckpt.kind}")
    base_images, dead = maximal_activation_images(ckpt.ae_spec, ckpt.params)
    os.makedirs(args.out, exist_ok=True)
    for image in base_images:
        storage.write_pgm(os.path.join(args.out, f"unit_{image.unit}.pgm"), image.pixels)
        storage.write_value_table(os.path.join(args.out, f"unit_{image.unit}.csv"), image.pixels)
    for unit in dead:
        print(f"unit {unit}: dead (zero weights), skipped")
    print(f"wrote {len(base_images)} base images to {args.out}")
    return 0


def cmd_predict(args) -> int:
    ckpt = storage.load_checkpoint(args.model)
    if ckpt.kind != storage.CLASSIFIER:
        raise ValueError(f"predict needs a classifier checkpoint, got {ckpt.kind}")
    if ckpt.normalizer is None or ckpt.window is None:
        raise ValueError("checkpoint carries no normalizer; cannot prepare events")
    window = dict(ckpt.window)
    window.update({"reference_day": args.reference_day, "earliest_day": None})
    window_config = WindowConfig.from_dict(window)
    events = storage.read_events(args.events)
    grouped = group_by_customer(events)
    selected = set(ckpt.channels)
    ignored = 0
    ids, pixel_list, exclusions = [], [], []
    for cid, customer_events in grouped.items():
        kept = [ev for ev in customer_events if ev.channel in selected]
        ignored += len(customer_events) - len(kept)
        outcome = assess(customer_events, window_config)
        if outcome.status == EXCLUDED:
            exclusions.append((cid, outcome.reason))
            continue
        raw = rasterize(kept, outcome.predictor_window, ckpt.channels)
        ids.append(cid)
        pixel_list.append(normalize(raw, ckpt.normalizer))
    if ignored:
        print(f"warning: ignored {ignored} events on channels outside the model's set",
              file=sys.stderr)
    scores = {}
    if ids:
        batch = np.stack(pixel_list)[..., None]
        for cid, score in zip(ids, predict(ckpt.network_spec, ckpt.params, batch)):
            scores[cid] = float(score)
    storage.write_scores(args.out, scores, exclusions)
    print(f"scored={len(scores)} excluded={len(exclusions)}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="churnvision",
                                     description="Churn prediction from usage-behavior images.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic events file plus a labels sidecar")
    p.add_argument("--customers", type=int, required=True)
    p.add_argument("--churn-rate", type=float, default=0.0357)
    p.add_argument("--excluded", type=float, default=0.02)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--out", required=True)
    p.add_argument("--labels-out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("prepare", help="label, rasterize, split and normalize an events file")
    p.add_argument("--events", required=True)
    p.add_argument("--reference-day", type=int, required=True)
    p.add_argument("--channels", choices=sorted(CHANNEL_SETS), default="dl1")
    p.add_argument("--percentile", type=float, default=99.0)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--split", type=float, default=0.8)
    p.add_argument("--out-train", required=True)
    p.add_argument("--out-test", required=True)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="train a classifier or an autoencoder on a prepared dataset")
    p.add_argument("--arch", choices=sorted(ARCH_BUILDERS))
    p.add_argument("--ae", action="store_true", help="train an autoencoder instead of a classifier")
    p.add_argument("--hidden", type=int, default=16, help="autoencoder hidden units")
    p.add_argument("--train", required=True, help="prepared dataset file")
    p.add_argument("--epochs", type=int, default=0, help="0 = architecture default")
    p.add_argument("--batch", type=int, default=1000)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="write an AUC report for a classifier on a dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", default="", help="report path (default: <data>.auc.txt)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("visualize", help="export autoencoder base images as graymaps and tables")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_visualize)

    p = sub.add_parser("predict", help="score new events with a trained classifier")
    p.add_argument("--model", required=True)
    p.add_argument("--events", required=True)
    p.add_argument("--reference-day", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
