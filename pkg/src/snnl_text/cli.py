"""Command-line entry point.

    snnl-text embed             corpus CSV + GloVe file -> embedding cache
    snnl-text train-classifier  multi-seed FFN/CNN training and test evaluation
    snnl-text train-autoencoder multi-seed autoencoder training + latent dumps
    snnl-text cluster-eval      k-means over a cache, latent dumps or PCA codes

Every flag can also come from an INI file given with ``--config``; keys in
the section named after the command (or ``[DEFAULT]``) use the flag's long
name with dashes or underscores. Flags on the command line win.

Exit status: 0 success, 1 runtime failure, 2 usage or input error.
"""

import argparse
import configparser
import json
import logging
import os
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import clustering, data, metrics, models, nn
from .snnl import TemperatureSchedule

DEFAULT_SEEDS = (42, 1234, 73, 1024, 31415926)
log = logging.getLogger("snnl_text")


class InputError(Exception):
    """Bad user input; maps to exit status 2."""


def _seed_list(text):
    try:
        seeds = [int(s) for s in str(text).split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid seed list {text!r}") from None
    if not seeds:
        raise argparse.ArgumentTypeError("seed list is empty")
    return seeds


def _int_tuple(text):
    try:
        return tuple(int(s) for s in str(text).split(",") if s.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid integer list {text!r}") from None


def _write_json(path, payload):
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    tmp = Path(str(path) + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _existing(path, what):
    if path is None:
        raise InputError(f"missing {what}")
    if not Path(path).is_file():
        raise InputError(f"{what} not found: {path}")
    return Path(path)


def _read_cache(path, what="embedding cache"):
    try:
        return data.read_embedding_cache(_existing(path, what))
    except data.DataFormatError as exc:
        raise InputError(str(exc)) from None


def _write_meta(out_dir, command, started):
    _write_json(Path(out_dir) / "run_meta.json", {
        "command": command,
        "started": time.strftime("%Y-%m-%dT%H:%M:%S", time.localtime(started)),
        "seconds": round(time.time() - started, 3),
    })


def _train_config(args, seed, mode="all_hidden"):
    return models.TrainConfig(
        lr=args.lr,
        batch_size=args.batch_size,
        epochs=args.epochs,
        alpha=args.alpha,
        schedule=TemperatureSchedule(args.eta, args.gamma),
        mode=mode,
        latent_tap_width=getattr(args, "tap_width", 100),
        seed=seed,
        dtype=args.dtype,
    )


def cmd_embed(args):
    corpus_path = _existing(args.corpus, "corpus CSV")
    glove_path = _existing(args.glove, "GloVe file")
    try:
        if args.agnews:
            corpus = data.read_agnews_csv(corpus_path)
        else:
            names = data.read_class_names(args.classes) if args.classes else None
            corpus = data.read_corpus_csv(corpus_path, names)
        if args.subset:
            corpus = corpus.subset(args.subset, args.subset_seed)
        table = data.load_word_vectors(glove_path)
    except data.DataFormatError as exc:
        raise InputError(str(exc)) from None
    stopwords = data.load_stopwords(args.stopwords) if args.stopwords else None
    dataset = data.build_embedding_cache(corpus, table, stopwords=stopwords)
    flagged = int(dataset.flagged.sum())
    if args.scaler_from:
        reference = _read_cache(args.scaler_from, "scaler reference cache")
        if not reference.scaled:
            raise InputError(f"{args.scaler_from} carries no scaler")
        if reference.d != dataset.d:
            raise InputError(
                f"scaler has {reference.d} features, embeddings have {dataset.d}")
        dataset = data.minmax_scale(dataset, reference.scaler)
    elif args.scale:
        dataset = data.minmax_scale(dataset)
    data.write_embedding_cache(args.out, dataset)
    print(f"n={dataset.n} d={dataset.d} flagged={flagged} scaled={int(dataset.scaled)}")
    return 0


def cmd_train_classifier(args):
    started = time.time()
    train = _read_cache(args.cache)
    test = _read_cache(args.test_cache, "test cache")
    if train.d != test.d:
        raise InputError(f"train has {train.d} features, test has {test.d}")
    k = args.classes or int(max(train.labels.max(), test.labels.max())) + 1
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    epochs = args.epochs if args.epochs is not None else (50 if args.arch == "cnn" else 30)
    args.epochs = epochs
    per_seed = {}
    for seed in args.seeds:
        seed_dir = out_dir / str(seed)
        seed_dir.mkdir(exist_ok=True)
        dtype = np.dtype(args.dtype)
        if args.arch == "ffn":
            hidden = args.hidden or (500, 500)
            net = models.build_ffn_classifier(train.d, k, seed, hidden, dtype)
        else:
            hidden = args.hidden or (2048, 1024, 512)
            net = models.build_cnn_classifier(train.d, k, seed, hidden, dtype=dtype)
        log.info("seed %d: training %s, %d parameters", seed, args.arch, net.n_params)
        history = models.train_classifier(net, train, _train_config(args, seed))
        probs, _ = nn.forward(net, test.features)
        acc, f1w, f1m = metrics.classification_metrics(
            test.labels, probs.argmax(axis=1), k)
        row = {"accuracy": acc, "f1_weighted": f1w, "f1_macro": f1m}
        history.write_jsonl(seed_dir / "history.jsonl")
        nn.save_network(seed_dir / "model.nnw", net)
        _write_json(seed_dir / "metrics.json", row)
        per_seed[str(seed)] = row
        print(f"seed {seed}: accuracy={acc:.4f} f1_weighted={f1w:.4f}")
    report = {
        "command": "train-classifier",
        "config": {
            "arch": args.arch, "alpha": args.alpha, "epochs": epochs,
            "batch_size": args.batch_size, "lr": args.lr, "eta": args.eta,
            "gamma": args.gamma, "dtype": args.dtype,
        },
        "seeds": list(args.seeds),
        "per_seed": per_seed,
        "aggregate": metrics.aggregate(per_seed),
    }
    _write_json(out_dir / "report.json", report)
    _write_meta(out_dir, "train-classifier", started)
    return 0


def cmd_train_autoencoder(args):
    started = time.time()
    train = _read_cache(args.cache)
    if not train.scaled:
        raise InputError(
            f"{args.cache} is not min-max scaled; rerun 'embed' with --scale")
    encode_set = _read_cache(args.encode_cache, "cache to encode") if args.encode_cache else train
    if encode_set.d != train.d:
        raise InputError("cache to encode has a different dimensionality")
    if args.encode_cache and not encode_set.scaled:
        raise InputError(f"{args.encode_cache} is not scaled; use embed --scaler-from")
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    per_seed = {}
    for seed in args.seeds:
        seed_dir = out_dir / str(seed)
        seed_dir.mkdir(exist_ok=True)
        net = models.build_autoencoder(train.d, args.latent_dim, seed,
                                       args.encoder_hidden, np.dtype(args.dtype))
        config = _train_config(args, seed, args.mode)
        history = models.train_autoencoder(net, train, config)
        latent = models.encode(net, encode_set.features).astype(np.float32)
        data.write_embedding_cache(
            seed_dir / "latent.emb", data.EmbeddedDataset(latent, encode_set.labels))
        history.write_jsonl(seed_dir / "history.jsonl")
        nn.save_network(seed_dir / "model.nnw", net)
        last = history.records[-1]
        per_seed[str(seed)] = {"reconstruction_loss": last.primary_loss, **{
            f"snnl_{name}": value for name, value in last.snnl.items()}}
        print(f"seed {seed}: reconstruction={last.primary_loss:.4f}")
    report = {
        "command": "train-autoencoder",
        "config": {
            "mode": args.mode, "alpha": args.alpha, "epochs": args.epochs,
            "batch_size": args.batch_size, "lr": args.lr, "eta": args.eta,
            "gamma": args.gamma, "latent_dim": args.latent_dim,
            "tap_width": args.tap_width, "dtype": args.dtype,
        },
        "seeds": list(args.seeds),
        "per_seed": per_seed,
        "aggregate": metrics.aggregate(per_seed),
    }
    _write_json(out_dir / "report.json", report)
    _write_meta(out_dir, "train-autoencoder", started)
    return 0


def _table_row(aggregate):
    row = {}
    for name, stats in aggregate.items():
        extreme = "min" if name in metrics.LOWER_IS_BETTER else "max"
        row[name] = {"avg": stats["avg"], extreme: stats[extreme]}
    return row


def cmd_cluster_eval(args):
    started = time.time()
    per_seed = {}
    if args.source == "latent":
        if args.latent_dir is None:
            raise InputError("--source latent needs --latent-dir")
        sources = {
            seed: _read_cache(Path(args.latent_dir) / str(seed) / "latent.emb",
                              f"latent dump for seed {seed}")
            for seed in args.seeds
        }
    else:
        dataset = _read_cache(args.features, "feature cache")
        if args.source == "pca":
            if args.pca_dims > dataset.d:
                raise InputError(f"--pca-dims {args.pca_dims} exceeds {dataset.d} features")
            projected, _ = clustering.pca_project(dataset.features, args.pca_dims)
            dataset = data.EmbeddedDataset(projected, dataset.labels)
        sources = {seed: dataset for seed in args.seeds}
    for seed, ds in sources.items():
        n_labels = np.unique(ds.labels).size
        if args.k > n_labels:
            warnings.warn(f"k={args.k} exceeds the {n_labels} distinct labels")
        X = ds.features.astype(np.float64)
        result = clustering.kmeans(X, args.k, seed)
        per_seed[str(seed)] = metrics.cluster_report_row(X, ds.labels, result.assignments)
        if args.out_dir:
            seed_dir = Path(args.out_dir) / str(seed)
            seed_dir.mkdir(parents=True, exist_ok=True)
            clustering.write_assignments_csv(seed_dir / "assignments.csv", result.assignments)
        print(f"seed {seed}: " + " ".join(
            f"{name}={value:.4f}" for name, value in per_seed[str(seed)].items()
            if value is not None))
    aggregate = metrics.aggregate(per_seed)
    report = {
        "command": "cluster-eval",
        "config": {"source": args.source, "k": args.k,
                   "pca_dims": args.pca_dims if args.source == "pca" else None},
        "seeds": list(args.seeds),
        "per_seed": per_seed,
        "aggregate": aggregate,
        "table": _table_row(aggregate),
    }
    if args.out_dir:
        out_dir = Path(args.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        _write_json(out_dir / "report.json", report)
        _write_meta(out_dir, "cluster-eval", started)
    else:
        print(json.dumps(report, indent=2, sort_keys=True))
    return 0


def _add_training_flags(p, epochs_default):
    p.add_argument("--cache", help="training embedding cache")
    p.add_argument("--alpha", type=float, default=0.0, help="SNNL weight")
    p.add_argument("--seeds", type=_seed_list, default=list(DEFAULT_SEEDS))
    p.add_argument("--out-dir", default="runs")
    p.add_argument("--epochs", type=int, default=epochs_default)
    p.add_argument("--batch-size", type=int, default=256)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--eta", type=float, default=1.0)
    p.add_argument("--gamma", type=float, default=0.55)
    p.add_argument("--dtype", choices=("float64", "float32"), default="float64")


def build_parser():
    parser = argparse.ArgumentParser(prog="snnl-text", description=__doc__.split("\n")[0])
    parser.add_argument("--config", help="INI file with flag defaults")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("embed", help="build an embedding cache")
    p.add_argument("--corpus", help="CSV with header label,text")
    p.add_argument("--glove", help="GloVe text file")
    p.add_argument("--out", default="embeddings.emb")
    p.add_argument("--classes", help="class-name list, one per line")
    p.add_argument("--agnews", action="store_true",
                   help="corpus is the raw AG News CSV (class,title,description)")
    p.add_argument("--stopwords", help="override the shipped stop-word list")
    p.add_argument("--scale", action="store_true", help="min-max scale to [0, 1]")
    p.add_argument("--scaler-from", help="reuse the scaler stored in this cache")
    p.add_argument("--subset", type=int, help="keep a pseudorandom subset of this size")
    p.add_argument("--subset-seed", type=int, default=42)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("train-classifier", help="train FFN/CNN classifiers")
    _add_training_flags(p, None)
    p.add_argument("--test-cache", help="test embedding cache")
    p.add_argument("--arch", choices=("ffn", "cnn"), default="ffn")
    p.add_argument("--hidden", type=_int_tuple, help="hidden widths, comma-separated")
    p.add_argument("--classes", type=int, help="number of classes (default: from labels)")
    p.set_defaults(func=cmd_train_classifier)

    p = sub.add_parser("train-autoencoder", help="train autoencoders, dump latent codes")
    _add_training_flags(p, 30)
    p.add_argument("--mode", choices=models.MODES, default="all_hidden")
    p.add_argument("--latent-dim", type=int, default=128)
    p.add_argument("--tap-width", type=int, default=100)
    p.add_argument("--encoder-hidden", type=_int_tuple, default=(500, 500, 2000))
    p.add_argument("--encode-cache", help="cache to encode (default: the training cache)")
    p.set_defaults(func=cmd_train_autoencoder)

    p = sub.add_parser("cluster-eval", help="k-means + clustering criteria")
    p.add_argument("--source", choices=("cache", "latent", "pca"), default="cache")
    p.add_argument("--features", help="embedding cache (sources cache and pca)")
    p.add_argument("--latent-dir", help="train-autoencoder output directory")
    p.add_argument("--k", type=int, default=4)
    p.add_argument("--pca-dims", type=int, default=128)
    p.add_argument("--seeds", type=_seed_list, default=list(DEFAULT_SEEDS))
    p.add_argument("--out-dir", help="write report.json here instead of stdout")
    p.set_defaults(func=cmd_cluster_eval)

    # --config is also accepted after the subcommand
    for p in sub.choices.values():
        p.add_argument("--config", default=argparse.SUPPRESS, help="INI file with flag defaults")
    return parser


def _apply_config(parser, argv):
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    if not Path(known.config).is_file():
        parser.error(f"config file not found: {known.config}")
    cfg = configparser.ConfigParser()
    cfg.read(known.config)
    subparsers = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    for name, sub in subparsers.choices.items():
        section = cfg[name] if cfg.has_section(name) else cfg.defaults()
        actions = {a.dest: a for a in sub._actions}
        defaults = {}
        for key, raw in section.items():
            dest = key.replace("-", "_")
            action = actions.get(dest)
            if action is None:
                continue
            if isinstance(action, argparse._StoreTrueAction):
                defaults[dest] = cfg.BOOLEAN_STATES.get(raw.lower(), False)
            elif action.type is not None:
                defaults[dest] = action.type(raw)
            else:
                defaults[dest] = raw
        sub.set_defaults(**defaults)


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
    except (argparse.ArgumentTypeError, ValueError) as exc:
        parser.error(f"config: {exc}")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
