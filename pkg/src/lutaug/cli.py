"""Command-line entry point.

Exit codes: 0 success, 1 runtime failure, 2 usage/validation error,
3 non-identifiable or degenerate input. Progress goes to stderr;
machine-readable results go to files.
"""

from __future__ import annotations

import configparser
import csv
import json
import sys
from pathlib import Path

import click
import numpy as np

from . import nn
from .augmentor import Augmentor, AugmentorConfig, train_augmentor
from .basis import (
    KMeansConfig,
    generate_seed_collection,
    init_basis,
    kmeans_cluster,
    load_collection_from_dir,
)
from .checkpoint import (
    load_augmentor,
    load_harmonizer,
    save_augmentor,
    save_harmonizer,
)
from .data import (
    load_dataset,
    load_manifest,
    make_toy_dataset,
    write_augmented_set,
)
from .errors import ManifestError, NonIdentifiableError
from .harmonize import (
    AffineHarmonizer,
    AugTrainConfig,
    held_out_fmse,
    materialize_static_set,
    sweep_static_a,
    train_augmented_only,
    train_dynamic,
    train_plain,
    train_static,
)
from .lut import serialize_cube
from .metrics import bt_rank, evaluate_images


def _info(msg: str) -> None:
    click.echo(msg, err=True)


def _read_config(path: str | None) -> configparser.ConfigParser:
    cp = configparser.ConfigParser()
    if path:
        if not Path(path).exists():
            raise click.UsageError(f"config file not found: {path}")
        cp.read(path)
    return cp


def _resolve(flag_value, cfg, section, key, default, cast):
    """Flags win over config-file values, which win over defaults."""
    if flag_value is not None:
        return flag_value
    if cfg.has_option(section, key):
        return cast(cfg.get(section, key))
    return default


@click.group()
@click.option("--config", "config_path", type=click.Path(), default=None,
              help="INI-style config file with per-command sections.")
@click.option("--seed", type=int, default=None, help="Global RNG seed.")
@click.pass_context
def cli(ctx, config_path, seed):
    """Learnable LUT augmentation toolkit."""
    ctx.ensure_object(dict)
    ctx.obj["cfg"] = _read_config(config_path)
    ctx.obj["seed"] = seed


def _seed_of(ctx, local_seed):
    if local_seed is not None:
        return local_seed
    if ctx.obj and ctx.obj.get("seed") is not None:
        return ctx.obj["seed"]
    return 0


def _collection(lut_dir, collection_size, lut_size, collection_seed):
    if lut_dir:
        return load_collection_from_dir(lut_dir)
    return generate_seed_collection(collection_size, lut_size, collection_seed)


@cli.command("cluster-luts")
@click.option("--num-basis", type=int, default=None)
@click.option("--collection-size", type=int, default=None)
@click.option("--collection-seed", type=int, default=None)
@click.option("--lut-dir", type=click.Path(), default=None)
@click.option("--lut-size", type=int, default=None)
@click.option("--max-iters", type=int, default=100, show_default=True)
@click.option("--tol", type=float, default=1e-8, show_default=True)
@click.option("--seed", type=int, default=None)
@click.option("--out-dir", type=click.Path(), required=True)
@click.pass_context
def cmd_cluster_luts(ctx, num_basis, collection_size, collection_seed, lut_dir,
                     lut_size, max_iters, tol, seed, out_dir):
    """Build basis LUTs (identity + k-means centers) as .cube files."""
    cfg = ctx.obj["cfg"]
    num_basis = _resolve(num_basis, cfg, "cluster", "num_basis", 20, int)
    collection_size = _resolve(collection_size, cfg, "cluster", "collection_size", 100, int)
    lut_size = _resolve(lut_size, cfg, "cluster", "lut_size", 17, int)
    seed = _seed_of(ctx, seed)
    collection_seed = collection_seed if collection_seed is not None else seed
    collection = _collection(lut_dir, collection_size, lut_size, collection_seed)
    if num_basis < 2 or num_basis - 1 > len(collection):
        raise click.UsageError(
            f"--num-basis {num_basis} needs 2 <= num-basis <= collection size "
            f"({len(collection)}) + 1"
        )
    km = KMeansConfig(max_iters=max_iters, tol=tol, seed=seed)
    result = kmeans_cluster(collection, num_basis - 1, km)
    basis = init_basis(collection, num_basis, km)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for i, lut in enumerate(basis.luts):
        (out / f"basis_{i:02d}.cube").write_text(
            serialize_cube(lut, title=f"basis {i:02d}")
        )
    summary = {
        "n_basis": num_basis,
        "lut_size": lut_size,
        "collection_size": len(collection),
        "inertia": result.inertia,
        "iterations": result.n_iters,
    }
    (out / "summary.json").write_text(json.dumps(summary, sort_keys=True, indent=2) + "\n")
    _info(f"wrote {num_basis} basis LUTs to {out}")


def _write_loss_csv(path, history, columns):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(columns)
        for row in history:
            w.writerow([f"{row[c]:.12g}" if isinstance(row[c], float) else row[c]
                        for c in columns])


@cli.command("train-augmentor")
@click.option("--manifest", type=click.Path(), required=True)
@click.option("--epochs", type=int, default=None)
@click.option("--lr", type=float, default=None)
@click.option("--d-z", type=int, default=None)
@click.option("--num-basis", type=int, default=None)
@click.option("--d-f", type=int, default=None)
@click.option("--lut-size", type=int, default=None)
@click.option("--encoder-size", type=int, default=None)
@click.option("--batch-size", type=int, default=None)
@click.option("--widths", type=str, default=None, help="comma-separated channel widths")
@click.option("--collection-size", type=int, default=100, show_default=True)
@click.option("--collection-seed", type=int, default=None)
@click.option("--lut-dir", type=click.Path(), default=None)
@click.option("--init-from", type=click.Path(), default=None,
              help="warm-start checkpoint for finetuning")
@click.option("--seed", type=int, default=None)
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--loss-csv", type=click.Path(), default=None)
@click.pass_context
def cmd_train_augmentor(ctx, manifest, epochs, lr, d_z, num_basis, d_f, lut_size,
                        encoder_size, batch_size, widths, collection_size,
                        collection_seed, lut_dir, init_from, seed, out_path, loss_csv):
    """Train (or finetune) the LUT augmentation network."""
    cfg = ctx.obj["cfg"]
    sec = "augmentor"
    seed = _seed_of(ctx, seed)
    init_model = load_augmentor(init_from) if init_from else None
    if init_model is not None:
        base = init_model.config
    else:
        base = AugmentorConfig()
    w = tuple(int(x) for x in widths.split(",")) if widths else base.widths
    config = AugmentorConfig(
        d_z=_resolve(d_z, cfg, sec, "d_z", base.d_z, int),
        n_basis=_resolve(num_basis, cfg, sec, "num_basis", base.n_basis, int),
        d_f=_resolve(d_f, cfg, sec, "d_f", base.d_f, int),
        lut_size=_resolve(lut_size, cfg, sec, "lut_size", base.lut_size, int),
        encoder_size=_resolve(encoder_size, cfg, sec, "encoder_size",
                              base.encoder_size, int),
        widths=w,
        lr=_resolve(lr, cfg, sec, "lr", base.lr, float),
        batch_size=_resolve(batch_size, cfg, sec, "batch_size", base.batch_size, int),
        epochs=_resolve(epochs, cfg, sec, "epochs", base.epochs, int),
        seed=seed,
    )
    pairs = load_dataset(load_manifest(manifest))
    basis = None
    if init_model is None and lut_dir:
        cseed = collection_seed if collection_seed is not None else seed
        collection = load_collection_from_dir(lut_dir)
        basis = init_basis(collection, config.n_basis, KMeansConfig(seed=cseed))
    _info(f"training augmentor on {len(pairs)} pairs for {config.epochs} epochs")
    model, history = train_augmentor(
        pairs, config, basis=basis, init_from=init_model,
        collection_size=collection_size, collection_seed=collection_seed,
    )
    save_augmentor(out_path, model)
    if loss_csv:
        _write_loss_csv(loss_csv, history, ["epoch", "total", "rec", "kl"])
    _info(f"saved checkpoint to {out_path}")


@cli.command("augment")
@click.option("--manifest", type=click.Path(), required=True)
@click.option("--ckpt", type=click.Path(), required=True)
@click.option("--k", type=int, default=1, show_default=True,
              help="samples per pair (dynamic-style sampling)")
@click.option("--static", "static_mode", is_flag=True, default=False,
              help="materialize a static set of a*N pairs")
@click.option("--a", "static_a", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--out-dir", type=click.Path(), required=True)
@click.pass_context
def cmd_augment(ctx, manifest, ckpt, k, static_mode, static_a, seed, out_dir):
    """Generate augmented composites and write them with a manifest."""
    seed = _seed_of(ctx, seed)
    model = load_augmentor(ckpt)
    pairs = load_dataset(load_manifest(manifest))
    if static_mode:
        if static_a is None or static_a < 1:
            raise click.UsageError("--static requires --a >= 1")
        per_pair = static_a
    else:
        if k < 1:
            raise click.UsageError("--k must be >= 1")
        per_pair = k
    cfg = AugTrainConfig(mode="static", static_a=per_pair, seed=seed)
    augmented = materialize_static_set(model, pairs, per_pair, cfg)
    out_manifest = write_augmented_set(augmented, out_dir)
    _info(f"wrote {len(out_manifest)} augmented pairs to {out_dir}")


@cli.command("train-harmonizer")
@click.option("--manifest", type=click.Path(), required=True)
@click.option("--aug-mode", type=click.Choice(["none", "dynamic", "static", "aug-only"]),
              default="none", show_default=True)
@click.option("--augmentor-ckpt", type=click.Path(), default=None)
@click.option("--a", "static_a", type=int, default=None)
@click.option("--sweep-a", type=str, default=None,
              help="comma-separated static multipliers; runs one static "
                   "training per value and reports held-out fMSE")
@click.option("--eval-manifest", type=click.Path(), default=None)
@click.option("--epochs", type=int, default=None)
@click.option("--lr", type=float, default=None)
@click.option("--batch-size", type=int, default=None)
@click.option("--encoder-size", type=int, default=64, show_default=True)
@click.option("--seed", type=int, default=None)
@click.option("--out", "out_path", type=click.Path(), default=None)
@click.option("--loss-csv", type=click.Path(), default=None)
@click.option("--static-out-dir", type=click.Path(), default=None,
              help="where to materialize the static augmented set")
@click.pass_context
def cmd_train_harmonizer(ctx, manifest, aug_mode, augmentor_ckpt, static_a, sweep_a,
                         eval_manifest, epochs, lr, batch_size, encoder_size, seed,
                         out_path, loss_csv, static_out_dir):
    """Train the toy harmonizer with/without learnable augmentation."""
    cfg = ctx.obj["cfg"]
    sec = "harmonizer"
    seed = _seed_of(ctx, seed)
    needs_aug = aug_mode != "none" or sweep_a is not None
    if needs_aug and not augmentor_ckpt:
        raise click.UsageError(f"--aug-mode {aug_mode} requires --augmentor-ckpt")
    if aug_mode == "none" and augmentor_ckpt and not sweep_a:
        _info("warning: --augmentor-ckpt is ignored with --aug-mode none")
    augmentor = load_augmentor(augmentor_ckpt) if needs_aug and augmentor_ckpt else None
    pairs = load_dataset(load_manifest(manifest))
    train_cfg = AugTrainConfig(
        mode="static" if sweep_a else aug_mode,
        static_a=static_a if (aug_mode == "static" or sweep_a) else None,
        epochs=_resolve(epochs, cfg, sec, "epochs", 50, int),
        batch_size=_resolve(batch_size, cfg, sec, "batch_size", 4, int),
        seed=seed,
        lr=_resolve(lr, cfg, sec, "lr", 1e-3, float),
    ) if not sweep_a else AugTrainConfig(
        mode="static", static_a=1,
        epochs=_resolve(epochs, cfg, sec, "epochs", 50, int),
        batch_size=_resolve(batch_size, cfg, sec, "batch_size", 4, int),
        seed=seed,
        lr=_resolve(lr, cfg, sec, "lr", 1e-3, float),
    )

    if sweep_a:
        if not eval_manifest:
            raise click.UsageError("--sweep-a requires --eval-manifest")
        a_values = [int(x) for x in sweep_a.split(",")]
        eval_pairs = load_dataset(load_manifest(eval_manifest))
        rows = sweep_static_a(
            lambda: AffineHarmonizer(encoder_size=encoder_size, seed=seed),
            augmentor, pairs, train_cfg, a_values, eval_pairs,
        )
        if loss_csv:
            _write_loss_csv(loss_csv, rows, ["a", "n_augmented", "fmse"])
        for r in rows:
            _info(f"a={r['a']}: n_augmented={r['n_augmented']} fmse={r['fmse']:.4f}")
        return

    harmonizer = AffineHarmonizer(encoder_size=encoder_size, seed=seed)
    if aug_mode == "none":
        history = train_plain(harmonizer, pairs, train_cfg)
    elif aug_mode == "dynamic":
        history = train_dynamic(harmonizer, augmentor, pairs, train_cfg)
    elif aug_mode == "aug-only":
        history = train_augmented_only(harmonizer, augmentor, pairs, train_cfg)
    else:
        if train_cfg.static_a is None:
            raise click.UsageError("--aug-mode static requires --a")
        augmented, history = train_static(harmonizer, augmentor, pairs, train_cfg)
        if static_out_dir:
            write_augmented_set(augmented, static_out_dir)
    if out_path:
        save_harmonizer(out_path, harmonizer)
    if loss_csv:
        _write_loss_csv(loss_csv, history, ["epoch", "orig", "aug", "total"])
    if eval_manifest:
        eval_pairs = load_dataset(load_manifest(eval_manifest))
        _info(f"held-out fMSE: {held_out_fmse(harmonizer, eval_pairs):.4f}")
    _info("harmonizer training done")


@cli.command("evaluate")
@click.option("--manifest", type=click.Path(), required=True)
@click.option("--harmonizer-ckpt", type=click.Path(), default=None,
              help="harmonize composites before scoring; otherwise scores "
                   "the raw composites")
@click.option("--out-csv", type=click.Path(), required=True)
@click.option("--out-json", type=click.Path(), default=None)
def cmd_evaluate(manifest, harmonizer_ckpt, out_csv, out_json):
    """Score predictions against real images (MSE/fMSE/fSSIM)."""
    pairs = load_dataset(load_manifest(manifest))
    harmonizer = load_harmonizer(harmonizer_ckpt) if harmonizer_ckpt else None
    triples = []
    ids = []
    for p in pairs:
        pred = harmonizer.forward(p.composite, p.mask) if harmonizer else p.composite
        triples.append((pred, p.real, p.mask))
        ids.append(Path(p.composite_path).stem if p.composite_path else p.domain or "")
    report = evaluate_images(triples)
    with open(out_csv, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["image_id", "mse", "fmse", "fssim"])
        for i, image_id in enumerate(ids):
            w.writerow([
                image_id,
                f"{report.mse_values[i]:.12g}",
                f"{report.fmse_values[i]:.12g}",
                f"{report.fssim_values[i]:.12g}",
            ])
    summary = {"mse": report.mse, "fmse": report.fmse, "fssim": report.fssim,
               "n_images": len(ids)}
    if out_json:
        Path(out_json).write_text(json.dumps(summary, sort_keys=True, indent=2) + "\n")
    _info(f"evaluated {len(ids)} images: " + json.dumps(summary, sort_keys=True))


@cli.command("bt-rank")
@click.option("--wins", "wins_csv", type=click.Path(), required=True,
              help="CSV of winner_id,loser_id,count rows")
@click.option("--out", "out_path", type=click.Path(), required=True)
def cmd_bt_rank(wins_csv, out_path):
    """Bradley-Terry global ranking from pairwise win counts."""
    if not Path(wins_csv).exists():
        raise click.UsageError(f"wins file not found: {wins_csv}")
    ids = []
    rows = []
    with open(wins_csv, newline="") as f:
        reader = csv.reader(f)
        for lineno, row in enumerate(reader, start=1):
            if not row or row[0].strip().lower() == "winner_id":
                continue
            if len(row) != 3:
                raise click.UsageError(
                    f"{wins_csv}:{lineno}: expected winner_id,loser_id,count"
                )
            try:
                count = int(row[2])
            except ValueError:
                raise click.UsageError(f"{wins_csv}:{lineno}: non-integer count")
            rows.append((row[0].strip(), row[1].strip(), count))
            ids.extend([row[0].strip(), row[1].strip()])
    ids = sorted(set(ids))
    index = {m: i for i, m in enumerate(ids)}
    wins = np.zeros((len(ids), len(ids)))
    for winner, loser, count in rows:
        wins[index[winner], index[loser]] += count
    scores = bt_rank(wins)
    Path(out_path).write_text(
        json.dumps({m: scores[index[m]] for m in ids}, sort_keys=True, indent=2) + "\n"
    )
    _info(f"ranked {len(ids)} models -> {out_path}")


@cli.command("gradcheck")
@click.option("--h", "step", type=float, default=1e-5, show_default=True)
@click.option("--seed", type=int, default=None)
@click.option("--pairs", "n_pairs", type=int, default=2, show_default=True)
@click.option("--image-size", type=int, default=16, show_default=True)
@click.option("--lut-size", type=int, default=5, show_default=True)
@click.option("--tolerance", type=float, default=1e-4, show_default=True)
@click.option("--corrupt", is_flag=True, default=False, hidden=True,
              help="test hook: corrupt one analytic gradient block")
@click.option("--out", "out_path", type=click.Path(), default=None)
@click.pass_context
def cmd_gradcheck(ctx, step, seed, n_pairs, image_size, lut_size, tolerance,
                  corrupt, out_path):
    """Finite-difference check of the full training loss on a tiny batch."""
    seed = _seed_of(ctx, seed)
    config = AugmentorConfig(
        d_z=3, n_basis=3, d_f=8, lut_size=lut_size, encoder_size=image_size,
        widths=(4, 8, 8, 8), seed=seed,
    )
    pairs = make_toy_dataset(n_pairs, size=image_size, seed=seed)
    model = Augmentor.create(config)
    eps = np.random.Generator(
        np.random.Philox(np.random.SeedSequence([seed, 0xE5]))
    ).standard_normal((n_pairs, config.d_z))

    def loss_fn(params):
        terms, _ = Augmentor(config, params).loss_and_grads(pairs, eps)
        return terms.total

    def grad_fn(params):
        _, grads = Augmentor(config, params).loss_and_grads(pairs, eps)
        if corrupt:
            grads["head.w"] = grads["head.w"] + 1.0
        return grads

    report = nn.grad_check(loss_fn, grad_fn, model.params, h=step)
    ok = all(v < tolerance for v in report.values())
    payload = {"h": step, "tolerance": tolerance, "max_rel_error": report,
               "pass": ok}
    if out_path:
        Path(out_path).write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    for name in sorted(report):
        status = "ok" if report[name] < tolerance else "FAIL"
        _info(f"{status:4s} {name}: {report[name]:.3e}")
    if not ok:
        raise click.ClickException("gradient check failed")
    _info("all parameter blocks passed")


def main(argv=None):
    try:
        cli.main(args=argv, standalone_mode=False, obj={})
    except click.UsageError as exc:
        click.echo(f"error: {exc.format_message()}", err=True)
        sys.exit(2)
    except click.exceptions.Exit as exc:
        sys.exit(exc.exit_code)
    except click.ClickException as exc:
        click.echo(f"error: {exc.format_message()}", err=True)
        sys.exit(1)
    except click.exceptions.Abort:
        sys.exit(1)
    except NonIdentifiableError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(3)
    except ManifestError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    sys.exit(0)


if __name__ == "__main__":
    main()
