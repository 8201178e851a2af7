"""Command-line front end: `upsample`, `restore` (re-hallucinate a degraded
photo through a downsample/upsample round trip), and `bt-rank` (fit pairwise
preference counts).

Exit codes: 0 success, 1 usage error, 2 no usable samples, 3 pipeline
failure."""

import csv
import dataclasses
import logging
import sys

import click
import numpy as np

from .config import HallucinationConfig
from .errors import HallucinateError, NoSamplesError
from .evaluation import bt_scores
from .imgcore import downsample, load_image, resample_bilinear, save_image
from .pipeline import hallucinate
from .samples import load_local_samples, load_manifest_samples

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NO_SAMPLES = 2
EXIT_PIPELINE = 3


def _config_options(fn):
    opts = [
        click.option("--seed", type=int, default=0, show_default=True,
                     help="Random seed for the search."),
        click.option("--workers", type=int, default=0, show_default=True,
                     help="Worker thread cap (0 = hardware parallelism)."),
        click.option("--patch-size", type=int, default=32, show_default=True),
        click.option("--lambda", "lam", type=float, default=5.0,
                     show_default=True,
                     help="Gradient weight in the patch distance."),
        click.option("--alpha-coh", type=float, default=0.0005,
                     show_default=True, help="Coherence weight in merging."),
        click.option("--alpha-con", type=float, default=0.05,
                     show_default=True,
                     help="Contribution weight in merging."),
        click.option("--search-radius", type=int, default=10,
                     show_default=True,
                     help="Random-search radius (0 = whole image)."),
        click.option("--m", type=int, default=8, show_default=True,
                     help="Maximum number of sample images."),
        click.option("--dump-intermediate", type=click.Path(), default="",
                     help="Directory for per-scale intermediate images."),
        click.option("--dump-nnf", type=click.Path(), default="",
                     help="Directory for per-scale correspondence dumps."),
        click.option("--log-csv", type=click.Path(), default="",
                     help="Write per-iteration diagnostics to this CSV."),
        click.option("--print-config", is_flag=True,
                     help="Print the resolved configuration before running."),
        click.option("--verbose", "-v", is_flag=True,
                     help="Log per-iteration progress."),
    ]
    for opt in reversed(opts):
        fn = opt(fn)
    return fn


def _build_config(seed, workers, patch_size, lam, alpha_coh, alpha_con,
                  search_radius, dump_intermediate, dump_nnf, log_csv,
                  print_config, verbose):
    cfg = HallucinationConfig(
        patch_size=patch_size, lam=lam, alpha_coh=alpha_coh,
        alpha_con=alpha_con, search_radius=search_radius, seed=seed,
        workers=workers, dump_intermediate=dump_intermediate,
        dump_nnf=dump_nnf, log_csv=log_csv)
    if verbose:
        logging.basicConfig(level=logging.INFO,
                            format="%(asctime)s %(message)s")
    if workers > 0:
        import numba
        numba.set_num_threads(max(1, min(workers,
                                         numba.config.NUMBA_NUM_THREADS)))
    if print_config:
        for f in dataclasses.fields(cfg):
            click.echo(f"{f.name}={getattr(cfg, f.name)}")
    return cfg


def _load_samples(samples_dir, manifest, base, m):
    if (samples_dir is None) == (manifest is None):
        raise click.UsageError("give exactly one of --samples or --manifest")
    if samples_dir is not None:
        return load_local_samples(samples_dir, base, m_max=m)
    return load_manifest_samples(manifest, base=base, m_max=m)


@click.group()
def cli():
    """Patch-based image upsampling using detail from sample images."""


@cli.command()
@click.option("--input", "input_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Low-resolution input image.")
@click.option("--scale", required=True, type=float,
              help="Magnification factor (> 1).")
@click.option("--samples", "samples_dir",
              type=click.Path(exists=True, file_okay=False),
              help="Directory of sample images.")
@click.option("--manifest", type=click.Path(exists=True, dir_okay=False),
              help="JSON manifest of sample images.")
@click.option("--out", required=True, type=click.Path(dir_okay=False),
              help="Output PNG path.")
@_config_options
def upsample(input_path, scale, samples_dir, manifest, out, m, **cfg_kwargs):
    """Upsample an image by a large factor."""
    if scale <= 1.0:
        raise click.UsageError("--scale must be greater than 1")
    cfg = _build_config(**cfg_kwargs)
    base = load_image(input_path)
    samples = _load_samples(samples_dir, manifest, base, m)
    result = hallucinate(base, samples, scale, cfg)
    save_image(out, result)
    click.echo(f"wrote {out} ({result.shape[1]}x{result.shape[0]})")


@cli.command()
@click.option("--input", "input_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Degraded input image.")
@click.option("--shrink", required=True, type=float,
              help="Downsample factor applied before re-upsampling (> 1).")
@click.option("--samples", "samples_dir",
              type=click.Path(exists=True, file_okay=False),
              help="Directory of clean sample images.")
@click.option("--manifest", type=click.Path(exists=True, dir_okay=False),
              help="JSON manifest of sample images.")
@click.option("--out", required=True, type=click.Path(dir_okay=False),
              help="Output PNG path.")
@_config_options
def restore(input_path, shrink, samples_dir, manifest, out, m, **cfg_kwargs):
    """Restore a noisy or blurred image by shrinking it (discarding the
    corruption along with the detail) and hallucinating the detail back."""
    if shrink <= 1.0:
        raise click.UsageError("--shrink must be greater than 1")
    cfg = _build_config(**cfg_kwargs)
    degraded = load_image(input_path)
    small = downsample(degraded, shrink)
    samples = _load_samples(samples_dir, manifest, small, m)
    result = hallucinate(small, samples, shrink, cfg)
    h, w = degraded.shape[:2]
    if result.shape[:2] != (h, w):
        result = np.clip(resample_bilinear(result, w, h), 0.0, 255.0)
    save_image(out, result)
    click.echo(f"wrote {out} ({w}x{h})")


@cli.command("bt-rank")
@click.option("--input", "input_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="CSV of winner,loser,count rows.")
@click.option("--out", type=click.Path(dir_okay=False),
              help="Output CSV of method,score rows (default: stdout).")
@click.option("--baseline", default=None,
              help="Method pinned to score 0 (default: first listed).")
def bt_rank(input_path, out, baseline):
    """Fit Bradley-Terry scores to pairwise preference counts."""
    names = []
    index = {}
    rows = []
    with open(input_path, newline="") as f:
        for row in csv.reader(f):
            if not row or row[0].strip().lower() == "winner":
                continue
            winner, loser, count = row[0].strip(), row[1].strip(), float(row[2])
            for name in (winner, loser):
                if name not in index:
                    index[name] = len(names)
                    names.append(name)
            rows.append((winner, loser, count))
    if not rows:
        raise click.UsageError("no comparison rows in input CSV")
    counts = np.zeros((len(names), len(names)))
    for winner, loser, count in rows:
        counts[index[winner], index[loser]] += count
    if baseline is None:
        baseline = names[0]
    if baseline not in index:
        raise click.UsageError(f"baseline {baseline!r} not among methods")
    try:
        scores = bt_scores(counts, baseline=index[baseline])
    except ValueError as e:
        raise click.ClickException(str(e))
    lines = [["method", "score"]] + [
        [name, f"{scores[index[name]]:.6f}"]
        for name in sorted(names, key=lambda n: -scores[index[n]])]
    if out:
        with open(out, "w", newline="") as f:
            csv.writer(f).writerows(lines)
        click.echo(f"wrote {out}")
    else:
        for line in lines:
            click.echo(",".join(line))


def main(argv=None):
    try:
        return cli.main(args=argv, standalone_mode=False) or EXIT_OK
    except click.UsageError as e:
        e.show(file=sys.stderr)
        return EXIT_USAGE
    except click.exceptions.Exit as e:
        return e.exit_code
    except click.Abort:
        return EXIT_USAGE
    except NoSamplesError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NO_SAMPLES
    except (HallucinateError, click.ClickException, OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_PIPELINE


if __name__ == "__main__":
    sys.exit(main())
