#!/usr/bin/python3
#
# cli.py:
#
#  The sgl command: dataset generation, harmonics, filtering,
#  cross-validation and the benchmark experiments.  Tables go out as
#  CSV (stdout unless --output is given), and every run leaves a JSON
#  manifest next to its first output.

import click
import functools
import logging
import os
import sys
import time

import colorama
import numpy as np

from . import __version__
from . import dataset
from . import kernel
from . import harmonics
from . import laplacian
from . import filtering
from . import xval
from .output import *
from .tools.options import *
from .tools.output import RunManifest, safe_redirect_stdout

def status(options, text, colour = colorama.Fore.GREEN):
    if options.colour:
        text = colour + text + colorama.Style.RESET_ALL
    print(text, file = sys.stderr)

def reports_errors(command):
    """
    Run a command body, turning library failures into an error line on
    stderr and the failure's exit code.
    """

    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        ctx = click.get_current_context()
        try:
            return command(*args, **kwargs)
        except SteerableError as e:
            status(ctx.obj, f"{os.path.basename(sys.argv[0])}: Error: {e.message}",
                   colour = colorama.Fore.RED)
            sys.exit(e.exit_code)

    return wrapper

def write_manifest(ctx, started, config, seeds = None, inputs = (), outputs = ()):
    manifest = RunManifest(command = ctx.info_name,
                           config = config,
                           seeds = seeds or {},
                           inputs = [path for path in inputs if path],
                           outputs = list(outputs) or ["-"],
                           wall_clock = time.time() - started,
                           version = __version__)
    path = manifest.write()
    if path:
        logging.debug(f"Wrote run manifest {path}")

def kernel_options(command):
    """The shared kernel flags."""
    options = [
        click.option("--epsilon", type = float, default = None,
                     help = "Gaussian kernel width epsilon"),
        click.option("--K", "K", type = int, default = 256, show_default = True,
                     help = "Angular quadrature size"),
        click.option("--debias/--no-debias", default = False, show_default = True,
                     help = "Zero the self-affinities (implicit debiasing)"),
        click.option("--density-normalize", is_flag = True, default = False,
                     help = "Apply density normalization to the blocks"),
        click.option("--sparsify", type = float, default = None,
                     help = "Zero affinities below this value"),
        click.option("--max-frequency", type = int, default = None,
                     help = "Largest |m| of the harmonics (default: the data's M)"),
    ]
    for option in reversed(options):
        command = option(command)
    return command

def make_kernel_config(epsilon, K, debias, density_normalize, sparsify, max_frequency):
    if epsilon is None:
        raise ConfigError("--epsilon is required to build a kernel")
    return kernel.KernelConfig(epsilon, K, debias, density_normalize,
                               sparsify, max_frequency)

# Top level CLI group for options common across the subcommands

@click.group()

@click.option("-d", "--debug", is_flag = True, default = False,
              help = "Enable logging in DEBUG.log")
@click.option("-c", "--colour/--nocolour", is_flag = True,
              default = None,
              help = "Colourise status lines (default is True " + \
              "if stderr is a tty)")
@click.option("--threads", type = int, envvar = "SGL_THREADS", default = None,
              help = "Worker threads for the kernel and eigen-solves " + \
              "(default: $SGL_THREADS, else 1)")
@click.version_option(__version__)

@click.pass_context
def sgl(ctx, debug, colour, threads):
    options = ctx.ensure_object(Options)
    options.debug = debug
    options.threads = threads
    options.colour = sys.stderr.isatty() if colour is None else colour

    colorama.init()

    if debug:
        logging.basicConfig(filename = "DEBUG.log", level = logging.DEBUG)
        logging.debug("Started new run.")

# "gen" subcommand

@sgl.command("gen")
@click.argument("kind", type = click.Choice(["sphere", "polar"]))
@click.option("-N", "--N", "N", type = int, required = True,
              help = "Number of points")
@click.option("--seed", type = int, default = None, help = "Random seed")
@click.option("--n-rings", type = int, default = 8, show_default = True,
              help = "Polar grid: number of rings")
@click.option("--n-angles", type = int, default = 33, show_default = True,
              help = "Polar grid: angles per ring")
@click.option("--M", "M", type = int, default = None,
              help = "Polar grid: angular band limit (default (n_angles-1)/2)")
@click.option("-o", "--output", type = click.Path(), required = True,
              help = "SGL1 file to write")
@click.pass_context
@reports_errors

def gen_cli(ctx, kind, N, seed, n_rings, n_angles, M, output):
    started = time.time()

    if kind == "sphere":
        ds = dataset.gen_sphere(N, seed)
        config = {"kind": kind, "N": N}
    else:
        ds = dataset.gen_polar_orbit(N, n_rings, n_angles, M, seed)
        config = {"kind": kind, "N": N, "n_rings": n_rings,
                  "n_angles": n_angles, "M": ds.M}

    dataset.save(output, ds)
    status(ctx.obj, f"Wrote {ds!r} to {output}")
    write_manifest(ctx, started, config, {"seed": seed}, outputs = [output])

# "noise" subcommand

@sgl.command("noise")
@click.argument("input", type = click.Path(exists = True, dir_okay = False))
@click.option("--sigma2", type = float, default = None,
              help = "Noise variance per coordinate")
@click.option("--gamma", type = float, default = None,
              help = "Total noise magnitude D * sigma2 (alternative to --sigma2)")
@click.option("--embed", "embed_D", type = int, default = None,
              help = "First embed orthogonally into this dimension")
@click.option("--seed", type = int, default = None, help = "Random seed")
@click.option("-o", "--output", type = click.Path(), required = True,
              help = "SGL1 file to write")
@click.pass_context
@reports_errors

def noise_cli(ctx, input, sigma2, gamma, embed_D, seed, output):
    started = time.time()

    if (sigma2 is None) == (gamma is None):
        raise ConfigError("give exactly one of --sigma2 and --gamma")

    ds = dataset.load(input)
    rng = np.random.default_rng(seed)
    if embed_D is not None:
        ds = dataset.embed_orthogonal(ds, embed_D, seed = rng)

    spec = (dataset.NoiseSpec(sigma2, rng) if gamma is None
            else dataset.NoiseSpec.from_gamma(gamma, ds.D_total, rng))
    noisy = dataset.add_noise(ds, spec)

    dataset.save(output, noisy)

    status(ctx.obj, f"Added noise sigma2={spec.sigma2:.4g} "
           f"(gamma={spec.gamma(ds.D_total):.4g}) to {ds.N} points")
    write_manifest(ctx, started,
                   {"sigma2": spec.sigma2, "embed": embed_D, "D": ds.D_total},
                   {"seed": seed}, [input], [output])

# "export-csv" subcommand

@sgl.command("export-csv")
@click.argument("input", type = click.Path(exists = True, dir_okay = False))
@click.option("-o", "--output", type = click.Path(), default = None,
              help = "CSV file to write (default is stdout)")
@click.pass_context
@reports_errors

def export_csv_cli(ctx, input, output):
    started = time.time()
    ds = dataset.load(input)

    with safe_redirect_stdout([input], output):
        dataset.write_csv(sys.stdout, ds)

    write_manifest(ctx, started, {}, inputs = [input], outputs = [output or "-"])

# "harmonics" subcommand

@sgl.command("harmonics")
@click.argument("input", type = click.Path(exists = True, dir_okay = False))
@kernel_options
@click.option("--unnormalized", is_flag = True, default = False,
              help = "Decompose D - W instead of I - D^-1 W")
@click.option("--basis", type = click.Path(), default = None,
              help = "Also save the harmonics as an SGH1 basis file")
@click.option("--affinity", type = click.Path(), default = None,
              help = "Also save the Fourier blocks as an SGA1 file")
@click.option("-o", "--output", type = click.Path(), default = None,
              help = "Spectrum CSV file to write (default is stdout)")
@click.pass_context
@reports_errors

def harmonics_cli(ctx, input, epsilon, K, debias, density_normalize, sparsify,
                  max_frequency, unnormalized, basis, affinity, output):
    started = time.time()
    options = ctx.obj

    ds = dataset.load(input)
    config = make_kernel_config(epsilon, K, debias, density_normalize,
                                sparsify, max_frequency)

    fa = kernel.fourier_blocks(ds, config, options.worker_count())
    result = harmonics.decompose(fa, normalized = not unnormalized,
                                 workers = options.worker_count())

    if affinity:
        kernel.save_affinity(affinity, fa)
    if basis:
        harmonics.save_basis(basis, result)

    with safe_redirect_stdout([input], output):
        harmonics.write_spectrum_csv(sys.stdout, result)

    status(options, f"Decomposed {result.N} points over |m| <= {result.M}")
    write_manifest(ctx, started,
                   {"kernel": vars(config), "normalized": not unnormalized},
                   inputs = [input],
                   outputs = [output or "-"] + [p for p in (basis, affinity) if p])

# "filter" subcommand

@sgl.command("filter")
@click.argument("input", type = click.Path(exists = True, dir_okay = False))
@kernel_options
@click.option("--lambda-c", "lambda_c", type = float, required = True,
              help = "Cutoff: keep harmonics with eigenvalue below this")
@click.option("--basis", type = click.Path(exists = True, dir_okay = False),
              default = None,
              help = "Use the harmonics of an SGH1 basis file " + \
              "instead of building them from INPUT")
@click.option("--diagnostics", type = click.Path(), default = None,
              help = "Per-m diagnostics CSV file")
@click.option("-o", "--output", type = click.Path(), required = True,
              help = "Filtered SGL1 file to write")
@click.pass_context
@reports_errors

def filter_cli(ctx, input, epsilon, K, debias, density_normalize, sparsify,
               max_frequency, lambda_c, basis, diagnostics, output):
    started = time.time()
    options = ctx.obj

    ds = dataset.load(input)
    if basis:
        result_basis = harmonics.load_basis(basis)
        config = {"basis": basis}
    else:
        kernel_config = make_kernel_config(epsilon, K, debias, density_normalize,
                                           sparsify, max_frequency)
        fa = kernel.fourier_blocks(ds, kernel_config, options.worker_count())
        result_basis = harmonics.decompose(fa, workers = options.worker_count())
        config = {"kernel": vars(kernel_config)}
    config["lambda_c"] = lambda_c

    result = filtering.filter_dataset(ds, result_basis, lambda_c)

    dataset.save(output, result.X_hat)

    if diagnostics:
        with safe_redirect_stdout([input, basis], diagnostics):
            DiagnosticsOutputDriver(sys.stdout).emit_all(result.records())

    status(options, f"Filtered {ds.N} points, k_m = "
           f"{[result.plan.k_of(m) for m in ds.layout.angular_indices]}")
    write_manifest(ctx, started, config, inputs = [input, basis],
                   outputs = [output] + ([diagnostics] if diagnostics else []))

# "bench-convergence" subcommand

@sgl.command("bench-convergence")
@click.option("-N", "--N", "N", type = int, default = 2000, show_default = True)
@click.option("--K", "K", type = int, default = 256, show_default = True)
@click.option("--trials", type = int, default = 20, show_default = True)
@click.option("--log2-eps", "log2_eps", type = (float, float, float),
              default = (-4.0, 2.0, 0.25), show_default = True,
              help = "Epsilon grid as log2 start, stop, step")
@click.option("--seed", type = int, default = None, help = "Random seed")
@click.option("-o", "--output", type = click.Path(), default = None,
              help = "CSV file to write (default is stdout)")
@click.pass_context
@reports_errors

def bench_convergence_cli(ctx, N, K, trials, log2_eps, seed, output):
    started = time.time()
    options = ctx.obj

    start, stop, step = log2_eps
    if not step > 0:
        raise ConfigError("--log2-eps step must be positive")
    eps_grid = 2.0 ** np.arange(start, stop + step / 100, step)

    report = laplacian.convergence_experiment(N, K, eps_grid, trials, seed,
                                              options.worker_count())

    with safe_redirect_stdout([], output):
        ConvergenceOutputDriver(sys.stdout).emit_all(report.records())

    status(options, f"Variance-region slopes: steerable {report.slope_steerable:.3f} "
           f"(first {report.region_steerable} epsilon values), "
           f"standard {report.slope_standard:.3f} "
           f"(first {report.region_standard})")
    write_manifest(ctx, started,
                   {"N": N, "K": K, "trials": trials, "eps_grid": eps_grid,
                    "slope_steerable": report.slope_steerable,
                    "slope_standard": report.slope_standard,
                    "region_steerable": report.region_steerable,
                    "region_standard": report.region_standard},
                   {"seed": seed}, outputs = [output or "-"])

# "bench-noise" subcommand

@sgl.command("bench-noise")
@click.option("-N", "--N", "N", type = int, default = 2000, show_default = True)
@click.option("--gamma", type = float, required = True,
              help = "Total noise magnitude D * sigma2 (1/SNR)")
@click.option("-D", "--D", "D_grid", type = int, multiple = True,
              default = (10, 100, 1000), show_default = True,
              help = "Ambient dimension (repeat for a grid)")
@click.option("--epsilon", type = float, default = 2 ** -0.75, show_default = True)
@click.option("--K", "K", type = int, default = 256, show_default = True)
@click.option("--trials", type = int, default = 1, show_default = True)
@click.option("--seed", type = int, default = None, help = "Random seed")
@click.option("-o", "--output", type = click.Path(), default = None,
              help = "CSV file to write (default is stdout)")
@click.pass_context
@reports_errors

def bench_noise_cli(ctx, N, gamma, D_grid, epsilon, K, trials, seed, output):
    started = time.time()
    options = ctx.obj

    records = laplacian.noise_robustness_experiment(N, gamma, D_grid, epsilon, K,
                                                    seed, trials,
                                                    options.worker_count())

    with safe_redirect_stdout([], output):
        NoiseOutputDriver(sys.stdout).emit_all(records)

    write_manifest(ctx, started,
                   {"N": N, "gamma": gamma, "D": list(D_grid), "epsilon": epsilon,
                    "K": K, "trials": trials},
                   {"seed": seed}, outputs = [output or "-"])

# "xval" subcommand

@sgl.command("xval")
@click.argument("input", type = click.Path(exists = True, dir_okay = False))
@click.option("--sigma2", type = float, required = True,
              help = "Noise variance per coordinate")
@click.option("--epsilon", "eps_grid", type = float, multiple = True,
              help = "Candidate epsilon (repeat; default: rule of thumb x 2^-2..2^2)")
@click.option("--lambda-c", "lambda_grid", type = float, multiple = True,
              required = True, help = "Candidate cutoff (repeat)")
@click.option("--K", "K", type = int, default = 256, show_default = True)
@click.option("--split-fraction", type = float, default = 0.8, show_default = True)
@click.option("--max-frequency", type = int, default = None)
@click.option("--seed", type = int, default = None, help = "Random seed for the split")
@click.option("-o", "--output", type = click.Path(), default = None,
              help = "CSV file to write (default is stdout)")
@click.pass_context
@reports_errors

def xval_cli(ctx, input, sigma2, eps_grid, lambda_grid, K, split_fraction,
             max_frequency, seed, output):
    started = time.time()
    options = ctx.obj

    ds = dataset.load(input)
    if not eps_grid:
        centre = xval.eps_rule_of_thumb(ds.D_total, sigma2)
        eps_grid = tuple(centre * 2.0 ** np.arange(-2, 3))

    config = xval.XvalConfig(eps_grid, lambda_grid, sigma2, K, split_fraction,
                             seed, max_frequency)
    result = xval.grid_search(ds, config, options.worker_count())

    with safe_redirect_stdout([input], output):
        driver = XvalOutputDriver(sys.stdout)
        driver.emit_all(result.records())
        driver.emit_argmax(result.eps_opt, result.lambda_opt, result.J_opt)

    status(options, f"Selected epsilon={result.eps_opt:.4g}, "
           f"lambda_c={result.lambda_opt:.4g}")
    write_manifest(ctx, started, vars(config), {"seed": seed},
                   [input], [output or "-"])

# Provide this as a callable hook for setup.py consolescripts

def sgl_cli():
    sgl(obj = Options())

if __name__ == "__main__":
    sgl_cli()
