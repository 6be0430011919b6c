import argparse
import csv
import itertools
import logging
import statistics
import sys
from pathlib import Path

from crowdem.batch_em import em_fit, mv_posterior, predict
from crowdem.config import EMConfig, OnlineConfig, default_threads
from crowdem.estep import posterior_all
from crowdem.errors import (
    CrowdEMError,
    DataFormatError,
    DegenerateWorkerError,
    InvariantError,
    OracleSizeError,
    ScheduleError,
)
from crowdem.metrics import (
    batch_statistic,
    error_rate,
    fixed_point_residual,
    format_error_rate,
    marginal_log_likelihood,
    stationarity_gap,
)
from crowdem.model import (
    PosteriorMatrix,
    load_checkpoint,
    load_ground_truth,
    load_labels,
    save_checkpoint,
    write_predictions,
)
from crowdem.online import Sampling, StepSchedule, init_stats, online_fit
from crowdem.synth import gen_instance, write_instance

logger = logging.getLogger("crowdem.cli")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_DEGENERATE = 4

_EM = EMConfig()
_ONLINE = OnlineConfig()


def _fmt(value):
    """Trace floats keep 17 significant digits; everything else is written as is."""
    if isinstance(value, float):
        return format(value, ".17g")
    return value


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    logger.info("Wrote %s", path)


def _read_labels(path, k=None):
    with open(path, newline="", encoding="utf-8") as f:
        return load_labels(f, declared_k=k)


def _read_truth(path, labels):
    if path is None:
        return None
    with open(path, newline="", encoding="utf-8") as f:
        return load_ground_truth(f, labels)


def _report_error(predicted, truth):
    if truth is not None and len(truth):
        print(f"error_rate={format_error_rate(error_rate(predicted, truth))}")


def _parse_grid(text, cast, name):
    try:
        values = [cast(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise InvariantError(f"{name} must be a comma-separated list of numbers, got '{text}'") from None
    if not values:
        raise InvariantError(f"{name} is empty")
    return values


def _starting_point(labels, mode):
    """Initial statistic and the responsibilities it was built from (for the epoch-0 error)."""
    stats = init_stats(labels, mode)
    start = mv_posterior(labels) if mode == "mv" else PosteriorMatrix.uniform(labels.n, labels.k)
    return stats, start


def cmd_mv(args):
    labels = _read_labels(args.labels, args.k)
    truth = _read_truth(args.truth, labels)
    predicted = predict(mv_posterior(labels))
    if args.out:
        with open(args.out, "w", newline="", encoding="utf-8") as f:
            write_predictions(predicted, labels, f)
    _report_error(predicted, truth)
    return EXIT_OK


def cmd_em(args):
    labels = _read_labels(args.labels, args.k)
    truth = _read_truth(args.truth, labels)
    if args.init == "mv":
        init = mv_posterior(labels)
    else:
        init = PosteriorMatrix.uniform(labels.n, labels.k)
    result = em_fit(
        labels, init, args.max_iter, args.tol,
        smoothing=args.smoothing, truth=truth, threads=args.threads,
    )
    if args.trace:
        scored = truth is not None and len(truth) > 0
        header = ["iter", "loglik"] + (["error_rate"] if scored else [])
        rows = ([step.iteration, step.loglik] + ([step.error_rate] if scored else [])
                for step in result.trajectory)
        _write_csv(args.trace, header, rows)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as f:
            save_checkpoint(result.confusion, f)
    if args.predictions:
        with open(args.predictions, "w", newline="", encoding="utf-8") as f:
            write_predictions(predict(result.posterior), labels, f)
    print(f"loglik={_fmt(result.trajectory[-1].loglik)}")
    _report_error(predict(result.posterior), truth)
    return EXIT_OK


def cmd_online(args):
    schedule = StepSchedule(args.schedule, args.a, args.b)
    labels = _read_labels(args.labels, args.k)
    truth = _read_truth(args.truth, labels)
    stats, start = _starting_point(labels, args.init)
    result = online_fit(
        labels, schedule, args.epochs, args.seed, args.sampling, args.project == "on", stats,
        truth=truth, start_posterior=start, threads=args.threads,
    )
    if args.trace:
        scored = truth is not None and len(truth) > 0
        header = ["epoch"] + (["error_rate"] if scored else []) + ["loglik", "projections"]
        rows = ([record.epoch] + ([record.error_rate] if scored else [])
                + [record.loglik, record.projections]
                for record in result.trajectory)
        _write_csv(args.trace, header, rows)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as f:
            save_checkpoint(result.confusion, f)
    if args.predictions:
        with open(args.predictions, "w", newline="", encoding="utf-8") as f:
            write_predictions(predict(result.posterior), labels, f)
    print(f"loglik={_fmt(result.trajectory[-1].loglik)}")
    print(f"projections={len(result.projection_events)}")
    _report_error(predict(result.posterior), truth)
    return EXIT_OK


def cmd_sweep(args):
    a_grid = _parse_grid(args.a_grid, float, "--a-grid")
    b_grid = _parse_grid(args.b_grid, float, "--b-grid")
    seeds = _parse_grid(args.seeds, int, "--seeds")
    # Reject bad grid cells before any fitting starts.
    cells = [(a, b, StepSchedule(args.schedule, a, b)) for a, b in itertools.product(a_grid, b_grid)]

    labels = _read_labels(args.labels, args.k)
    truth = _read_truth(args.truth, labels)
    if truth is None or not len(truth):
        raise InvariantError("sweep needs ground truth for at least one item")
    stats, _ = _starting_point(labels, args.init)

    rows = []
    best = None
    for a, b, schedule in cells:
        finals = []
        for seed in seeds:
            result = online_fit(
                labels, schedule, args.epochs, seed, args.sampling, args.project == "on", stats,
                threads=args.threads,
            )
            finals.append(error_rate(predict(result.posterior), truth))
        mean = statistics.fmean(finals)
        logger.info("%s a=%g b=%g: mean error %.4f over %d seed(s)", args.schedule, a, b, mean, len(seeds))
        rows.extend([args.schedule, a, b, seed, final, mean] for seed, final in zip(seeds, finals))
        if best is None or mean < best[2]:
            best = (a, b, mean)

    _write_csv(args.out, ["schedule", "a", "b", "seed", "final_error", "mean_error"], rows)
    a, b, mean = best
    print(f"best a={a:g} b={b:g} mean_error={format_error_rate(mean)}")
    return EXIT_OK


def cmd_synth(args):
    instance = gen_instance(args.m, args.n, args.k, args.acc_lo, args.acc_hi, args.labels_per_item, args.seed)
    paths = write_instance(instance, Path(args.out_dir))
    for name in ("labels", "truth", "model"):
        print(f"{name}={paths[name]}")
    return EXIT_OK


def cmd_eval(args):
    with open(args.model, encoding="utf-8") as f:
        c = load_checkpoint(f)
    labels = _read_labels(args.labels, c.k)
    if labels.m != c.m:
        raise DataFormatError(f"model has {c.m} workers, the label file has {labels.m}")
    truth = _read_truth(args.truth, labels)
    residual = fixed_point_residual(batch_statistic(c, labels), labels)
    print(f"loglik={_fmt(marginal_log_likelihood(c, labels))}")
    print(f"residual={_fmt(residual.inf_norm)}")
    print(f"residual_frobenius={_fmt(residual.frobenius)}")
    print(f"stationarity_gap={_fmt(stationarity_gap(c, labels, args.h))}")
    if truth is not None and len(truth):
        _report_error(predict(posterior_all(c, labels, args.threads)), truth)
    return EXIT_OK


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('-v', '--verbose', action='count', default=0,
                        help="Log progress to stderr; repeat for debug output.")
    common.add_argument('--threads', type=int, default=None,
                        help="Worker threads for the E-step (default: $CROWDEM_THREADS or 1).")

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument('--labels', required=True, help="CSV file with 'item,worker,label' rows.")
    data.add_argument('--truth', help="Optional CSV file with 'item,label' rows of true labels.")
    data.add_argument('--k', type=int, help="Number of classes (default: the largest label seen).")

    online = argparse.ArgumentParser(add_help=False)
    online.add_argument('--schedule', choices=['online1', 'online2'], default=_ONLINE.schedule)
    online.add_argument('--epochs', type=int, default=_ONLINE.epochs)
    online.add_argument('--sampling', choices=[s.value for s in Sampling], default=_ONLINE.sampling)
    online.add_argument('--project', choices=['on', 'off'], default="on" if _ONLINE.project else "off",
                        help="Pass every iterate through the projection safeguard.")
    online.add_argument('--init', choices=['mv', 'uniform'], default=_ONLINE.init)

    parser = argparse.ArgumentParser(
        prog="crowdem",
        description="Aggregate crowdsourced labels with batch and online Dawid-Skene EM.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser('mv', parents=[common, data], help="Majority voting.")
    p.add_argument('--out', help="Write predictions ('item,label') to this file.")
    p.set_defaults(func=cmd_mv)

    p = sub.add_parser('em', parents=[common, data], help="Batch Dawid-Skene EM.")
    p.add_argument('--init', choices=['mv', 'uniform'], default=_EM.init)
    p.add_argument('--max-iter', type=int, default=_EM.max_iter)
    p.add_argument('--tol', type=float, default=_EM.tol)
    p.add_argument('--smoothing', type=float, default=_EM.smoothing)
    p.add_argument('--out', help="Write the fitted confusion tensor checkpoint here.")
    p.add_argument('--trace', help="Write the per-iteration trace CSV here.")
    p.add_argument('--predictions', help="Write predictions ('item,label') to this file.")
    p.set_defaults(func=cmd_em)

    p = sub.add_parser('online', parents=[common, data, online], help="Online Dawid-Skene EM.")
    p.add_argument('--a', type=float, default=_ONLINE.a)
    p.add_argument('--b', type=float, default=_ONLINE.b)
    p.add_argument('--seed', type=int, default=_ONLINE.seed)
    p.add_argument('--out', help="Write the final confusion tensor checkpoint here.")
    p.add_argument('--trace', help="Write the per-epoch trace CSV here.")
    p.add_argument('--predictions', help="Write predictions ('item,label') to this file.")
    p.set_defaults(func=cmd_online)

    p = sub.add_parser('sweep', parents=[common, data, online], help="Grid sweep over schedule parameters.")
    p.add_argument('--a-grid', required=True, help="Comma-separated values of a.")
    p.add_argument('--b-grid', required=True, help="Comma-separated values of b.")
    p.add_argument('--seeds', default="0", help="Comma-separated sampler seeds.")
    p.add_argument('--out', required=True, help="Sweep result CSV.")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser('synth', parents=[common], help="Generate a synthetic instance.")
    p.add_argument('--m', type=int, default=10, help="Number of workers.")
    p.add_argument('--n', type=int, default=200, help="Number of items.")
    p.add_argument('--k', type=int, default=3, help="Number of classes.")
    p.add_argument('--acc-lo', type=float, default=0.6)
    p.add_argument('--acc-hi', type=float, default=0.9)
    p.add_argument('--labels-per-item', type=int, default=5)
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--out-dir', required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser('eval', parents=[common], help="Evaluate a saved model on a label file.")
    p.add_argument('--model', required=True, help="Checkpoint written by 'em' or 'online'.")
    p.add_argument('--labels', required=True)
    p.add_argument('--truth')
    p.add_argument('--h', type=float, default=1e-5, help="Finite-difference step for the stationarity gap.")
    p.set_defaults(func=cmd_eval)

    return parser


def _configure_logging(verbosity):
    level = logging.WARNING if verbosity <= 0 else logging.INFO if verbosity == 1 else logging.DEBUG
    logging.basicConfig(level=level, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    _configure_logging(args.verbose)
    if args.threads is None:
        args.threads = default_threads()
    elif args.threads < 1:
        print(f"Error: --threads must be >= 1, got {args.threads}", file=sys.stderr)
        return EXIT_USAGE

    try:
        return args.func(args)
    except DegenerateWorkerError as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_DEGENERATE
    except DataFormatError as e:
        print(f"Error: {args.command}: {e}", file=sys.stderr)
        return EXIT_DATA
    except OSError as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_DATA
    except (ScheduleError, InvariantError, OracleSizeError) as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except CrowdEMError as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
