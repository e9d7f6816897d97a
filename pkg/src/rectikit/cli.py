"""Command-line driver: train-teacher, gen-pairs, rectify, sample, evaluate, run.

Exit codes: 0 success, 1 usage/config error, 2 I/O error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import contextlib
import logging
import os
import sys
from pathlib import Path

import numpy as np

from ._io import atomic_write_text
from .config import ExperimentConfig, load_config
from .data import make_dataset
from .denoiser import load_checkpoint, save_checkpoint
from .errors import DomainError, FormatError, RectikitError
from .rectify import generate_pairs, load_pairs, rectify_student, save_pairs, train_teacher
from .report import run_sweep, write_reports
from .sampler import make_grid, sample
from .schedule import NoiseSchedule

log = logging.getLogger("rectikit")

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def worker_count(config: ExperimentConfig | None = None) -> int:
    if config is not None and config.deterministic:
        return 1
    raw = os.environ.get("RECTIKIT_THREADS", "")
    try:
        return max(1, int(raw)) if raw else max(1, os.cpu_count() or 1)
    except ValueError:
        raise UsageError(f"RECTIKIT_THREADS must be an integer, got {raw!r}") from None


@contextlib.contextmanager
def numeric_mode(config: ExperimentConfig | None):
    """Pin BLAS to one thread in deterministic mode so reductions keep a fixed order."""
    if config is not None and config.deterministic:
        from threadpoolctl import threadpool_limits

        with threadpool_limits(limits=1):
            yield
    else:
        yield


def _out_dir(config: ExperimentConfig) -> Path:
    out = config.out
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc.strerror}") from exc
    if not os.access(out, os.W_OK):
        raise OSError(f"output directory {out} is not writable")
    return out


def _write_losses(path, losses) -> None:
    lines = ["iteration,loss"] + [f"{i},{v!r}" for i, v in enumerate(losses.tolist())]
    atomic_write_text(path, "\n".join(lines) + "\n")


def _architecture(config: ExperimentConfig) -> dict:
    return {
        "time_embed_dim": config.model.time_embed_dim,
        "cond_embed_dim": config.model.cond_embed_dim,
        "hidden_widths": config.model.hidden_widths,
    }


def cmd_train_teacher(config: ExperimentConfig) -> Path:
    out = _out_dir(config)
    data = make_dataset(config.dataset.kind, config.dataset.n_samples, config.dataset.seed)
    log.info("training teacher on %s (%d samples) for %d iterations",
             data.kind, len(data), config.teacher_train.iterations)
    result = train_teacher(data, config.teacher_train, config.schedule, **_architecture(config))
    path = out / "teacher.ckpt"
    save_checkpoint(result.model, path)
    _write_losses(out / "teacher_loss.csv", result.losses)
    log.info("wrote %s", path)
    return path


def cmd_gen_pairs(config: ExperimentConfig, teacher_path) -> Path:
    out = _out_dir(config)
    teacher = load_checkpoint(teacher_path)
    pg = config.pairgen
    log.info("generating %d pairs (%d DDIM steps, w=%g)", pg.n_pairs, pg.solver_steps, pg.w)
    pairs = generate_pairs(teacher, config.schedule, pg.n_pairs, solver_steps=pg.solver_steps,
                           w=pg.w, seed=pg.seed)
    if pairs.rejected:
        log.warning("%d pairs rejected as non-finite", len(pairs.rejected))
    path = out / "pairs.bin"
    save_pairs(pairs, path)
    log.info("wrote %s", path)
    return path


def cmd_rectify(config: ExperimentConfig, teacher_path, pairs_path) -> Path:
    out = _out_dir(config)
    teacher = load_checkpoint(teacher_path)
    pairs = load_pairs(pairs_path)
    if pairs.provenance.teacher_hash != teacher.digest():
        log.warning("pair file was generated by a different teacher checkpoint")
    log.info("rectifying student on %d pairs for %d iterations",
             len(pairs), config.student_train.iterations)
    result = rectify_student(teacher, pairs, config.student_train, config.schedule)
    path = out / "student.ckpt"
    save_checkpoint(result.model, path)
    _write_losses(out / "student_loss.csv", result.losses)
    log.info("wrote %s", path)
    return path


def cmd_sample(ckpt, steps, w, condition, n, seed, out, svg=None, solver="ddim",
               schedule: NoiseSchedule | None = None) -> Path:
    model = load_checkpoint(ckpt)
    if n < 1:
        raise UsageError("--n must be >= 1")
    noise = np.random.default_rng(seed).standard_normal((n, model.data_dim))
    x0, _ = sample(model, schedule or NoiseSchedule(), make_grid(steps), condition, w,
                   noise, solver=solver)
    header = ",".join(f"x{i}" for i in range(model.data_dim)) + ",c"
    rows = [",".join(repr(v) for v in row) + f",{condition}" for row in x0.tolist()]
    atomic_write_text(Path(out), "\n".join([header, *rows]) + "\n")
    if svg:
        from .plots import scatter

        scatter(x0, np.full(n, condition), svg, f"{Path(ckpt).stem}: {steps} steps, w={w:g}")
    return Path(out)


def cmd_evaluate(config: ExperimentConfig, ckpt_paths) -> Path:
    out = _out_dir(config)
    models = {}
    for p in ckpt_paths:
        mid = Path(p).stem
        if mid in models:
            raise UsageError(f"duplicate model id {mid!r}; checkpoints need distinct file names")
        models[mid] = load_checkpoint(p)
    ev = config.eval
    reference = make_dataset(config.dataset.kind, ev.n_samples, ev.seed + 1)
    log.info("evaluating %d models x %d steps x %d guidance scales",
             len(models), len(ev.steps), len(ev.w))
    reports = run_sweep(models, config.schedule, reference, ev.steps, ev.w, ev.n_samples,
                        ev.seed, ev.reference_steps, workers=worker_count(config))
    path = out / "eval.csv"
    write_reports(reports, path)
    from .plots import plot_vs_guidance, plot_vs_steps

    plot_vs_steps(reports, out / "metrics_vs_steps.svg")
    plot_vs_guidance(reports, out / "metrics_vs_guidance.svg")
    log.info("wrote %s and plots", path)
    return path


def cmd_run(config: ExperimentConfig) -> Path:
    teacher = cmd_train_teacher(config)
    pairs = cmd_gen_pairs(config, teacher)
    student = cmd_rectify(config, teacher, pairs)
    return cmd_evaluate(config, [teacher, student])


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rectikit", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train-teacher", help="train the teacher denoiser")
    p.add_argument("--config", required=True)

    p = sub.add_parser("gen-pairs", help="solve the teacher ODE from seeded noise")
    p.add_argument("--config", required=True)
    p.add_argument("--teacher", required=True)

    p = sub.add_parser("rectify", help="retrain a student on the pair file")
    p.add_argument("--config", required=True)
    p.add_argument("--teacher", required=True)
    p.add_argument("--pairs", required=True)

    p = sub.add_parser("sample", help="draw samples from a checkpoint into a CSV")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--guidance", type=float, default=1.0)
    p.add_argument("--condition", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--svg", help="also write a scatter plot")
    p.add_argument("--solver", choices=("ddim", "euler"), default="ddim")
    p.add_argument("--beta-min", type=float, default=0.1)
    p.add_argument("--beta-max", type=float, default=20.0)

    p = sub.add_parser("evaluate", help="sweep steps x guidance and write eval.csv + plots")
    p.add_argument("--config", required=True)
    p.add_argument("--ckpt", required=True, nargs="+", action="extend")

    p = sub.add_parser("run", help="train-teacher, gen-pairs, rectify and evaluate in one go")
    p.add_argument("--config", required=True)

    p = sub.add_parser("export-data", help="write the configured dataset as CSV")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    return parser


def _dispatch(args) -> None:
    if args.command == "sample":
        cmd_sample(args.ckpt, args.steps, args.guidance, args.condition, args.n, args.seed,
                   args.out, args.svg, args.solver, NoiseSchedule(args.beta_min, args.beta_max))
        return
    config = load_config(args.config)
    with numeric_mode(config):
        if args.command == "train-teacher":
            cmd_train_teacher(config)
        elif args.command == "gen-pairs":
            cmd_gen_pairs(config, args.teacher)
        elif args.command == "rectify":
            cmd_rectify(config, args.teacher, args.pairs)
        elif args.command == "evaluate":
            cmd_evaluate(config, args.ckpt)
        elif args.command == "run":
            cmd_run(config)
        elif args.command == "export-data":
            d = config.dataset
            make_dataset(d.kind, d.n_samples, d.seed).to_csv(args.out)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        _dispatch(args)
    except (UsageError, FormatError) as exc:
        log.error("%s", exc)
        return EXIT_IO if isinstance(exc, FormatError) else EXIT_USAGE
    except OSError as exc:
        log.error("I/O error: %s", exc)
        return EXIT_IO
    except ArithmeticError as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERIC
    except (DomainError, RectikitError) as exc:
        log.error("%s", exc)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
