"""Command-line front end: basis generation, simulation, reconstruction,
metrics, and end-to-end demo pipelines.

Exit codes: 0 success, 1 runtime error (bad data, incompatible inputs),
2 usage error. All outputs are deterministic for identical flags and seeds;
wall-clock timings go to stderr only.
"""

from __future__ import annotations

import argparse
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .basis import (
    KIND_HADAMARD,
    KIND_RANDOM,
    ModulationBasis,
    ORDERING_SEQUENCY,
    ORDERINGS,
    build_hadamard_basis,
    build_random_basis,
)
from .compressive import (
    SolverOptions,
    TV_MODES,
    TV_TEMPORAL,
    plan_sampling,
    reconstruct_cs,
)
from .correlation import (
    DC_FORMULA,
    DC_POLICIES,
    MODE_CORRELATION,
    MODE_CS,
    MODE_EXACT,
    MODE_SLIDING,
    ReconstructionResult,
    apply_threshold,
    reconstruct_correlation,
    reconstruct_exact,
    reconstruct_sliding,
)
from .fileio import (
    FRAME_PREFIX,
    frame_name,
    load_basis,
    load_exposure,
    read_frame_sequence,
    save_basis,
    save_exposure,
    write_f32,
    write_frame_sequence,
    write_pgm,
)
from .geometry import SuperPixelGeometry
from .metrics import MetricsReport
from .scene import (
    NOISE_NONE,
    NoiseModel,
    Video,
    add_noise,
    direct_capture,
    simulate_exposure,
)
from .scenes import composite_drop, moving_square

RECON_MODES = (MODE_CORRELATION, MODE_EXACT, MODE_CS, MODE_SLIDING)


@dataclass
class RunConfig:
    """One fully specified pipeline run (demo and test entry point).

    Mode-specific fields must be present and the geometry consistent;
    validate() enforces both before anything touches the disk.
    """

    geometry: SuperPixelGeometry
    K: int
    basis_kind: str = KIND_HADAMARD
    ordering: str = ORDERING_SEQUENCY
    seed: int = 0
    density: float = 0.5
    mode: str = MODE_CORRELATION
    dc_policy: str = DC_FORMULA
    lam: float | None = None
    tv_mode: str = TV_TEMPORAL
    noise: NoiseModel | None = None
    tau: float | None = None
    out_dir: Path | None = None
    compute_metrics: bool = True

    def validate(self):
        if self.basis_kind not in (KIND_HADAMARD, KIND_RANDOM):
            raise ValueError(f"unknown basis kind {self.basis_kind!r}")
        if self.basis_kind == KIND_HADAMARD and self.K > self.geometry.block_pixels:
            raise ValueError("hadamard runs need K <= l^2")
        if self.mode not in RECON_MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == MODE_SLIDING and self.basis_kind != KIND_HADAMARD:
            raise ValueError("sliding mode needs a hadamard basis")
        if self.mode == MODE_CS and self.tv_mode not in TV_MODES:
            raise ValueError(f"unknown tv mode {self.tv_mode!r}")
        if self.dc_policy not in DC_POLICIES:
            raise ValueError(f"unknown dc policy {self.dc_policy!r}")
        if self.tau is not None and not 0.0 <= self.tau <= 1.0:
            raise ValueError("tau must lie in [0, 1]")

    def build_basis(self) -> ModulationBasis:
        if self.basis_kind == KIND_HADAMARD:
            K = None if self.K == self.geometry.block_pixels else self.K
            return build_hadamard_basis(self.geometry, self.ordering, K=K)
        return build_random_basis(self.geometry, K=self.K, seed=self.seed,
                                  density=self.density)


class _CliError(RuntimeError):
    """Normal-operation failure reported with exit code 1."""


def _timed(label: str, fn, *args, **kwargs):
    start = time.perf_counter()
    result = fn(*args, **kwargs)
    print(f"[{label}] {time.perf_counter() - start:.3f}s", file=sys.stderr)
    return result


def _geometry_for_scene(frames: np.ndarray, basis: ModulationBasis) -> Video:
    video = Video(frames)
    geom = basis.geometry
    if (video.height, video.width) not in ((geom.n, geom.n), (geom.m, geom.m)):
        raise _CliError(
            f"scene frames are {video.height}x{video.width}; basis geometry "
            f"expects {geom.n}x{geom.n} (scene) or {geom.m}x{geom.m} (modulator)"
        )
    return video


def _reconstruct(exposure, basis, args) -> ReconstructionResult:
    if args.mode == MODE_CORRELATION:
        return reconstruct_correlation(exposure, basis, dc_policy=args.dc)
    if args.mode == MODE_EXACT:
        return reconstruct_exact(exposure, basis)
    if args.mode == MODE_SLIDING:
        return reconstruct_sliding(exposure, basis, dc_policy=args.dc)
    opts = SolverOptions(max_iters=args.max_iters)
    return reconstruct_cs(exposure, basis, lam=args.lam, tv_mode=args.tv, opts=opts)


def _write_result(out_dir: Path, result: ReconstructionResult):
    out_dir.mkdir(parents=True, exist_ok=True)
    clamped = np.clip(result.frames, 0.0, 1.0)
    for k in range(result.K):
        write_pgm(out_dir / frame_name(k), clamped[k], maxval=65535)
        write_f32(out_dir / (frame_name(k)[: -len(".pgm")] + ".f32"), result.frames[k])


def _metrics_against(truth_dir: Path, result_frames: np.ndarray,
                     out_path: Path | None) -> MetricsReport:
    truth = read_frame_sequence(truth_dir)
    if truth.shape != result_frames.shape:
        raise _CliError(
            f"truth {truth.shape} and reconstruction {result_frames.shape} differ"
        )
    report = MetricsReport.compare(np.clip(result_frames, 0.0, 1.0), truth)
    if out_path is not None:
        out_path.parent.mkdir(parents=True, exist_ok=True)
        out_path.write_text(report.to_text())
    return report


# ------------------------------------------------------------- commands

def _cmd_gen_basis(args) -> int:
    geom = SuperPixelGeometry.from_block(args.l, args.n)
    if args.kind == "hadamard":
        basis = build_hadamard_basis(geom, args.ordering, K=args.order)
    else:
        if args.order is None:
            raise _CliError("--K (pattern count) is required for random bases")
        basis = build_random_basis(geom, K=args.order, seed=args.seed,
                                   density=args.density)
    save_basis(args.out, basis)
    plan = plan_sampling(basis.K, geom.l)
    print(f"wrote {args.out}: {basis.kind} basis, K={basis.K}, l={geom.l}, "
          f"n={geom.n}, m={geom.m}")
    print(plan.describe())
    return 0


def _cmd_simulate(args) -> int:
    basis = load_basis(args.basis)
    frames = read_frame_sequence(args.scene)
    video = _geometry_for_scene(frames, basis)
    if video.K != basis.K:
        raise _CliError(
            f"scene has {video.K} frames but the basis expects K={basis.K}"
        )
    exposure = _timed("simulate", simulate_exposure, video, basis)
    if args.noise != NOISE_NONE:
        model = NoiseModel(kind=args.noise, sigma=args.sigma, scale=args.scale,
                           seed=args.seed)
        exposure = add_noise(exposure, model)
    save_exposure(args.out_exposure, exposure)
    print(f"wrote {args.out_exposure}: {basis.geometry.m}x{basis.geometry.m} exposure")
    if args.out_blur:
        blur = direct_capture(video)
        if video.height == basis.geometry.n:
            l = basis.geometry.l
            blur = np.repeat(np.repeat(blur, l, axis=0), l, axis=1)
        # scaled by 1/K so the long-exposure analogue fits the PGM range
        write_pgm(args.out_blur, blur / video.K, maxval=65535)
        print(f"wrote {args.out_blur}: direct-capture blur image (scaled by 1/K)")
    return 0


def _cmd_reconstruct(args) -> int:
    basis = load_basis(args.basis)
    exposure = load_exposure(args.exposure, basis.geometry)
    result = _timed("reconstruct", _reconstruct, exposure, basis, args)
    if args.tau is not None:
        result = apply_threshold(result, args.tau)
    out_dir = Path(args.out)
    _write_result(out_dir, result)
    print(f"wrote {result.K} frames of {result.frames.shape[1]}x"
          f"{result.frames.shape[2]} to {out_dir} (mode={result.mode})")
    if args.truth:
        report = _metrics_against(Path(args.truth), result.frames,
                                  out_dir / "metrics.txt")
        print(f"mean PSNR {report.mean_psnr:.2f} dB, mean RMSE "
              f"{report.mean_rmse:.3g} vs {args.truth}")
    return 0


def _cmd_metrics(args) -> int:
    recon = read_frame_sequence(args.recon)
    truth = read_frame_sequence(args.truth)
    if recon.shape != truth.shape:
        raise _CliError(f"recon {recon.shape} and truth {truth.shape} differ")
    report = MetricsReport.compare(recon, truth)
    text = report.to_text()
    sys.stdout.write(text)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text)
    return 0


# ----------------------------------------------------------------- demos

def _demo_scale(scale: float) -> tuple[int, int]:
    """Snap a scale factor to a supported (l, n) grid.

    l is the nearest power of two to 8*sqrt(scale) (full-sampling tiles need
    power-of-two l^2), n is round(128*scale) rounded to stay >= 2*l so the
    scene keeps some structure.
    """
    if not 0.0 < scale <= 1.0:
        raise _CliError(f"--scale must lie in (0, 1], got {scale}")
    exponent = int(round(3 + 0.5 * np.log2(scale)))
    l = 2 ** max(exponent, 1)
    n = max(int(round(128 * scale)), 2 * l)
    return l, n


def _demo_full_sampling(args, out: Path) -> list[str]:
    l, n = _demo_scale(args.scale)
    K = l * l
    cfg = RunConfig(geometry=SuperPixelGeometry.from_block(l, n), K=K,
                    mode=MODE_CORRELATION, out_dir=out)
    cfg.validate()
    basis = cfg.build_basis()
    scene = moving_square(n, K)
    write_frame_sequence(out / "truth", scene.frames, maxval=255)
    truth = read_frame_sequence(out / "truth")  # quantized ground truth
    video = Video(truth)
    exposure = _timed("simulate", simulate_exposure, video, basis)
    save_exposure(out / "exposure.ctge", exposure)
    blur = np.repeat(np.repeat(direct_capture(video), l, axis=0), l, axis=1)
    write_pgm(out / "blur.pgm", blur / K, maxval=65535)
    result = _timed("reconstruct", reconstruct_correlation, exposure, basis,
                    cfg.dc_policy)
    _write_result(out / "recon", result)
    report = _metrics_against(out / "truth", result.frames, out / "metrics.txt")
    return [
        f"full-sampling correlation demo: K={K}, l={l}, n={n}, m={cfg.geometry.m}",
        f"temporal gain: one exposure -> {K} frames of {n}x{n}",
        f"mean PSNR {report.mean_psnr:.2f} dB ({plan_sampling(K, l).describe()})",
    ]


def _demo_rate_sweep(args, out: Path) -> list[str]:
    l_values = (4, 5, 6, 7)
    K = 64
    _, n = _demo_scale(args.scale)
    n = min(n, 32)  # keep the per-super-pixel solve count sane
    scene = composite_drop(n, K)
    write_frame_sequence(out / "truth", scene.frames, maxval=255)
    truth = Video(read_frame_sequence(out / "truth"))
    lines = ["compressive rate sweep (random binary basis, temporal TV):"]
    psnrs = []
    for l in l_values:
        cfg = RunConfig(geometry=SuperPixelGeometry.from_block(l, n), K=K,
                        basis_kind=KIND_RANDOM, seed=args.seed, mode=MODE_CS,
                        out_dir=out)
        cfg.validate()
        basis = cfg.build_basis()
        exposure = simulate_exposure(truth, basis)
        result = _timed(f"cs l={l}", reconstruct_cs, exposure, basis,
                        cfg.lam, cfg.tv_mode)
        _write_result(out / f"recon_l{l}", result)
        report = _metrics_against(out / "truth", result.frames,
                                  out / f"metrics_l{l}.txt")
        plan = plan_sampling(K, l)
        psnrs.append(report.mean_psnr)
        lines.append(
            f"  l={l}: {plan.describe()}, mean PSNR {report.mean_psnr:.2f} dB"
        )
    monotone = bool(np.all(np.diff(psnrs) >= 0))
    lines.append(f"PSNR non-decreasing across rates: {monotone}")
    return lines


def _demo_sliding(args, out: Path) -> list[str]:
    l, n = _demo_scale(args.scale)
    K = l * l
    tau = args.tau if args.tau is not None else 0.2
    cfg = RunConfig(geometry=SuperPixelGeometry.from_block(l, n), K=K,
                    mode=MODE_SLIDING, tau=tau, out_dir=out)
    cfg.validate()
    basis = cfg.build_basis()
    scene = composite_drop(n, K)
    upsampled = Video(np.repeat(np.repeat(scene.frames, l, axis=1), l, axis=2))
    exposure = _timed("simulate", simulate_exposure, upsampled, basis)
    save_exposure(out / "exposure.ctge", exposure)
    blur = direct_capture(upsampled)
    write_pgm(out / "blur.pgm", blur / K, maxval=65535)
    result = _timed("reconstruct", reconstruct_sliding, exposure, basis,
                    cfg.dc_policy)
    cleaned = apply_threshold(result, cfg.tau)
    _write_result(out / "recon", cleaned)
    side = cfg.geometry.sliding_side
    m = cfg.geometry.m
    return [
        f"sliding-window demo: K={K}, l={l}, m={m}",
        f"output resolution {side}x{side} from a {m}x{m} modulation "
        f"(m - l + 1 = {side})",
        f"trailing ghosts suppressed with threshold tau={tau}",
    ]


def _cmd_demo(args) -> int:
    runners = {1: _demo_full_sampling, 2: _demo_rate_sweep, 3: _demo_sliding}
    defaults = {1: 1.0, 2: 0.25, 3: 0.25}
    if args.scale is None:
        args.scale = defaults[args.paper_sim]
    out = Path(args.out) if args.out else Path(f"ctgi-demo-{args.paper_sim}")
    out.mkdir(parents=True, exist_ok=True)
    lines = runners[args.paper_sim](args, out)
    summary = "\n".join(lines) + "\n"
    (out / "summary.txt").write_text(summary)
    sys.stdout.write(summary)
    print(f"wrote {out}/summary.txt")
    return 0


# ------------------------------------------------------------ arg parser

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ctgi",
        description="Simulate and invert single-exposure multiplexed video capture.",
    )
    parser.add_argument("--version", action="version", version=f"ctgi {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-basis", help="generate and save a modulation basis")
    p.add_argument("--kind", choices=("hadamard", "random"), required=True)
    p.add_argument("--order", "--K", dest="order", type=int, default=None,
                   help="pattern count K (hadamard default: l^2)")
    p.add_argument("--ordering", choices=ORDERINGS, default=ORDERING_SEQUENCY)
    p.add_argument("--l", type=int, required=True, help="super-pixel side length")
    p.add_argument("--n", type=int, default=1,
                   help="scene side in super-pixels (default 1)")
    p.add_argument("--seed", type=int, default=0, help="random-basis seed")
    p.add_argument("--density", type=float, default=0.5,
                   help="random-basis on-pixel fraction")
    p.add_argument("--out", required=True, help="output .ctgb path")
    p.set_defaults(func=_cmd_gen_basis)

    p = sub.add_parser("simulate", help="forward-model a scene into one exposure")
    p.add_argument("--scene", required=True,
                   help=f"directory of {FRAME_PREFIX}####.pgm frames")
    p.add_argument("--basis", required=True, help=".ctgb basis file")
    p.add_argument("--noise", choices=(NOISE_NONE, "additive-gaussian", "poisson"),
                   default=NOISE_NONE)
    p.add_argument("--sigma", type=float, default=0.0, help="gaussian stddev")
    p.add_argument("--scale", type=float, default=1.0,
                   help="poisson events per unit intensity")
    p.add_argument("--seed", type=int, default=0, help="noise seed")
    p.add_argument("--out-exposure", required=True, help="output .ctge path")
    p.add_argument("--out-blur", default=None,
                   help="optional direct-capture blur PGM")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("reconstruct", help="recover the K frames from an exposure")
    p.add_argument("--exposure", required=True)
    p.add_argument("--basis", required=True)
    p.add_argument("--mode", choices=RECON_MODES, default=MODE_CORRELATION)
    p.add_argument("--dc", choices=DC_POLICIES, default=DC_FORMULA,
                   help="constant-pattern frame policy")
    p.add_argument("--lambda", dest="lam", type=float, default=None,
                   help="cs regularization weight (default: data-scaled)")
    p.add_argument("--tv", choices=("temporal", "spatial"), default="temporal")
    p.add_argument("--max-iters", type=int, default=200, help="cs solver iterations")
    p.add_argument("--tau", type=float, default=None,
                   help="optional threshold as a fraction of each frame's max")
    p.add_argument("--out", required=True, help="output frame directory")
    p.add_argument("--truth", default=None,
                   help="ground-truth frame directory for metrics")
    p.set_defaults(func=_cmd_reconstruct)

    p = sub.add_parser("metrics", help="compare two frame sequences")
    p.add_argument("--recon", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--out", default=None, help="optional key=value report path")
    p.set_defaults(func=_cmd_metrics)

    p = sub.add_parser("demo", help="run a bundled end-to-end pipeline")
    p.add_argument("--paper-sim", type=int, choices=(1, 2, 3), required=True,
                   help="1: full-sampling correlation; 2: compressive rate "
                        "sweep; 3: sliding-window high resolution")
    p.add_argument("--scale", type=float, default=None,
                   help="geometry scale in (0, 1] (per-demo default)")
    p.add_argument("--seed", type=int, default=2024)
    p.add_argument("--tau", type=float, default=None, help="demo-3 threshold")
    p.add_argument("--out", default=None, help="output directory")
    p.set_defaults(func=_cmd_demo)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    # normalize the --tv spelling to the library's mode names
    if getattr(args, "tv", None) is not None:
        args.tv = {"temporal": "temporal-1d", "spatial": "spatial-2d"}[args.tv]
    try:
        return args.func(args)
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
