"""Command-line front-end: reproducible generate / simulate / analyze /
scale pipelines over documented file formats.

Exit codes are a stable scripting contract: 0 success, 2 user or parameter
error, 3 resource or runtime error (e.g. event-queue overflow, which still
writes the partial spike log).  The ``LOOPSIM_LOG`` environment variable
sets diagnostic verbosity (DEBUG, INFO, WARNING, ...).
"""

from __future__ import annotations

import argparse
import concurrent.futures
import json
import logging
import os
import sys
import tempfile
import time

from . import __version__
from .core import (
    SCHEMA_VERSION,
    LoopsimError,
    ParameterError,
    QueueOverflowError,
    SpikeLog,
    ValidationFailed,
    load_network,
    network_to_json,
    save_network,
)
from . import analysis, engine, scaling, topology
from .plasticity import PlasticityConfig, StdpRule, StpRule

logger = logging.getLogger("loopsim")

EXIT_OK = 0
EXIT_USER = 2
EXIT_RESOURCE = 3


def _atomic_write_text(path: str, text: str) -> None:
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".loopsim-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="\n") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _atomic_write_json(path: str, doc) -> None:
    _atomic_write_text(path, json.dumps(doc, indent=2) + "\n")


def _write_spikes_atomic(log: SpikeLog, path: str) -> None:
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".loopsim-", suffix=".tmp")
    os.close(fd)
    try:
        log.to_csv(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------------------
# generate
# ---------------------------------------------------------------------------


def cmd_generate(args) -> int:
    if args.generator == "small-world":
        spec = topology.generate_small_world(
            args.n, args.k, args.p, args.seed,
            tau=args.tau_ps, threshold=args.threshold,
            t_refractory=args.t_refractory_ps, n_levels=args.n_levels,
            level=args.level, w_max=args.w_max,
        )
    else:  # scale-free
        spec = topology.generate_scale_free(
            args.n, args.m, args.seed,
            tau=args.tau_ps, threshold=args.threshold,
            t_refractory=args.t_refractory_ps, n_levels=args.n_levels,
            level=args.level, w_max=args.w_max,
        )
    # all randomness flows from the one --seed; derived stages get offsets
    spec = topology.assign_layout_and_delays(
        spec, args.area_um2, args.velocity, args.seed + 1
    )
    if args.inhibitory_fraction > 0:
        spec = topology.mix_inhibitory(spec, args.inhibitory_fraction, args.seed + 2)
    if args.detection_efficiency != 1.0:
        if not 0.0 < args.detection_efficiency <= 1.0:
            raise ParameterError(
                f"--detection-efficiency {args.detection_efficiency} not in (0, 1]"
            )
        spec.detection_efficiency = args.detection_efficiency
    if args.stdp or args.stp:
        stdp = (
            StdpRule(t_plus=args.stdp_t_plus_ps, t_minus=args.stdp_t_minus_ps,
                     step=args.stdp_step)
            if args.stdp else None
        )
        stp = StpRule(d=args.stp_d, tau=args.stp_tau_ps, cap=args.stp_cap) if args.stp else None
        spec.plasticity = PlasticityConfig(stdp=stdp, stp=stp)

    _atomic_write_json(args.out, network_to_json(spec))
    logger.info("wrote %s", args.out)
    report = topology.measure(spec, fit_degrees=args.fit_degrees)
    print(json.dumps(report.to_dict(), indent=2))
    return EXIT_OK


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------


def _suffixed(path: str, trial: int) -> str:
    root, ext = os.path.splitext(path)
    return f"{root}.t{trial}{ext}"


def _run_one(network_path, stimulus_path, args_dict, out_spikes, out_state, seed) -> dict:
    spec = load_network(network_path)
    stimulus = engine.load_stimulus(stimulus_path) if stimulus_path else []
    t0 = time.perf_counter()
    overflow = False
    try:
        result = engine.run(
            spec,
            stimulus,
            t_end=args_dict["t_end_ps"],
            seed=seed,
            freeze_plasticity=args_dict["freeze_plasticity"],
            axon_latency=args_dict["axon_latency_ps"],
            max_events=args_dict["max_events"],
            queue_cap=args_dict["queue_cap"],
        )
    except QueueOverflowError as exc:
        result = exc.result
        overflow = True
    wall = time.perf_counter() - t0
    _write_spikes_atomic(result.spikes, out_spikes)
    state = dict(result.state)
    state["stopped_on"] = "queue-overflow" if overflow else result.stopped_on
    state["partial"] = overflow
    if out_state:
        _atomic_write_json(out_state, state)
    return {
        "seed": seed,
        "spikes": len(result.spikes),
        "final_time_ps": result.final_time,
        "events": result.events_processed,
        "wall_s": wall,
        "events_per_s": result.events_processed / wall if wall > 0 else 0.0,
        "stopped_on": state["stopped_on"],
        "overflow": overflow,
    }


def _print_summary(s: dict, prefix: str = "") -> None:
    print(f"{prefix}spikes: {s['spikes']}")
    print(f"{prefix}sim time: {s['final_time_ps']} ps")
    print(f"{prefix}events processed: {s['events']}")
    print(f"{prefix}wall time: {s['wall_s']:.3f} s")
    print(f"{prefix}events/s: {s['events_per_s']:.0f}")
    print(f"{prefix}stopped on: {s['stopped_on']}")


def cmd_simulate(args) -> int:
    if args.t_end_ps <= 0:
        raise ParameterError(f"--t-end-ps must be positive, got {args.t_end_ps}")
    opts = {
        "t_end_ps": args.t_end_ps,
        "freeze_plasticity": args.freeze_plasticity,
        "axon_latency_ps": args.axon_latency_ps,
        "max_events": args.max_events,
        "queue_cap": args.queue_cap,
    }
    if args.trials <= 1:
        s = _run_one(args.network, args.stimulus, opts, args.out_spikes,
                     args.out_state, args.seed)
        _print_summary(s)
        return EXIT_RESOURCE if s["overflow"] else EXIT_OK

    jobs = []
    with concurrent.futures.ProcessPoolExecutor(
        max_workers=min(args.trials, os.cpu_count() or 1)
    ) as pool:
        for i in range(args.trials):
            jobs.append(
                pool.submit(
                    _run_one,
                    args.network,
                    args.stimulus,
                    opts,
                    _suffixed(args.out_spikes, i),
                    _suffixed(args.out_state, i) if args.out_state else None,
                    args.seed + i,
                )
            )
        summaries = [j.result() for j in jobs]
    code = EXIT_OK
    for i, s in enumerate(summaries):
        _print_summary(s, prefix=f"trial {i} (seed {s['seed']}): ")
        if s["overflow"]:
            code = EXIT_RESOURCE
    return code


# ---------------------------------------------------------------------------
# analyze
# ---------------------------------------------------------------------------


def _parse_bands(text: str) -> list[tuple[float, float]]:
    bands = []
    for part in text.split(","):
        try:
            lo, hi = part.split(":")
            bands.append((float(lo), float(hi)))
        except ValueError:
            raise ParameterError(f"bad band {part!r}; expected LO:HI in Hz") from None
    return bands


def cmd_analyze(args) -> int:
    log = SpikeLog.from_csv(args.spikes)
    bin_width = args.bin_width_ps or analysis.default_bin_width(log)
    report: dict = {
        "spikes": len(log),
        "n_neurons_observed": int(len(set(log.neurons.tolist()))),
        "bin_width_ps": bin_width,
        "t_first_ps": int(log.times.min()) if len(log) else None,
        "t_last_ps": int(log.times.max()) if len(log) else None,
    }
    av = analysis.detect_avalanches(log, bin_width)
    report["avalanches"] = {
        "count": len(av),
        "total_spikes": int(av.sizes.sum()) if len(av) else 0,
        "mean_size": float(av.sizes.mean()) if len(av) else None,
        "max_size": int(av.sizes.max()) if len(av) else None,
        "mean_duration_bins": float(av.durations.mean()) if len(av) else None,
    }
    try:
        fit = analysis.fit_power_law(av.sizes, xmin=args.xmin)
        report["size_fit"] = {
            "alpha": fit.alpha, "xmin": fit.xmin, "n_tail": fit.n_tail, "ks": fit.ks,
        }
    except LoopsimError as exc:
        report["size_fit"] = None
        report["size_fit_skipped"] = str(exc)
    try:
        report["branching_ratio"] = analysis.branching_ratio(log, bin_width)
    except LoopsimError as exc:
        report["branching_ratio"] = None
        report["branching_ratio_skipped"] = str(exc)
    subset = None
    if args.neurons:
        subset = [int(x) for x in args.neurons.split(",")]
    try:
        report["synchrony"] = analysis.synchrony_index(log, bin_width, subset)
    except LoopsimError as exc:
        report["synchrony"] = None
        report["synchrony_skipped"] = str(exc)
    if args.bands:
        bands = _parse_bands(args.bands)
        powers = analysis.band_power(log, bin_width, bands)
        report["band_power"] = [
            {"f_lo_hz": lo, "f_hi_hz": hi, "power": p}
            for (lo, hi), p in zip(bands, powers)
        ]

    _atomic_write_json(args.out, report)
    if args.plots_dir:
        os.makedirs(args.plots_dir, exist_ok=True)
        sizes, counts = (
            ([], []) if len(av) == 0
            else (lambda u: (u[0].tolist(), u[1].tolist()))(
                __import__("numpy").unique(av.sizes, return_counts=True)
            )
        )
        _atomic_write_text(
            os.path.join(args.plots_dir, "avalanche_sizes.csv"),
            "size,count\n" + "".join(f"{s},{c}\n" for s, c in zip(sizes, counts)),
        )
        times, rate = analysis.population_rate(log, bin_width)
        _atomic_write_text(
            os.path.join(args.plots_dir, "rate.csv"),
            "t_ps,count\n"
            + "".join(f"{t},{int(c)}\n" for t, c in zip(times.tolist(), rate.tolist())),
        )
        if len(rate):
            import numpy as np

            spec = np.abs(np.fft.rfft(rate - rate.mean())) ** 2
            freqs = np.fft.rfftfreq(len(rate), d=bin_width * 1e-12)
            _atomic_write_text(
                os.path.join(args.plots_dir, "spectrum.csv"),
                "freq_hz,power\n"
                + "".join(f"{f!r},{p!r}\n" for f, p in zip(freqs.tolist(), spec.tolist())),
            )
    print(json.dumps(report, indent=2))
    return EXIT_OK


# ---------------------------------------------------------------------------
# scale
# ---------------------------------------------------------------------------


def cmd_scale(args) -> int:
    if args.preset == "paper":
        a, b = scaling.OPTOELECTRONIC, scaling.BIOLOGICAL
        wavelength = scaling.OPTOELECTRONIC.wavelength
        n, rate, energy = 1e6, 2e7, 5e-14
    else:
        a = (
            scaling.SystemParams(velocity=args.v, device_size=args.w)
            if args.v is not None and args.w is not None
            else None
        )
        b = (
            scaling.SystemParams(velocity=args.v_b, device_size=args.w_b)
            if args.v_b is not None and args.w_b is not None
            else None
        )
        wavelength, n, rate, energy = args.wavelength, args.n, args.rate, args.energy

    rows: list[tuple[str, str]] = []
    doc: dict = {}
    if args.preset == "paper" or (args.v is not None and args.w is not None):
        metric_a = scaling.pool_metric(a)
        rows.append(("pool metric (v/w)^2 [system A]", f"{metric_a:.6g}"))
        doc["pool_metric_a"] = metric_a
        if b is not None:
            metric_b = scaling.pool_metric(b)
            ratio = scaling.pool_ratio(a, b)
            rows.append(("pool metric (v/w)^2 [system B]", f"{metric_b:.6g}"))
            rows.append(("pool ratio A/B", f"{ratio:.6g}"))
            doc["pool_metric_b"] = metric_b
            doc["pool_ratio"] = ratio
    if wavelength is not None:
        e_photon = scaling.photon_energy(wavelength)
        rows.append((f"photon energy at {wavelength:g} m", f"{e_photon:.6g} J"))
        doc["photon_energy_j"] = e_photon
    if n is not None and rate is not None and energy is not None:
        p = scaling.power_budget(n, rate, energy)
        rows.append((f"network power ({n:g} neurons x {rate:g} Hz x {energy:g} J)",
                     f"{p:.6g} W"))
        doc["power_w"] = p
    if not rows:
        raise ParameterError(
            "nothing to compute: give --preset paper, --v/--w, --wavelength, "
            "or --n/--rate/--energy"
        )
    if args.json:
        print(json.dumps(doc, indent=2))
    else:
        width = max(len(r[0]) for r in rows)
        for name, value in rows:
            print(f"{name:<{width}}  {value}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="loopsim",
        description="Event-driven simulator for photonic spiking networks "
        "built from superconducting loop neurons.",
    )
    parser.add_argument(
        "--version", action="version",
        version=f"loopsim {__version__} (schema {SCHEMA_VERSION})",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="synthesize a network spec JSON")
    g.add_argument("generator", choices=["small-world", "scale-free"])
    g.add_argument("--n", type=int, required=True, help="number of neurons")
    g.add_argument("--k", type=int, default=10, help="ring-lattice degree (small-world)")
    g.add_argument("--p", type=float, default=0.1, help="rewiring probability (small-world)")
    g.add_argument("--m", type=int, default=3, help="edges per new node (scale-free)")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", default="network.json")
    g.add_argument("--area-um2", type=float, default=1e6,
                   help="layout area in square micrometers")
    g.add_argument("--velocity", type=float, default=2e7, help="signal velocity m/s")
    g.add_argument("--inhibitory-fraction", type=float, default=0.0)
    g.add_argument("--detection-efficiency", type=float, default=1.0)
    g.add_argument("--threshold", type=float, default=1.0)
    g.add_argument("--tau-ps", type=float, default=200_000.0)
    g.add_argument("--t-refractory-ps", type=int, default=50_000)
    g.add_argument("--n-levels", type=int, default=200)
    g.add_argument("--level", type=int, default=None,
                   help="initial synapse level (default: maximal)")
    g.add_argument("--w-max", type=float, default=1.0)
    g.add_argument("--fit-degrees", action="store_true",
                   help="include a degree power-law fit in the report")
    g.add_argument("--stdp", action="store_true", help="enable timing plasticity")
    g.add_argument("--stdp-t-plus-ps", type=int, default=10_000)
    g.add_argument("--stdp-t-minus-ps", type=int, default=10_000)
    g.add_argument("--stdp-step", type=int, default=1)
    g.add_argument("--stp", action="store_true", help="enable short-term plasticity")
    g.add_argument("--stp-d", type=float, default=0.5)
    g.add_argument("--stp-tau-ps", type=float, default=100_000.0)
    g.add_argument("--stp-cap", type=float, default=2.0)
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("simulate", help="run a network and write the spike log")
    s.add_argument("--network", required=True)
    s.add_argument("--stimulus", default=None, help="JSON list of external inputs")
    s.add_argument("--t-end-ps", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out-spikes", default="spikes.csv")
    s.add_argument("--out-state", default=None, help="final-state snapshot JSON")
    s.add_argument("--max-events", type=int, default=None,
                   help="stop cleanly after this many processed events")
    s.add_argument("--queue-cap", type=int, default=10_000_000,
                   help="pending-queue size that counts as overflow (exit 3)")
    s.add_argument("--freeze-plasticity", action="store_true",
                   help="disable all synaptic updates (ablation runs)")
    s.add_argument("--axon-latency-ps", type=int, default=0)
    s.add_argument("--trials", type=int, default=1,
                   help="fan out N independent runs with seeds seed+0..N-1")
    s.set_defaults(func=cmd_simulate)

    a = sub.add_parser("analyze", help="avalanche/criticality report from a spike log")
    a.add_argument("--spikes", required=True)
    a.add_argument("--out", default="report.json")
    a.add_argument("--bin-width-ps", type=int, default=None,
                   help="default: mean inter-spike interval")
    a.add_argument("--xmin", type=int, default=None, help="fixed power-law cutoff")
    a.add_argument("--bands", default=None, help="comma-separated LO:HI in Hz")
    a.add_argument("--neurons", default=None,
                   help="comma-separated neuron ids for the synchrony index")
    a.add_argument("--plots-dir", default=None, help="write plot-ready CSVs here")
    a.set_defaults(func=cmd_analyze)

    c = sub.add_parser("scale", help="light-speed scaling calculators")
    c.add_argument("--preset", choices=["paper"], default=None,
                   help="the documented bio-vs-optical comparison")
    c.add_argument("--v", type=float, default=None, help="signal velocity m/s (system A)")
    c.add_argument("--w", type=float, default=None, help="device size m (system A)")
    c.add_argument("--v-b", type=float, default=None, help="velocity m/s (system B)")
    c.add_argument("--w-b", type=float, default=None, help="device size m (system B)")
    c.add_argument("--wavelength", type=float, default=None, help="photon wavelength m")
    c.add_argument("--n", type=float, default=None, help="neuron count")
    c.add_argument("--rate", type=float, default=None, help="mean firing rate Hz")
    c.add_argument("--energy", type=float, default=None, help="energy per firing J")
    c.add_argument("--json", action="store_true", help="emit JSON instead of a table")
    c.set_defaults(func=cmd_scale)

    return parser


def main(argv=None) -> int:
    level = os.environ.get("LOOPSIM_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(name)s %(levelname)s %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except QueueOverflowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except (ValidationFailed, ParameterError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER
    except LoopsimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER
    except json.JSONDecodeError as exc:
        print(f"error: invalid JSON input: {exc}", file=sys.stderr)
        return EXIT_USER


if __name__ == "__main__":
    sys.exit(main())
