"""Command-line entry point.

Exit codes: 0 success, 2 bad input/config, 3 backend failure,
4 iteration cap exceeded.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
from collections import Counter
from pathlib import Path

from . import __version__
from .ars import Decision, Phase, read_trace
from .backends import BackendConfig, BackendKind, Backends, HttpBackend, make_stub
from .dataset import read_manifest
from .errors import BackendFailure, ForgeSimError, IterationCapExceeded
from .pipeline import RunConfig, emit, generate, socialize
from .profiles import ProfileConfig, build_profiles, load_metadata, save_profiles
from .social import ROLE_ORDER, read_trajectories
from .util import frac_str

EXIT_OK, EXIT_INPUT, EXIT_BACKEND, EXIT_CAP = 0, 2, 3, 4

log = logging.getLogger("forgesim")


def _backends(cfg: RunConfig, stub: bool) -> Backends:
    return Backends.stubs(cfg.seed) if stub else Backends.from_config(cfg.backends, cfg.seed)


def cmd_profile_extract(args) -> int:
    records = load_metadata(args.metadata)
    if args.cognition_url:
        cognition = HttpBackend(BackendKind.COGNITION, BackendConfig.from_dict({"endpoint_url": args.cognition_url}))
    else:
        cognition = make_stub(BackendKind.COGNITION, args.seed)
    profiles = build_profiles(records, ProfileConfig(args.style_sample, args.seed), cognition)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    save_profiles(args.out, profiles)
    print(f"profiles,{len(profiles)}")
    print(f"records,{len(records)}")
    return EXIT_OK


def cmd_generate(args) -> int:
    cfg = RunConfig.load(args.config)
    backends = _backends(cfg, args.stub_backends)
    try:
        result = generate(cfg, backends, resume=args.resume, halt_at=args.halt_at)
    except IterationCapExceeded as exc:
        print(f"error: {exc}", file=sys.stderr)
        print(f"iterations,{exc.iterations}")
        print(f"accepted,{exc.accepted}")
        print(f"target,{exc.target}")
        print(f"acceptance_rate,{exc.acceptance_rate:.6f}")
        return EXIT_CAP
    finally:
        backends.close()
    print(f"iterations,{result.iterations}")
    print(f"accepted,{len(result.blueprints)}")
    print(f"target,{cfg.n_forged}")
    print(f"acceptance_rate,{result.acceptance_rate:.6f}")
    print(f"tau,{frac_str(result.state.tau)}")
    if args.halt_at is not None and len(result.blueprints) < cfg.n_forged:
        print(f"checkpoint,{cfg.out.checkpoint}")
    return EXIT_OK


def cmd_socialize(args) -> int:
    cfg = RunConfig.load(args.config)
    backends = _backends(cfg, args.stub_backends)
    try:
        trajectories, samples = socialize(cfg, backends)
    finally:
        backends.close()
    print(f"trajectories,{len(trajectories)}")
    print(f"events,{sum(len(t.events) for t in trajectories)}")
    print(f"samples,{len(samples)}")
    return EXIT_OK


def cmd_emit(args) -> int:
    cfg = RunConfig.load(args.config)
    backends = _backends(cfg, args.stub_backends)
    try:
        manifest = emit(cfg, backends)
    finally:
        backends.close()
    for k, v in manifest.counts.items():
        print(f"{k},{v}")
    print(f"manifest,{cfg.out.manifest}")
    return EXIT_OK


def collect_stats(manifest_path, trace_path=None, trajectories_path=None) -> tuple[list[tuple[str, object]], dict]:
    manifest = read_manifest(manifest_path)
    rows: list[tuple[str, object]] = []
    c = manifest.counts
    for key in ("total", "M", "N", "real", "blueprint", "social"):
        rows.append((f"samples.{key}", c[key]))
    rows.append(("delta.0", c["delta_0"]))
    rows.append(("delta.1", c["delta_1"]))
    by_kind = Counter((s.kind, s.delta) for s in manifest.samples)
    for kind in ("real", "blueprint", "social"):
        for d in (0, 1):
            rows.append((f"delta.{d}.{kind}", by_kind[(kind, d)]))
    role_samples = Counter(s.provenance.role for s in manifest.samples if s.provenance.role)
    for role in ROLE_ORDER:
        rows.append((f"samples.role.{role.value}", role_samples[role.value]))
    extra: dict = {"manifest": manifest}
    if trajectories_path:
        trajectories = read_trajectories(trajectories_path)
        per_role: dict[str, Counter] = {r.value: Counter() for r in ROLE_ORDER}
        for t in trajectories:
            for e in t.events:
                per_role[e.role.value][e.stance.value] += 1
        rows.append(("trajectories", len(trajectories)))
        for role, cnt in per_role.items():
            rows.append((f"events.role.{role}", sum(cnt.values())))
        extra["role_events"] = {r: cnt for r, cnt in per_role.items() if cnt}
    if trace_path:
        trace = read_trace(trace_path)
        extra["trace"] = trace
        n = len(trace)
        acc = sum(r.decision is Decision.ACCEPT for r in trace)
        warm = [r for r in trace if r.phase is Phase.WARMUP]
        adap = [r for r in trace if r.phase is Phase.ADAPTIVE]
        rate = lambda rs: sum(r.decision is Decision.ACCEPT for r in rs) / len(rs) if rs else 0.0  # noqa: E731
        taus = [r.tau for r in adap]
        recomputes = sum(1 for a, b in zip(taus, taus[1:]) if b != a)
        rows += [
            ("ars.n_seen", n),
            ("ars.accepted", acc),
            ("ars.acceptance_rate", f"{acc / n if n else 0.0:.6f}"),
            ("ars.acceptance_rate.warmup", f"{rate(warm):.6f}"),
            ("ars.acceptance_rate.adaptive", f"{rate(adap):.6f}"),
            ("ars.threshold_changes", recomputes),
            ("ars.tau.first", frac_str(trace[0].tau) if trace else ""),
            ("ars.tau.max", frac_str(max(r.tau for r in trace)) if trace else ""),
            ("ars.tau.final", frac_str(trace[-1].tau) if trace else ""),
            ("ars.tau.final_decimal", f"{float(trace[-1].tau):.6f}" if trace else ""),
            ("ars.phase.final", trace[-1].phase.value if trace else ""),
        ]
    return rows, extra


def render_figures(extra: dict, out_dir: str | Path) -> list[tuple[str, Path]]:
    from . import plotting

    out_dir = Path(out_dir)
    figures = [("figure.labels", plotting.plot_label_breakdown(extra["manifest"].samples, out_dir / "labels.png"))]
    if extra.get("trace"):
        figures.append(("figure.ars_threshold", plotting.plot_threshold_trace(extra["trace"], out_dir / "ars_threshold.png")))
    if extra.get("role_events"):
        figures.append(("figure.role_events", plotting.plot_role_events(extra["role_events"], out_dir / "role_events.png")))
    return figures


def cmd_stats(args) -> int:
    rows, extra = collect_stats(args.manifest, args.ars_trace, args.trajectories)
    if args.figures:
        rows += render_figures(extra, args.figures)
    if args.format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("metric", "value"))
        w.writerows(rows)
        sys.stdout.write(buf.getvalue())
    else:
        width = max(len(k) for k, _ in rows)
        for k, v in rows:
            print(f"{k:<{width}}  {v}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="forgesim", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("profile-extract", help="build agent profiles from a metadata table")
    p.add_argument("--metadata", required=True, help="CSV/TSV/JSONL table: record_id,creator_id,method_id,target_id")
    p.add_argument("--out", required=True, help="profiles file (JSON lines)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--style-sample", type=int, default=5, metavar="L", help="records sampled per style prompt")
    p.add_argument("--cognition-url", help="cognition service base URL (default: deterministic stub)")
    p.set_defaults(func=cmd_profile_extract)

    for name, func, help_ in (
        ("generate", cmd_generate, "phase 1: generate, score and gate blueprints"),
        ("socialize", cmd_socialize, "phase 2: social trajectories and consistency labels"),
        ("emit", cmd_emit, "write the dataset manifest"),
    ):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, help="run config (JSON)")
        p.add_argument("--stub-backends", action="store_true", help="use deterministic stub backends")
        if name == "generate":
            p.add_argument("--resume", metavar="CKPT", help="continue from a checkpoint file")
            p.add_argument("--halt-at", type=int, metavar="TICK", help="stop after TICK iterations and checkpoint")
        p.set_defaults(func=func)

    p = sub.add_parser("stats", help="summarise a manifest and threshold trace")
    p.add_argument("--manifest", required=True)
    p.add_argument("--ars-trace", help="threshold trace CSV written by generate")
    p.add_argument("--trajectories", help="trajectory events written by socialize")
    p.add_argument("--format", choices=("text", "csv"), default="text")
    p.add_argument("--figures", metavar="DIR", help="also render PNG figures into DIR")
    p.set_defaults(func=cmd_stats)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except BackendFailure as exc:
        print(f"error: backend failure after {exc.attempts} attempt(s): {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except IterationCapExceeded as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAP
    except (ForgeSimError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
