"""Acceptance criteria. Each test prints one PASS/FAIL line; the lines are
also collected into a summary section at the end of the pytest run."""

import itertools
import random
import resource
import subprocess
import sys
import time
from collections import Counter
from fractions import Fraction
from pathlib import Path

import pytest
from scipy.stats import chisquare

from conftest import ACCEPTANCE_LINES, random_table
from forgesim import cli
from forgesim.ars import ArsConfig, ArsGate, Phase, fuse_score, quantile
from forgesim.backends import Backends
from forgesim.dataset import read_manifest
from forgesim.pipeline import RunConfig, run_phase1, run_phase2
from forgesim.profiles import (
    AgentProfile,
    PopularityIndex,
    compute_conformity,
    compute_diversity,
    compute_frequency,
    creators,
    write_metadata,
)
from forgesim.social import Role, Stance, label_consistency, read_trajectories
from forgesim.toolbox import Category, Toolbox, load_toolbox
from forgesim.actions import sample_operator_chain


def report(name, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


def test_profile_traits_exact():
    records = random_table(10_000, 400, 900, seed=11)
    t0 = time.perf_counter()
    index = PopularityIndex.from_records(records)
    got = {c: (compute_frequency(records, c), compute_diversity(records, c),
               compute_conformity(records, index, c)) for c in creators(records)}
    elapsed = time.perf_counter() - t0

    # oracle: sort + groupby, no shared helpers
    by_target = {t: len(list(g)) for t, g in itertools.groupby(sorted(r.target_id for r in records))}
    oracle = {}
    for c, group in itertools.groupby(sorted(records, key=lambda r: r.creator_id), key=lambda r: r.creator_id):
        group = list(group)
        oracle[c] = (len(group), len({r.method_id for r in group}),
                     Fraction(sum(by_target[r.target_id] for r in group), len(group)))
    ok = got == oracle and elapsed < 5
    report("profile traits", ok, f"{len(oracle)} creators over {len(records)} records exact, {elapsed:.2f}s (< 5s)")


def test_fuse_score_exact():
    rng = random.Random(4)
    frac = lambda: Fraction(rng.randrange(0, 10**6 + 1), 10**6)  # noqa: E731
    bad = 0
    for _ in range(1000):
        lam, a, b = frac(), frac(), frac()
        bad += fuse_score(a, b, lam) != lam * a + (1 - lam) * b
        bad += fuse_score(a, b, 1) != a
        bad += fuse_score(a, b, 0) != b
    report("fused score arithmetic", bad == 0, f"1000 triples plus endpoints, {bad} mismatches")


def test_ars_dynamics_100k():
    rng = random.Random(100_000)
    scores = [Fraction(rng.random()) for _ in range(100_000)]
    cfg = ArsConfig()
    t0 = time.perf_counter()
    gate = ArsGate(cfg)
    for s in scores:
        gate.evaluate(s)
    elapsed = time.perf_counter() - t0
    adaptive = [r for r in gate.trace if r.phase is Phase.ADAPTIVE]
    taus = [r.tau for r in adaptive]
    monotone = all(a <= b for a, b in zip(taus, taus[1:]))
    strict = all(r.score > r.tau for r in gate.trace if r.accepted)
    first, last = adaptive[:10_000], adaptive[-10_000:]
    rate = lambda rs: sum(r.accepted for r in rs) / len(rs)  # noqa: E731
    ok = monotone and strict and elapsed < 10 and rate(first) > rate(last)
    report("ARS dynamics", ok,
           f"tau non-decreasing={monotone}, accepted > tau={strict}, "
           f"rate {rate(first):.4f} -> {rate(last):.4f}, final tau {float(gate.state.tau):.4f}, "
           f"{elapsed:.2f}s (< 10s)")


def test_quantile_oracle():
    rng = random.Random(10_000)
    bad = 0
    for _ in range(10_000):
        values = [rng.randrange(1000) for _ in range(rng.randint(1, 1000))]
        ordered = sorted(values)
        n = len(values)
        q = Fraction(rng.randrange(0, 1001), 1000)
        for qq in (q, Fraction(0), Fraction(1)):
            k = max(1, -(-qq.numerator * n // qq.denominator))
            bad += quantile(values, qq) != ordered[k - 1]
        bad += quantile(values, 0) != ordered[0]
        bad += quantile(values, 1) != ordered[-1]
    report("quantile oracle", bad == 0, f"10000 multisets with q=0 and q=1 edges, {bad} mismatches")


def test_labeling_truth_table():
    table = {(1, Stance.ASSERTS_REAL): 1, (0, Stance.ASSERTS_FAKE): 1, (1, Stance.ASSERTS_FAKE): 0,
             (0, Stance.ASSERTS_REAL): 0, (1, Stance.NEUTRAL): 0, (0, Stance.NEUTRAL): 0}
    cases_ok = all(label_consistency(y, s).mismatch_flag == m for (y, s), m in table.items())
    rng = random.Random(6)
    complement_ok = True
    for _ in range(10_000):
        v = label_consistency(rng.choice((0, 1)), rng.choice(list(Stance)))
        complement_ok &= v.consistency == 1 - v.mismatch_flag
    report("labeling truth table", cases_ok and complement_ok,
           f"6 cases match={cases_ok}, consistency = 1 - mismatch over 10000 draws={complement_ok}")


def _draw_categories(toolbox, n=10_000):
    profile = AgentProfile("agent", 4, 2, Fraction(3), "neutral words", Fraction(2))
    counts = Counter()
    for seed in range(n):
        chain = sample_operator_chain(profile, toolbox, seed=seed, lengths={1: Fraction(1)})
        counts[toolbox.get(chain.op_ids[0]).category] += 1
    return counts


def test_operator_sampling_fidelity():
    toolbox = load_toolbox()
    counts = _draw_categories(toolbox)
    p = chisquare([counts[c] for c in Category]).pvalue
    zeroed = _draw_categories(Toolbox(toolbox.operators, {Category.STYLE_BASED_SYNTHESIS: 0}))
    ok = p > 0.01 and zeroed[Category.STYLE_BASED_SYNTHESIS] == 0
    report("operator sampling", ok,
           f"chi-square p={p:.4f} (> 0.01), zero-weight draws={zeroed[Category.STYLE_BASED_SYNTHESIS]}")


def test_auditor_hard_negatives(tmp_path):
    write_metadata(tmp_path / "meta.csv", random_table(120, 6, 25, seed=2))
    cfg = RunConfig(seed=3, metadata=str(tmp_path / "meta.csv"), n_real=50, n_forged=500)
    blueprints = run_phase1(cfg, Backends.stubs(3)).blueprints
    trajectories, samples = run_phase2(blueprints, cfg, Backends.stubs(3))
    events = [e for t in trajectories for e in t.events if e.role is Role.AUDITOR]
    real_ok = all(e.stance is Stance.ASSERTS_REAL for e in events)
    audit_samples = [s for s in samples if s.provenance.role == Role.AUDITOR.value]
    delta_ok = all(s.delta == 0 for s in audit_samples)
    ok = len(blueprints) == 500 and all(b.y == 1 for b in blueprints) and real_ok and delta_ok \
        and len(audit_samples) == len(events) > 0
    report("auditor hard negatives", ok,
           f"{len(blueprints)} blueprints, {len(events)} auditor events all asserting real={real_ok}, "
           f"{len(audit_samples)} samples all delta=0={delta_ok}")


def _desk_run(root, meta, halt_at=None):
    root.mkdir(parents=True)
    t0 = time.perf_counter()
    assert cli.main(["profile-extract", "--metadata", str(meta), "--out", str(root / "profiles.jsonl"),
                     "--seed", "5"]) == 0
    cfg = RunConfig(seed=5, profiles="profiles.jsonl", n_real=50, n_forged=200, output_dir="run")
    cfg.save(root / "config.json")
    conf = str(root / "config.json")
    if halt_at is not None:
        assert cli.main(["generate", "--config", conf, "--stub-backends", "--halt-at", str(halt_at)]) == 0
        assert cli.main(["generate", "--config", conf, "--stub-backends", "--resume",
                         str(root / "run/checkpoint.json")]) == 0
    else:
        assert cli.main(["generate", "--config", conf, "--stub-backends"]) == 0
    assert cli.main(["socialize", "--config", conf, "--stub-backends"]) == 0
    assert cli.main(["emit", "--config", conf, "--stub-backends"]) == 0
    return root / "run", time.perf_counter() - t0


@pytest.fixture(scope="module")
def desk_runs(tmp_path_factory):
    base = tmp_path_factory.mktemp("desk")
    write_metadata(base / "meta.csv", random_table(120, 6, 25, seed=8))
    first, t1 = _desk_run(base / "one", base / "meta.csv")
    second, t2 = _desk_run(base / "two", base / "meta.csv")
    iterations = int((first / "ars_trace.csv").read_text().count("\n")) - 1
    resumed, t3 = _desk_run(base / "three", base / "meta.csv", halt_at=iterations // 2)
    return first, second, resumed, (t1, t2, t3), iterations


def test_end_to_end_determinism(desk_runs):
    first, second, resumed, times, iterations = desk_runs
    m1, m2, m3 = ((d / "manifest.jsonl").read_bytes() for d in (first, second, resumed))
    counts = read_manifest(first / "manifest.jsonl").counts
    ok = m1 == m2 == m3 and counts["real"] == 50 and counts["blueprint"] == 200 and max(times) < 60
    report("end-to-end determinism", ok,
           f"rerun identical={m1 == m2}, resume at tick {iterations // 2} identical={m1 == m3}, "
           f"M={counts['M']} N={counts['N']}, slowest run {max(times):.1f}s (< 60s)")


def test_trajectory_shape(desk_runs):
    first = desk_runs[0]
    trajectories = read_trajectories(first / "trajectories.jsonl")
    cfg = RunConfig()
    size = cfg.social.roster_size
    shapes = Counter(len(t.events) for t in trajectories)
    ok = size == 6 and shapes == Counter({cfg.social.rounds * size: 200})
    report("trajectory shape", ok, f"default roster {size}, event counts per trajectory {dict(shapes)}")


SCALE_SCRIPT = """
import sys
from forgesim.pipeline import RunConfig, run_all
from forgesim.backends import Backends
cfg = RunConfig.load(sys.argv[1])
print(run_all(cfg, Backends.stubs(cfg.seed)).counts["total"])
"""


def test_scale_capability(tmp_path):
    write_metadata(tmp_path / "meta.csv", random_table(2000, 40, 300, seed=9))
    cfg = RunConfig(seed=9, metadata="meta.csv", n_real=17_000, n_forged=1_000, output_dir="run")
    cfg.save(tmp_path / "config.json")
    t0 = time.perf_counter()
    done = subprocess.run([sys.executable, "-c", SCALE_SCRIPT, str(tmp_path / "config.json")],
                          capture_output=True, text=True, timeout=15 * 60)
    elapsed = time.perf_counter() - t0
    peak_mb = resource.getrusage(resource.RUSAGE_CHILDREN).ru_maxrss / 1024
    assert done.returncode == 0, done.stderr
    manifest = read_manifest(tmp_path / "run/manifest.jsonl")  # verifies header counts against samples
    total = manifest.counts["total"]
    ok = total >= 25_000 and total == len(manifest.samples) and elapsed < 900 and peak_mb < 2048
    report("scale capability", ok,
           f"{total} samples (M={manifest.counts['M']}, N={manifest.counts['N']}), header verified on reload, "
           f"{elapsed:.0f}s (< 900s), peak RSS {peak_mb:.0f} MB (< 2048 MB)")
