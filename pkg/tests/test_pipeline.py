import json
from fractions import Fraction

import pytest

from conftest import Recording, make_run_config
from forgesim.ars import ArsConfig, Phase, read_trace
from forgesim.backends import Backends
from forgesim.dataset import read_manifest, tally
from forgesim.errors import ConfigError, CorruptCheckpoint, InsufficientData, IterationCapExceeded
from forgesim.memory import MemoryKind
from forgesim.pipeline import (
    Phase1Runner,
    RunConfig,
    emit,
    generate,
    read_blueprints,
    real_image_refs,
    resolve_profiles,
    run_all,
    run_phase1,
    run_phase2,
    socialize,
)
from forgesim.social import Role, SocialConfig, TEXT_ACTIONS, read_trajectories


def runner_for(cfg, seed=7):
    backends = Backends.stubs(seed)
    return Phase1Runner(cfg, backends, resolve_profiles(cfg, backends), real_image_refs(cfg))


def test_phase1_accepts_exactly_n(run_config):
    cfg = run_config(n_forged=20)
    result = run_phase1(cfg, Backends.stubs(7))
    assert len(result.blueprints) == 20
    assert result.iterations == len(result.trace) >= 20
    assert result.blueprints == run_phase1(cfg, Backends.stubs(7)).blueprints
    for bp in result.blueprints:
        assert bp.scores.fused > bp.scores.tau
        assert bp.delta == (1 if bp.action.intent.value == "accurate" else 0)
    assert len({bp.blueprint_id for bp in result.blueprints}) == 20


def test_generate_replays_byte_identically(tmp_path):
    a = make_run_config(tmp_path / "a")
    b = make_run_config(tmp_path / "b")
    generate(a, Backends.stubs(7))
    generate(b, Backends.stubs(7))
    for name in ("blueprints.jsonl", "ars_trace.csv", "memory.jsonl", "profiles.jsonl"):
        assert (tmp_path / "a/run" / name).read_bytes() == (tmp_path / "b/run" / name).read_bytes(), name


def test_memory_written_each_iteration(run_config):
    result = run_phase1(run_config(n_forged=5), Backends.stubs(7))
    assert len(result.memory) == 2 * result.iterations
    for agent in result.memory.agents():
        kinds = [r.kind for r in result.memory.records(agent)]
        assert kinds == [MemoryKind.FACTUAL, MemoryKind.EVALUATIVE] * (len(kinds) // 2)


def test_reflection_cadence(run_config):
    cfg = run_config(n_forged=10**6, iteration_cap=15, reflection_every=5, max_agents=3)
    runner = runner_for(cfg)
    for _ in range(15):
        runner.step()
    for p in runner.profiles:
        summaries = runner.memory.reflections(p.agent_id)
        assert [s.produced_at for s in summaries] == [5, 10, 15]


def test_guidance_reaches_self_scoring(run_config):
    cfg = run_config(n_forged=10**6, reflection_every=2, max_agents=1)
    backends = Backends.stubs(7)
    backends.cognition = Recording(backends.cognition)
    runner = Phase1Runner(cfg, backends, resolve_profiles(cfg, backends), real_image_refs(cfg))
    for _ in range(3):
        runner.step()
    scored = [r for r in backends.cognition.requests if r.task.value == "self_score"]
    assert scored[0].context["guidance"] is None
    assert scored[2].context["guidance"] == runner.memory.reflections()[0].guidance_text
    assert len(scored[2].context["memory"]) == 2


def test_degenerate_threshold_hits_cap(run_config):
    cfg = run_config(ars=ArsConfig(tau_warmup=Fraction(1), n_warmup=1000), iteration_cap=100)
    with pytest.raises(IterationCapExceeded) as err:
        run_phase1(cfg, Backends.stubs(7))
    assert err.value.accepted == 0 and err.value.iterations == 100
    assert err.value.acceptance_rate == 0


def test_zero_target_is_immediate(run_config):
    result = run_phase1(run_config(n_forged=0), Backends.stubs(7))
    assert result.blueprints == [] and result.iterations == 0


def test_checkpoint_splice_matches_uninterrupted(run_config, tmp_path):
    cfg = run_config(n_forged=10**6, iteration_cap=20)
    full = runner_for(cfg)
    for _ in range(20):
        full.step()

    first = runner_for(cfg)
    for _ in range(10):
        first.step()
    ckpt = tmp_path / "ck.json"
    first.checkpoint(ckpt)

    resumed = runner_for(cfg)
    resumed.restore(ckpt)
    assert resumed.tick == 10
    for _ in range(10):
        resumed.step()
    assert resumed.blueprints == full.blueprints
    assert resumed.gate.trace == full.gate.trace
    assert resumed.gate.state == full.gate.state
    assert resumed.memory.snapshot() == full.memory.snapshot()


def test_fresh_checkpoint_resumes_full_run(run_config, tmp_path):
    cfg = run_config(n_forged=8)
    ckpt = tmp_path / "fresh.json"
    runner_for(cfg).checkpoint(ckpt)
    resumed = runner_for(cfg)
    resumed.restore(ckpt)
    assert resumed.run().blueprints == run_phase1(cfg, Backends.stubs(7)).blueprints


def test_tampered_checkpoint_rejected(run_config, tmp_path):
    cfg = run_config(n_forged=5)
    runner = runner_for(cfg)
    runner.run(halt_at=4, checkpoint_path=tmp_path / "ck.json")
    doc = json.loads((tmp_path / "ck.json").read_text())
    doc["body"]["tick"] = 3
    (tmp_path / "ck.json").write_text(json.dumps(doc))
    with pytest.raises(CorruptCheckpoint):
        runner_for(cfg).restore(tmp_path / "ck.json")
    (tmp_path / "ck.json").write_text("{not json")
    with pytest.raises(CorruptCheckpoint):
        runner_for(cfg).restore(tmp_path / "ck.json")


def test_checkpoint_from_other_config_rejected(run_config, tmp_path):
    runner = runner_for(run_config(n_forged=5))
    runner.run(halt_at=3, checkpoint_path=tmp_path / "ck.json")
    with pytest.raises(ConfigError):
        runner_for(run_config(n_forged=5, seed=8)).restore(tmp_path / "ck.json")


def test_phase2_counts(run_config):
    cfg = run_config(n_forged=20)
    blueprints = run_phase1(cfg, Backends.stubs(7)).blueprints
    trajectories, samples = run_phase2(blueprints, cfg, Backends.stubs(7))
    assert len(trajectories) == 20
    assert all(len(t.events) == 12 for t in trajectories)
    expected = sum(1 + sum(e.action in TEXT_ACTIONS for e in t.events) for t in trajectories)
    assert len(samples) == expected
    with pytest.raises(InsufficientData):
        run_phase2([], cfg, Backends.stubs(7))


def test_phase2_parallel_matches_serial(run_config):
    cfg = run_config(n_forged=10)
    blueprints = run_phase1(cfg, Backends.stubs(7)).blueprints
    serial = run_phase2(blueprints, cfg, Backends.stubs(7))
    cfg.workers = 4
    assert run_phase2(blueprints, cfg, Backends.stubs(7)) == serial


def test_throughput_mode_still_meets_target(run_config):
    cfg = run_config(n_forged=15, deterministic_mode=False, workers=4)
    result = run_phase1(cfg, Backends.stubs(7))
    assert len(result.blueprints) == 15
    assert [r.n_seen for r in result.trace] == list(range(1, result.iterations + 1))


def test_end_to_end_manifest(run_config):
    cfg = run_config(n_real=10, n_forged=20)
    manifest = run_all(cfg, Backends.stubs(7))
    counts = manifest.counts
    assert counts["M"] == 10 and counts["blueprint"] == 20
    assert counts["total"] == 30 + counts["social"]
    again = read_manifest(cfg.out.manifest)
    assert again.counts == tally(again.samples) == counts
    first = cfg.out.manifest.read_bytes()
    emit(cfg, Backends.stubs(7))
    assert cfg.out.manifest.read_bytes() == first
    traj = read_trajectories(cfg.out.trajectories)
    assert len(traj) == 20


def test_empty_run_manifest(run_config):
    cfg = run_config(n_real=0, n_forged=0)
    manifest = run_all(cfg, Backends.stubs(7))
    assert manifest.samples == []
    assert manifest.counts["M"] == manifest.counts["N"] == 0
    assert len(cfg.out.manifest.read_text().splitlines()) == 1


def test_emit_without_socialize_uses_blueprints(run_config):
    cfg = run_config(n_real=3, n_forged=4)
    generate(cfg, Backends.stubs(7))
    m = emit(cfg, Backends.stubs(7))
    assert m.counts == {**m.counts, "M": 3, "N": 4, "social": 0, "total": 7}


def test_generate_clears_stale_phase2(run_config):
    cfg = run_config(n_forged=3)
    generate(cfg, Backends.stubs(7))
    socialize(cfg, Backends.stubs(7))
    generate(cfg, Backends.stubs(7))
    assert not cfg.out.trajectories.exists()


def test_socialize_requires_blueprints(run_config):
    with pytest.raises(ConfigError):
        socialize(run_config(), Backends.stubs(7))


def test_config_file_roundtrip(tmp_path):
    cfg = make_run_config(tmp_path, social=SocialConfig(roster=(Role.CRITIC, Role.AUDITOR), rounds=3))
    path = tmp_path / "cfg.json"
    cfg.save(path)
    loaded = RunConfig.load(path)
    assert loaded.to_dict() == cfg.to_dict()
    assert loaded.digest() == cfg.digest()
    data = json.loads(path.read_text())
    data["metadata"] = "metadata.csv"  # relative to the config file
    data["workers"] = 3  # operational, not part of the digest
    path.write_text(json.dumps(data))
    assert RunConfig.load(path).digest() == cfg.digest()
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"nonsense": 1})
    with pytest.raises(ConfigError):
        RunConfig(chain_lengths={1: Fraction(1, 2)})


def test_missing_inputs(tmp_path):
    with pytest.raises(ConfigError):
        generate(RunConfig(metadata=str(tmp_path / "nope.csv"), n_forged=1), Backends.stubs(0))
    with pytest.raises(ConfigError):
        generate(RunConfig(n_forged=1, output_dir=str(tmp_path / "o")), Backends.stubs(0))


def test_trace_file_matches_gate(run_config):
    cfg = run_config(n_forged=5)
    result = generate(cfg, Backends.stubs(7))
    rows = read_trace(cfg.out.ars_trace)
    assert len(rows) == result.iterations
    assert rows[-1].tau == result.trace[-1].tau
    assert {r.phase for r in rows} <= {Phase.WARMUP, Phase.ADAPTIVE}


@pytest.mark.parametrize("seed", range(12))
def test_both_consistency_values_present(tmp_path, seed):
    # with misleading probability 1/2 and N=10, an all-equal draw has probability 2**-9
    cfg = make_run_config(tmp_path, seed=seed, n_forged=10)
    deltas = {bp.delta for bp in run_phase1(cfg, Backends.stubs(seed)).blueprints}
    assert deltas == {0, 1}
