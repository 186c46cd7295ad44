"""End-to-end orchestration: Phase 1 (generate, score, gate, remember),
Phase 2 (social trajectories and labeling) and manifest emission.

All randomness in Phase 1 is drawn from streams derived from
``(seed, tick)``, so a run is fully determined by its seed, its config and
the backends, and a checkpoint only needs the tick to restore the RNG.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from fractions import Fraction
from pathlib import Path
from typing import Any, Sequence

from .actions import (
    DEFAULT_CHAIN_LENGTHS,
    ForgeryBlueprint,
    Intent,
    OperatorChain,
    ScoreRecord,
    apply_chain,
    assemble_blueprint,
    chain_context,
    choose_intent,
    generate_description,
    sample_operator_chain,
)
from .ars import ArsConfig, ArsGate, ArsState, Decision, GateResult, Phase, score_candidate, write_trace
from .backends import Backends, CognitionRequest, CognitionTask, DetectorRequest
from .dataset import DatasetManifest, DatasetSample, read_samples, real_sample, write_manifest, write_samples
from .errors import ConfigError, CorruptCheckpoint, InsufficientData, InvalidInput, IterationCapExceeded
from .memory import MemoryKind, MemoryStore
from .profiles import AgentProfile, ProfileConfig, build_profiles, load_metadata, load_profiles, save_profiles
from .social import (
    SocialConfig,
    SocialTrajectory,
    blueprint_sample,
    build_sample_pairs,
    simulate_trajectory,
    write_trajectories,
)
from .toolbox import Category, Toolbox, load_lexicon, load_toolbox
from .util import canonical_json, derive_rng, derive_seed, frac_str, to_fraction

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "forgesim-checkpoint/1"
# Evaluative records shown to the agent when it scores its own candidate.
SELF_SCORE_MEMORY = 5

# Settings that change how a run executes but not what it produces.
_OPERATIONAL = {"output_dir", "backends", "workers", "checkpoint_every", "deterministic_mode"}
_PATH_KEYS = ("metadata", "profiles", "toolbox", "lexicon", "real_images")


@dataclass
class RunConfig:
    seed: int = 0
    metadata: str | None = None
    profiles: str | None = None
    max_agents: int | None = None
    toolbox: str | None = None
    lexicon: str | None = None
    ars: ArsConfig = field(default_factory=ArsConfig)
    social: SocialConfig = field(default_factory=SocialConfig)
    n_real: int = 0
    n_forged: int = 0
    real_images: str | None = None
    reflection_every: int = 5
    reflection_window: int = 10
    misleading_prob: Fraction = Fraction(1, 2)
    chain_lengths: dict[int, Fraction] = field(default_factory=lambda: dict(DEFAULT_CHAIN_LENGTHS))
    iteration_cap: int | None = None
    style_sample_size: int = 5
    output_dir: str = "run"
    deterministic_mode: bool = True
    workers: int = 1
    checkpoint_every: int | None = None
    backends: Any = None

    def __post_init__(self):
        self.misleading_prob = to_fraction(self.misleading_prob)
        self.chain_lengths = {int(k): to_fraction(v) for k, v in self.chain_lengths.items()}
        if self.n_real < 0 or self.n_forged < 0:
            raise ConfigError("target counts must be >= 0")
        if not 0 <= self.misleading_prob <= 1:
            raise ConfigError("misleading_prob must be in [0, 1]")
        if self.reflection_every < 1 or self.reflection_window < 1:
            raise ConfigError("reflection cadence and window must be >= 1")
        if (not self.chain_lengths or any(k < 1 for k in self.chain_lengths)
                or any(v < 0 for v in self.chain_lengths.values()) or sum(self.chain_lengths.values()) != 1):
            raise ConfigError("chain_lengths must map lengths >= 1 to probabilities summing to 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.iteration_cap is not None and self.iteration_cap < 0:
            raise ConfigError("iteration_cap must be >= 0")

    @property
    def cap(self) -> int:
        return self.iteration_cap if self.iteration_cap is not None else 50 * self.n_forged

    @property
    def max_chain_length(self) -> int:
        return max(self.chain_lengths)

    def to_dict(self) -> dict:
        d: dict[str, Any] = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, (ArsConfig, SocialConfig)):
                v = v.to_dict()
            elif isinstance(v, Fraction):
                v = frac_str(v)
            elif f.name == "chain_lengths":
                v = {str(k): frac_str(p) for k, p in sorted(v.items())}
            d[f.name] = v
        return d

    @classmethod
    def from_dict(cls, data: dict, base_dir: str | Path | None = None) -> RunConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kw = dict(data)
        try:
            if "ars" in kw:
                kw["ars"] = ArsConfig.from_dict(kw["ars"])
            if "social" in kw:
                kw["social"] = SocialConfig.from_dict(kw["social"])
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from exc
        if base_dir is not None:
            for key in (*_PATH_KEYS, "output_dir"):
                if kw.get(key):
                    kw[key] = str(Path(base_dir, kw[key]))
        try:
            return cls(**kw)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path: str | Path) -> RunConfig:
        path = Path(path)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(data, base_dir=path.parent)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    def validate_paths(self) -> None:
        for key in _PATH_KEYS:
            value = getattr(self, key)
            if value and not Path(value).exists():
                raise ConfigError(f"{key}: {value} does not exist")
        if not self.metadata and not self.profiles:
            raise ConfigError("config needs 'metadata' or 'profiles'")

    def digest(self) -> str:
        """Content digest: referenced files count by content, not by path."""
        d = {k: v for k, v in self.to_dict().items() if k not in _OPERATIONAL}
        for key in _PATH_KEYS:
            if d.get(key):
                d[key] = hashlib.sha256(Path(d[key]).read_bytes()).hexdigest()
        return hashlib.sha256(canonical_json(d).encode("utf-8")).hexdigest()

    @property
    def out(self) -> RunPaths:
        return RunPaths(Path(self.output_dir))


class RunPaths:
    """Artifact locations inside a run's output directory."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.profiles = self.root / "profiles.jsonl"
        self.blueprints = self.root / "blueprints.jsonl"
        self.ars_trace = self.root / "ars_trace.csv"
        self.ars_state = self.root / "ars_state.json"
        self.memory = self.root / "memory.jsonl"
        self.reflections = self.root / "reflections.jsonl"
        self.checkpoint = self.root / "checkpoint.json"
        self.trajectories = self.root / "trajectories.jsonl"
        self.samples = self.root / "social_samples.jsonl"
        self.manifest = self.root / "manifest.jsonl"


# inputs


def real_image_refs(cfg: RunConfig) -> list[str]:
    if cfg.real_images:
        refs = [line.strip() for line in Path(cfg.real_images).read_text(encoding="utf-8").splitlines()]
        refs = [r for r in refs if r]
        return refs
    return [f"xreal/{j:06d}.png" for j in range(1, cfg.n_real + 1)]


def resolve_profiles(cfg: RunConfig, backends: Backends) -> list[AgentProfile]:
    if cfg.profiles:
        profiles = load_profiles(cfg.profiles)
    else:
        records = load_metadata(cfg.metadata)
        profiles = build_profiles(records, ProfileConfig(cfg.style_sample_size, cfg.seed), backends.cognition)
    if cfg.max_agents is not None:
        keep = sorted(profiles, key=lambda p: (-p.freq, p.agent_id))[: cfg.max_agents]
        profiles = [p for p in profiles if p in keep]
    if not profiles:
        raise ConfigError("no agent profiles available")
    return profiles


# phase 1


@dataclass(frozen=True)
class Candidate:
    tick: int
    agent_id: str
    source: str
    chain: OperatorChain
    result: str
    intent: Intent
    description: str
    s_llm: Fraction
    s_disc: Fraction


@dataclass
class Phase1Result:
    blueprints: list[ForgeryBlueprint]
    state: ArsState
    trace: list[GateResult]
    memory: MemoryStore
    iterations: int

    @property
    def acceptance_rate(self) -> float:
        return len(self.blueprints) / self.iterations if self.iterations else 0.0


class Phase1Runner:
    """Iterates generate -> score -> gate -> remember until N blueprints are accepted."""

    def __init__(
        self,
        cfg: RunConfig,
        backends: Backends,
        profiles: Sequence[AgentProfile],
        real_refs: Sequence[str],
        toolbox: Toolbox | None = None,
        lexicon: dict[Category, tuple[str, ...]] | None = None,
    ):
        if not profiles:
            raise ConfigError("phase 1 needs at least one agent profile")
        self.cfg = cfg
        self.backends = backends
        self.profiles = list(profiles)
        self.real_refs = list(real_refs)
        self.toolbox = toolbox or load_toolbox(cfg.toolbox)
        self.lexicon = lexicon if lexicon is not None else load_lexicon(cfg.lexicon)
        self.tick = 0
        self.gate = ArsGate(cfg.ars)
        self.memory = MemoryStore()
        self.blueprints: list[ForgeryBlueprint] = []

    # one iteration, split so throughput mode can propose in parallel

    def _propose(self, tick: int) -> Candidate:
        cfg = self.cfg
        agent = self.profiles[(tick - 1) % len(self.profiles)]
        rng = derive_rng(cfg.seed, "phase1", tick)
        source = self.real_refs[rng.randrange(len(self.real_refs))]
        chain = sample_operator_chain(
            agent, self.toolbox, self.memory, derive_seed(cfg.seed, "chain", tick),
            lengths=cfg.chain_lengths, lexicon=self.lexicon,
        )
        result = apply_chain(source, chain, self.backends.editor)
        intent = choose_intent(rng, cfg.misleading_prob)
        ctx = chain_context(source, result, chain, self.toolbox)
        description = generate_description(ctx, intent, self.backends.cognition)
        recent = [r.payload for r in self.memory.retrieve(agent.agent_id, MemoryKind.EVALUATIVE, SELF_SCORE_MEMORY)]
        s_llm = self.backends.cognition.call(
            CognitionRequest(
                CognitionTask.SELF_SCORE,
                {
                    "agent_id": agent.agent_id,
                    "image_ref": result,
                    "description": description,
                    "memory": recent,
                    "guidance": self.memory.latest_guidance(agent.agent_id),
                },
            )
        ).score
        s_disc = self.backends.detector.call(DetectorRequest(result)).forgery_confidence
        return Candidate(tick, agent.agent_id, source, chain, result, intent, description, s_llm, s_disc)

    def _commit(self, c: Candidate) -> GateResult:
        score = score_candidate(c.s_llm, c.s_disc, self.cfg.ars)
        gate = self.gate.evaluate(score.fused)
        bp = assemble_blueprint(
            c.source, c.result, c.chain, c.description, c.intent, c.agent_id, c.tick,
            blueprint_id=f"bp-{c.tick:08d}",
            scores=ScoreRecord(score.s_llm, score.s_disc, score.fused, gate.tau, gate.is_challenge),
        )
        self.memory.write(c.agent_id, MemoryKind.FACTUAL, {
            "blueprint_id": bp.blueprint_id,
            "source_image_ref": c.source,
            "result_image_ref": c.result,
            "plan": {"chain": c.chain.to_list(), "intent": c.intent.value},
            "description": c.description,
        }, tick=c.tick)
        self.memory.write(c.agent_id, MemoryKind.EVALUATIVE, {
            "blueprint_id": bp.blueprint_id,
            "decision": gate.decision.value,
            "s_llm": frac_str(score.s_llm),
            "s_disc": frac_str(score.s_disc),
            "fused": frac_str(score.fused),
            "tau": frac_str(gate.tau),
            "is_challenge": gate.is_challenge,
            "op_preferences": {s.op_id: s.params for s in c.chain.steps} if gate.accepted else {},
        }, tick=c.tick)
        if gate.accepted:
            self.blueprints.append(bp)
        if c.tick % self.cfg.reflection_every == 0:
            self._reflect(c.tick)
        self.tick = c.tick
        return gate

    def _reflect(self, tick: int) -> None:
        for p in self.profiles:
            try:
                self.memory.reflect(p.agent_id, self.cfg.reflection_window, self.backends.cognition, tick)
            except InsufficientData:
                pass  # agent has not acted yet

    def step(self) -> GateResult:
        return self._commit(self._propose(self.tick + 1))

    @property
    def done(self) -> bool:
        return len(self.blueprints) >= self.cfg.n_forged

    def _check_cap(self) -> None:
        if self.tick >= self.cfg.cap:
            raise IterationCapExceeded(
                f"accepted {len(self.blueprints)}/{self.cfg.n_forged} blueprints in {self.tick} iterations",
                iterations=self.tick, accepted=len(self.blueprints), target=self.cfg.n_forged,
            )

    def run(self, *, halt_at: int | None = None, checkpoint_path: str | Path | None = None) -> Phase1Result:
        """Run to completion, or until tick ``halt_at`` (a checkpoint is written there)."""
        if not self.done and not self.real_refs:
            raise ConfigError("phase 1 needs real image references")
        every = self.cfg.checkpoint_every
        parallel = not self.cfg.deterministic_mode and self.cfg.workers > 1
        pool = ThreadPoolExecutor(self.cfg.workers) if parallel else None
        try:
            while not self.done:
                if halt_at is not None and self.tick >= halt_at:
                    break
                self._check_cap()
                if pool is None:
                    ticks = [self.tick + 1]
                    candidates = [self._propose(ticks[0])]
                else:
                    last = min(self.tick + self.cfg.workers, self.cfg.cap)
                    ticks = list(range(self.tick + 1, last + 1))
                    candidates = list(pool.map(self._propose, ticks))
                for cand in candidates:
                    if self.done:
                        break
                    self._commit(cand)
                    if checkpoint_path and every and self.tick % every == 0:
                        self.checkpoint(checkpoint_path)
        finally:
            if pool is not None:
                pool.shutdown()
        if checkpoint_path and (halt_at is not None or every):
            self.checkpoint(checkpoint_path)
        return self.result()

    def result(self) -> Phase1Result:
        return Phase1Result(list(self.blueprints), self.gate.state, list(self.gate.trace), self.memory, self.tick)

    # checkpointing

    def _checkpoint_body(self) -> dict:
        return {
            "config_digest": self.cfg.digest(),
            "tick": self.tick,
            "rng": {"scheme": "derived-per-tick", "seed": self.cfg.seed, "next_tick": self.tick + 1},
            "ars": self.gate.state.to_dict(),
            "trace": [_trace_to_list(r) for r in self.gate.trace],
            "memory": self.memory.snapshot(),
            "emitted": len(self.blueprints),
            "blueprints": [b.to_dict() for b in self.blueprints],
        }

    def checkpoint(self, path: str | Path) -> dict:
        body = self._checkpoint_body()
        doc = {"format": CHECKPOINT_FORMAT, "digest": _body_digest(body), "body": body}
        tmp = Path(str(path) + ".tmp")
        tmp.write_text(json.dumps(doc, ensure_ascii=False), encoding="utf-8")
        os.replace(tmp, path)
        return doc

    def restore(self, path: str | Path) -> None:
        body = load_checkpoint(path)
        if body["config_digest"] != self.cfg.digest():
            raise ConfigError("checkpoint was written under a different config")
        try:
            self.tick = int(body["tick"])
            self.gate = ArsGate(self.cfg.ars, ArsState.from_dict(body["ars"]),
                                [_trace_from_list(r) for r in body["trace"]])
            self.memory = MemoryStore.from_snapshot(body["memory"])
            self.blueprints = [ForgeryBlueprint.from_dict(b) for b in body["blueprints"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise CorruptCheckpoint(f"{path}: {exc}") from exc
        if len(self.blueprints) != body["emitted"]:
            raise CorruptCheckpoint(f"{path}: blueprint count mismatch")


def _body_digest(body: dict) -> str:
    return hashlib.sha256(canonical_json(body).encode("utf-8")).hexdigest()


def load_checkpoint(path: str | Path) -> dict:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        body, stored = doc["body"], doc["digest"]
        fmt = doc["format"]
    except (OSError, UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise CorruptCheckpoint(f"unreadable checkpoint {path}: {exc}") from exc
    if fmt != CHECKPOINT_FORMAT:
        raise CorruptCheckpoint(f"{path}: unknown format {fmt!r}")
    if _body_digest(body) != stored:
        raise CorruptCheckpoint(f"{path}: digest mismatch")
    return body


def _trace_to_list(r: GateResult) -> list:
    return [r.n_seen, r.phase.value, frac_str(r.tau), r.decision.value, frac_str(r.score), r.is_challenge]


def _trace_from_list(x: list) -> GateResult:
    return GateResult(Decision(x[3]), int(x[0]), Phase(x[1]), to_fraction(x[2]), to_fraction(x[4]), bool(x[5]))


def run_phase1(cfg: RunConfig, backends: Backends, *, profiles: Sequence[AgentProfile] | None = None,
               real_refs: Sequence[str] | None = None) -> Phase1Result:
    profiles = profiles if profiles is not None else resolve_profiles(cfg, backends)
    real_refs = real_refs if real_refs is not None else real_image_refs(cfg)
    return Phase1Runner(cfg, backends, profiles, real_refs).run()


# phase 2


def run_phase2(
    blueprints: Sequence[ForgeryBlueprint], cfg: RunConfig, backends: Backends
) -> tuple[list[SocialTrajectory], list[DatasetSample]]:
    """One trajectory per blueprint; trajectories are independent, so they are
    computed in parallel when ``workers > 1`` and merged in input order."""
    if not blueprints:
        raise InsufficientData("phase 2 needs at least one blueprint")

    def one(bp: ForgeryBlueprint) -> tuple[SocialTrajectory, list[DatasetSample]]:
        traj = simulate_trajectory(bp, cfg.social, backends.cognition, cfg.seed)
        return traj, build_sample_pairs(bp, traj)

    if cfg.workers > 1:
        with ThreadPoolExecutor(cfg.workers) as pool:
            results = list(pool.map(one, blueprints))
    else:
        results = [one(bp) for bp in blueprints]
    trajectories = [t for t, _ in results]
    samples = [s for _, ss in results for s in ss]
    return trajectories, samples


# output


def build_real_samples(real_refs: Sequence[str], backends: Backends) -> list[DatasetSample]:
    out = []
    for j, ref in enumerate(real_refs, 1):
        caption = backends.cognition.call(CognitionRequest(CognitionTask.DESCRIBE, {"image_ref": ref})).text.strip()
        out.append(real_sample(j, ref, caption or "(no caption)"))
    return out


def emit_dataset(
    forged_samples: Sequence[DatasetSample],
    real_samples: Sequence[DatasetSample],
    output_path: str | Path,
    *,
    seed: int | None = None,
    config_digest: str | None = None,
) -> DatasetManifest:
    return write_manifest(output_path, [*real_samples, *forged_samples], seed=seed, config_digest=config_digest)


def write_blueprints(path: str | Path, blueprints: Sequence[ForgeryBlueprint]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for b in blueprints:
            fh.write(json.dumps(b.to_dict(), ensure_ascii=False) + "\n")


def read_blueprints(path: str | Path) -> list[ForgeryBlueprint]:
    try:
        with open(path, encoding="utf-8") as fh:
            return [ForgeryBlueprint.from_dict(json.loads(line)) for line in fh if line.strip()]
    except (OSError, json.JSONDecodeError) as exc:
        raise InvalidInput(f"cannot read blueprints {path}: {exc}") from exc


def save_phase1(cfg: RunConfig, result: Phase1Result) -> None:
    out = cfg.out
    out.root.mkdir(parents=True, exist_ok=True)
    write_blueprints(out.blueprints, result.blueprints)
    write_trace(out.ars_trace, result.trace)
    out.ars_state.write_text(json.dumps({
        **result.state.to_dict(), "iterations": result.iterations, "accepted": len(result.blueprints),
    }) + "\n", encoding="utf-8")
    result.memory.save(out.memory)
    result.memory.save_reflections(out.reflections)


# stage entry points used by the CLI


def generate(cfg: RunConfig, backends: Backends, *, resume: str | Path | None = None,
             halt_at: int | None = None) -> Phase1Result:
    cfg.validate_paths()
    out = cfg.out
    out.root.mkdir(parents=True, exist_ok=True)
    profiles = resolve_profiles(cfg, backends)
    if not cfg.profiles:
        save_profiles(out.profiles, profiles)
    runner = Phase1Runner(cfg, backends, profiles, real_image_refs(cfg))
    if resume:
        runner.restore(resume)
    wants_ckpt = halt_at is not None or cfg.checkpoint_every
    result = runner.run(halt_at=halt_at, checkpoint_path=out.checkpoint if wants_ckpt else None)
    if halt_at is None or runner.done:
        save_phase1(cfg, result)
        for stale in (out.trajectories, out.samples):
            stale.unlink(missing_ok=True)
    return result


def socialize(cfg: RunConfig, backends: Backends) -> tuple[list[SocialTrajectory], list[DatasetSample]]:
    out = cfg.out
    if not out.blueprints.exists():
        raise ConfigError(f"{out.blueprints} not found; run generate first")
    trajectories, samples = run_phase2(read_blueprints(out.blueprints), cfg, backends)
    write_trajectories(out.trajectories, trajectories)
    write_samples(out.samples, samples)
    return trajectories, samples


def emit(cfg: RunConfig, backends: Backends) -> DatasetManifest:
    out = cfg.out
    out.root.mkdir(parents=True, exist_ok=True)
    if out.samples.exists():
        forged = read_samples(out.samples)
    elif out.blueprints.exists():
        forged = [blueprint_sample(b) for b in read_blueprints(out.blueprints)]
    else:
        forged = []
    reals = build_real_samples(real_image_refs(cfg)[: cfg.n_real], backends)
    return emit_dataset(forged, reals, out.manifest, seed=cfg.seed, config_digest=cfg.digest())


def run_all(cfg: RunConfig, backends: Backends) -> DatasetManifest:
    """generate + socialize + emit."""
    result = generate(cfg, backends)
    if result.blueprints:
        socialize(cfg, backends)
    return emit(cfg, backends)
