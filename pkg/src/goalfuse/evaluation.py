"""Evaluation harness: dataset pairs x methods x ablations x d-thresholds.

For every grid cell the harness truncates each pair's trajectory at the
progress threshold, builds the method's object probability map (semantic,
physical, or their fusion), records whether the ground-truth object lands
in the top-5, predicts the action at the top-1 object and scores it by
embedding cosine similarity plus a binary LLM judge. Trials repeat the
protocol and cells hold the averages.
"""

from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Protocol, Sequence

import numpy as np

from .errors import (
    ContractError,
    ProtocolError,
    RequestError,
    TransportError,
    ValidationError,
)
from .fusion import ObjectProbabilityMap, Telemetry, fuse, top_k
from .llm import (
    AblationMode,
    HeuristicLlmClient,
    LlmClient,
    LlmEndpointConfig,
    SceneContext,
    judge_action,
    predict_action,
    predict_target_ranks,
    request_json,
)
from .predictor import GeometricGoalPredictor, GoalPredictor, object_probabilities
from .scene import Scene, load_scene
from .trajectory import Trajectory, load_trajectory

METHODS = ("llm", "trajectory", "fused")

# transport-level failures that invalidate a trial cell instead of crashing
_TRANSPORT_ERRORS = (TransportError, RequestError, ProtocolError)


@dataclass(frozen=True)
class Scenario:
    """A hand-authored daily-action situation, independent of any scene."""

    id: str
    day_time: str
    persona: str
    start_location: tuple[float, float]
    gt_target_object: str
    gt_action: str
    action_history: tuple[str, ...] = ()
    conversation: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "start_location", tuple(self.start_location))
        object.__setattr__(self, "action_history", tuple(self.action_history))
        object.__setattr__(self, "conversation", tuple(self.conversation))
        if not self.gt_action:
            raise ValidationError(f"scenario {self.id!r}: gt_action is empty")


def load_scenario(path: str | Path) -> Scenario:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    try:
        return Scenario(
            id=doc["id"],
            day_time=doc["day_time"],
            persona=doc["persona"],
            start_location=tuple(doc["start_location"]),
            gt_target_object=doc["gt_target_object"],
            gt_action=doc["gt_action"],
            action_history=tuple(doc.get("action_history", ())),
            conversation=tuple(doc.get("conversation", ())),
        )
    except KeyError as exc:
        raise ValidationError(f"{path}: missing scenario field {exc}") from exc


def save_scenario(scenario: Scenario, path: str | Path) -> None:
    doc = {
        "id": scenario.id,
        "day_time": scenario.day_time,
        "persona": scenario.persona,
        "start_location": list(scenario.start_location),
        "gt_target_object": scenario.gt_target_object,
        "gt_action": scenario.gt_action,
        "action_history": list(scenario.action_history),
        "conversation": list(scenario.conversation),
        "origin": "original-synthetic",
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


@dataclass(frozen=True)
class EvalPair:
    scenario: Scenario
    scene: Scene
    trajectory: Trajectory

    def __post_init__(self):
        if self.scenario.gt_target_object not in self.scene.labels:
            raise ValidationError(
                f"pair ({self.scenario.id}, {self.scene.name}): ground-truth "
                f"object {self.scenario.gt_target_object!r} is not in the scene"
            )


def scene_context_for(scenario: Scenario, scene: Scene) -> SceneContext:
    """Bind a scenario's text to a concrete scene's object list."""
    x, y = scenario.start_location
    return SceneContext(
        day_time=scenario.day_time,
        persona=scenario.persona,
        location=f"standing near ({x:.1f} m, {y:.1f} m)",
        action_history=scenario.action_history,
        conversation=scenario.conversation,
        object_list=scene.labels,
    )


# ---------------------------------------------------------------------------
# trajectory gating


def truncate_at_progress(
    traj: Trajectory,
    d: float,
    telemetry: Telemetry | None = None,
) -> Trajectory:
    """Shortest prefix whose progress equals ``d`` exactly.

    The final sample is linearly interpolated onto the cut point. When the
    whole trajectory is shorter than ``d`` it is returned unchanged and a
    saturation flag is raised. ``d == 0`` yields a 2-sample stationary stub.
    """
    if d < 0:
        raise ContractError(f"d must be >= 0, got {d}")
    pts = traj.samples
    deltas = np.diff(pts[:, 1:], axis=0)
    seg = np.hypot(deltas[:, 0], deltas[:, 1])
    cum = np.concatenate(([0.0], np.cumsum(seg)))
    total = float(cum[-1])
    if total < d:
        if telemetry is not None:
            telemetry.flag("truncation_saturated")
        return traj
    if d == 0.0:
        t0, x0, y0 = pts[0]
        return Trajectory(samples=np.array([[t0, x0, y0], [t0 + 1e-6, x0, y0]]))
    i = int(np.searchsorted(cum, d))
    if cum[i] == d:
        return Trajectory(samples=pts[: i + 1].copy())
    frac = (d - cum[i - 1]) / (cum[i] - cum[i - 1])
    cut = pts[i - 1] + frac * (pts[i] - pts[i - 1])
    return Trajectory(samples=np.vstack((pts[:i], cut)))


def top5_hit(p: Mapping[str, float], gt: str, k: int = 5) -> int:
    if gt not in p:
        raise ContractError(f"ground truth {gt!r} is not in the probability map")
    return 1 if gt in top_k(p, k) else 0


# ---------------------------------------------------------------------------
# action-text similarity


def cosine_similarity(u: np.ndarray, v: np.ndarray) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ContractError(f"dimension mismatch: {u.shape} vs {v.shape}")
    uu, vv = float(u @ u), float(v @ v)
    if uu == 0.0 or vv == 0.0:
        raise ContractError("cosine similarity of a zero vector is undefined")
    # sqrt(uu * vv) keeps cos(u, u) exactly 1.0 in round-to-nearest
    return float(min(1.0, max(-1.0, float(u @ v) / math.sqrt(uu * vv))))


class Embedder(Protocol):
    def embed(self, text: str) -> np.ndarray: ...

    def describe(self) -> str: ...


class LocalHashingEmbedder:
    """Signed character-3-gram feature hashing into a unit vector.

    Deterministic and offline; a coarse but order-sensitive stand-in for a
    sentence-embedding model. Text is lowercased and whitespace-collapsed
    before hashing.
    """

    def __init__(self, dims: int = 512):
        self.dims = dims

    def _grams(self, text: str) -> list[str]:
        canon = " ".join(text.split()).lower()
        if not canon:
            raise ContractError("cannot embed empty text")
        if len(canon) < 3:
            return [canon]
        return [canon[i : i + 3] for i in range(len(canon) - 2)]

    def embed(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dims)
        grams = self._grams(text)
        for gram in grams:
            digest = hashlib.blake2b(gram.encode("utf-8"), digest_size=8).digest()
            value = int.from_bytes(digest, "little")
            sign = 1.0 if value & 1 else -1.0
            vec[(value >> 1) % self.dims] += sign
        norm = float(np.linalg.norm(vec))
        if norm == 0.0:
            # pathological total cancellation: fall back to the first gram
            digest = hashlib.blake2b(grams[0].encode("utf-8"), digest_size=8).digest()
            vec[(int.from_bytes(digest, "little") >> 1) % self.dims] = 1.0
            norm = 1.0
        return vec / norm

    def describe(self) -> str:
        return f"local-hash-{self.dims}"


class RemoteEmbedder:
    """OpenAI-compatible ``POST {base_url}/embeddings`` provider."""

    def __init__(self, config: LlmEndpointConfig, model_name: str | None = None):
        self.config = config
        self.model_name = model_name or config.model_name

    def embed(self, text: str) -> np.ndarray:
        if not text.strip():
            raise ContractError("cannot embed empty text")
        doc = request_json(
            self.config,
            "/embeddings",
            {"model": self.model_name, "input": [text]},
        )
        try:
            values = doc["data"][0]["embedding"]
        except (KeyError, IndexError, TypeError):
            raise ProtocolError("response lacks data[0].embedding") from None
        vec = np.asarray(values, dtype=np.float64)
        norm = float(np.linalg.norm(vec))
        if norm == 0.0:
            raise ProtocolError("endpoint returned a zero embedding")
        return vec / norm

    def describe(self) -> str:
        return f"remote({self.model_name})"


# ---------------------------------------------------------------------------
# configuration and report


@dataclass
class EvalConfig:
    methods: tuple[str, ...] = METHODS
    ablations: tuple[AblationMode, ...] = tuple(AblationMode)
    d_thresholds_m: tuple[float, ...] = (1.0, 2.0, 3.0)
    trials: int = 3
    k: int = 5
    predictor: GoalPredictor = field(default_factory=GeometricGoalPredictor)
    llm_client: LlmClient = field(default_factory=HeuristicLlmClient)
    embedder: Embedder = field(default_factory=LocalHashingEmbedder)
    seed: int = 0
    jobs: int = 1

    def __post_init__(self):
        self.methods = tuple(self.methods)
        self.ablations = tuple(AblationMode(a) for a in self.ablations)
        self.d_thresholds_m = tuple(float(d) for d in self.d_thresholds_m)
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ValidationError(f"unknown methods {sorted(unknown)}")
        if not self.methods or not self.ablations or not self.d_thresholds_m:
            raise ValidationError("methods, ablations and thresholds must be non-empty")
        if self.trials < 1:
            raise ValidationError(f"trials must be >= 1, got {self.trials}")
        if self.k < 1:
            raise ValidationError(f"k must be >= 1, got {self.k}")
        if any(d <= 0 for d in self.d_thresholds_m):
            raise ValidationError("d thresholds must be positive")
        if list(self.d_thresholds_m) != sorted(self.d_thresholds_m):
            raise ValidationError("d thresholds must be ascending")
        if self.jobs < 1:
            raise ValidationError(f"jobs must be >= 1, got {self.jobs}")

    def describe(self) -> dict:
        return {
            "methods": list(self.methods),
            "ablations": [a.value for a in self.ablations],
            "d_thresholds_m": list(self.d_thresholds_m),
            "trials": self.trials,
            "k": self.k,
            "predictor": self.predictor.describe(),
            "llm": self.llm_client.describe(),
            "embedder": self.embedder.describe(),
            "seed": self.seed,
            "jobs": self.jobs,
        }


@dataclass
class CellStats:
    method: str
    ablation: str
    d_m: float
    top5_accuracy: float | None
    action_cosine: float | None
    judge_accuracy: float | None
    pair_count: int
    invalid_trials: int
    flags: dict[str, int]

    def as_dict(self) -> dict:
        return {
            "method": self.method,
            "ablation": self.ablation,
            "d_m": self.d_m,
            "top5_accuracy": self.top5_accuracy,
            "action_cosine": self.action_cosine,
            "judge_accuracy": self.judge_accuracy,
            "pair_count": self.pair_count,
            "invalid_trials": self.invalid_trials,
            "flags": self.flags,
        }


@dataclass
class Report:
    config: dict
    pair_count: int
    cells: list[CellStats]

    def cell(self, method: str, ablation: str | AblationMode, d_m: float) -> CellStats:
        ablation = AblationMode(ablation).value
        for c in self.cells:
            if c.method == method and c.ablation == ablation and c.d_m == d_m:
                return c
        raise KeyError((method, ablation, d_m))

    def to_json(self) -> str:
        doc = {
            "config": self.config,
            "pair_count": self.pair_count,
            "cells": [c.as_dict() for c in self.cells],
        }
        return json.dumps(doc, indent=2) + "\n"

    def to_text(self) -> str:
        ablations = list(dict.fromkeys(c.ablation for c in self.cells))
        ds = sorted({c.d_m for c in self.cells})
        methods = list(dict.fromkeys(c.method for c in self.cells))

        def fmt(value: float | None) -> str:
            return "   n/a" if value is None else f"{value:6.3f}"

        def table(metric: str) -> list[str]:
            width = max(len("method"), 18)
            head = "method".ljust(width) + "".join(
                a.rjust(14) for a in ablations
            )
            lines = [head]
            for method in methods:
                rows = ds if method != "llm" else ds[:1]
                for d in rows:
                    label = method if method == "llm" else f"{method} (d>{d:g}m)"
                    cells = [self.cell(method, a, d) for a in ablations]
                    lines.append(
                        label.ljust(width)
                        + "".join(fmt(getattr(c, metric)).rjust(14) for c in cells)
                    )
            return lines

        out = ["== Target object prediction (top-5 accuracy) =="]
        out += table("top5_accuracy")
        out += ["", "== Action prediction (embedding cosine similarity) =="]
        out += table("action_cosine")
        out += ["", "== Action prediction (LLM judge accuracy) =="]
        out += table("judge_accuracy")
        out += ["", f"pairs: {self.pair_count}"]
        return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# the protocol itself


class _TrialAccumulator:
    """Per-cell metric lists for one trial, merged into cell stats later."""

    def __init__(self):
        self.hits: list[int] = []
        self.cosines: list[float] = []
        self.judges: list[int] = []
        self.telemetry = Telemetry()
        self.invalid = False


def run_evaluation(pairs: Sequence[EvalPair], cfg: EvalConfig) -> Report:
    """Run the full grid over the dataset and aggregate a report.

    Deterministic given deterministic backends: pairs, trials and cells are
    iterated in fixed order and parallel results merge in pair order.
    """
    if not pairs:
        raise ContractError("run_evaluation needs at least one pair")

    need_traj = bool({"trajectory", "fused"} & set(cfg.methods))
    need_llm = bool({"llm", "fused"} & set(cfg.methods))

    contexts = [scene_context_for(p.scenario, p.scene) for p in pairs]
    gt_embeddings = [cfg.embedder.embed(p.scenario.gt_action) for p in pairs]

    # trajectory-route probability maps do not depend on trial or ablation
    prefix_tel: list[dict[float, Telemetry]] = []
    p_traj: list[dict[float, ObjectProbabilityMap]] = []
    for pair in pairs:
        tels: dict[float, Telemetry] = {}
        maps: dict[float, ObjectProbabilityMap] = {}
        for d in cfg.d_thresholds_m:
            tel = Telemetry()
            prefix = truncate_at_progress(pair.trajectory, d, tel)
            if need_traj:
                heat = cfg.predictor.predict(pair.scene, prefix)
                maps[d] = object_probabilities(heat, pair.scene, tel)
            tels[d] = tel
        prefix_tel.append(tels)
        p_traj.append(maps)

    grid = [
        (method, ablation, d)
        for method in cfg.methods
        for ablation in cfg.ablations
        for d in cfg.d_thresholds_m
    ]
    acc: dict[tuple[str, str, float], list[_TrialAccumulator]] = {
        (m, a.value, d): [_TrialAccumulator() for _ in range(cfg.trials)]
        for m, a, d in grid
    }

    def eval_pair_trial(pair_idx: int, trial: int) -> dict:
        """All per-pair results for one trial; raises only on coding bugs."""
        pair = pairs[pair_idx]
        ctx = contexts[pair_idx]
        gt = pair.scenario.gt_target_object
        out: dict[tuple[str, str, float], dict] = {}
        action_cache: dict[tuple[str, str], tuple[str, float, int, Telemetry]] = {}

        for ablation in cfg.ablations:
            llm_map: ObjectProbabilityMap | None = None
            llm_tel = Telemetry()
            llm_error = None
            if need_llm:
                try:
                    llm_map = predict_target_ranks(
                        cfg.llm_client, ctx, ablation, llm_tel
                    )
                except _TRANSPORT_ERRORS as exc:
                    llm_error = exc

            for method in cfg.methods:
                for d in cfg.d_thresholds_m:
                    key = (method, ablation.value, d)
                    try:
                        if method == "llm":
                            if llm_error is not None:
                                raise llm_error
                            prob, tel = llm_map, llm_tel.merged(Telemetry())
                        elif method == "trajectory":
                            prob = p_traj[pair_idx][d]
                            tel = prefix_tel[pair_idx][d].merged(Telemetry())
                        else:
                            if llm_error is not None:
                                raise llm_error
                            tel = llm_tel.merged(prefix_tel[pair_idx][d])
                            prob = fuse(llm_map, p_traj[pair_idx][d], tel)
                        hit = top5_hit(prob, gt, cfg.k)
                        top1 = top_k(prob, 1)[0]
                        cache_key = (ablation.value, top1)
                        if cache_key not in action_cache:
                            a_tel = Telemetry()
                            action = predict_action(
                                cfg.llm_client, ctx, ablation, top1
                            )
                            cos = cosine_similarity(
                                cfg.embedder.embed(action), gt_embeddings[pair_idx]
                            )
                            verdict = judge_action(
                                cfg.llm_client, action, pair.scenario.gt_action, a_tel
                            )
                            action_cache[cache_key] = (action, cos, verdict, a_tel)
                        _, cos, verdict, a_tel = action_cache[cache_key]
                        out[key] = {
                            "hit": hit,
                            "cos": cos,
                            "judge": verdict,
                            "tel": tel.merged(a_tel),
                        }
                    except _TRANSPORT_ERRORS as exc:
                        out[key] = {"error": str(exc)}
        return out

    for trial in range(cfg.trials):
        if cfg.jobs > 1:
            with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
                results = list(
                    pool.map(lambda i: eval_pair_trial(i, trial), range(len(pairs)))
                )
        else:
            results = [eval_pair_trial(i, trial) for i in range(len(pairs))]
        for res in results:
            for key, entry in res.items():
                slot = acc[key][trial]
                if "error" in entry:
                    slot.invalid = True
                    continue
                slot.hits.append(entry["hit"])
                slot.cosines.append(entry["cos"])
                slot.judges.append(entry["judge"])
                slot.telemetry = slot.telemetry.merged(entry["tel"])

    cells = []
    for method, ablation, d in grid:
        trials = acc[(method, ablation.value, d)]
        valid = [t for t in trials if not t.invalid]
        flags = Telemetry()
        for t in valid:
            flags = flags.merged(t.telemetry)

        def avg(metric: str) -> float | None:
            per_trial = [
                sum(getattr(t, metric)) / len(getattr(t, metric))
                for t in valid
                if getattr(t, metric)
            ]
            return sum(per_trial) / len(per_trial) if per_trial else None

        cells.append(
            CellStats(
                method=method,
                ablation=ablation.value,
                d_m=d,
                top5_accuracy=avg("hits"),
                action_cosine=avg("cosines"),
                judge_accuracy=avg("judges"),
                pair_count=len(pairs),
                invalid_trials=len(trials) - len(valid),
                flags=flags.as_dict(),
            )
        )
    return Report(config=cfg.describe(), pair_count=len(pairs), cells=cells)


# ---------------------------------------------------------------------------
# dataset manifests


def load_manifest(path: str | Path) -> list[EvalPair]:
    """Load {scenario, scene, trajectory} file triples relative to the manifest."""
    path = Path(path)
    doc = json.loads(path.read_text(encoding="utf-8"))
    if not isinstance(doc, list):
        raise ValidationError(f"{path}: manifest must be a JSON list")
    scene_cache: dict[str, Scene] = {}
    pairs = []
    for i, entry in enumerate(doc):
        try:
            scenario_rel = entry["scenario"]
            scene_rel = entry["scene"]
            traj_rel = entry["trajectory"]
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"{path}[{i}]: missing manifest field") from exc
        if scene_rel not in scene_cache:
            scene_cache[scene_rel] = load_scene(path.parent / scene_rel)
        pairs.append(
            EvalPair(
                scenario=load_scenario(path.parent / scenario_rel),
                scene=scene_cache[scene_rel],
                trajectory=load_trajectory(path.parent / traj_rel),
            )
        )
    return pairs
