"""Command-line surface: predict, evaluate, gen-data, render, make-weights.

JSON results go to standard output, human logs to standard error.
Exit codes: 0 success, 2 argument errors, 3 data errors, 4 transport errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import (
    ContractError,
    DegenerateInputError,
    DimensionError,
    GenerationError,
    ProtocolError,
    RequestError,
    SceneFormatError,
    SchemaError,
    TransportError,
    ValidationError,
    WeightFormatError,
)
from .evaluation import (
    EvalConfig,
    LocalHashingEmbedder,
    Scenario,
    load_manifest,
    load_scenario,
    run_evaluation,
    scene_context_for,
    truncate_at_progress,
)
from .fusion import Telemetry, fuse, top_k
from .llm import (
    AblationMode,
    HeuristicLlmClient,
    HttpLlmClient,
    LlmEndpointConfig,
    ScriptedLlmClient,
    predict_action,
    predict_target_ranks,
)
from .predictor import (
    GeometricGoalPredictor,
    UnetGoalPredictor,
    UniformGoalPredictor,
    make_random_weights,
    object_probabilities,
)
from .scene import load_scene
from .trajectory import load_trajectory
from .weights import load_weights, save_weights

_DATA_ERRORS = (
    SceneFormatError,
    ValidationError,
    DimensionError,
    ContractError,
    DegenerateInputError,
    GenerationError,
    WeightFormatError,
    SchemaError,
    FileNotFoundError,
)
_TRANSPORT = (TransportError, RequestError, ProtocolError)


def _log(message: str) -> None:
    print(message, file=sys.stderr)


def _positive_int(value: str) -> int:
    n = int(value)
    if n < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {n}")
    return n


def _non_negative_float(value: str) -> float:
    x = float(value)
    if x < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {x}")
    return x


def _add_llm_args(p: argparse.ArgumentParser) -> None:
    p.add_argument(
        "--mock-llm",
        metavar="heuristic|SCRIPT.json",
        help="offline backend: 'heuristic' or a response-script JSON path",
    )
    p.add_argument("--llm-endpoint", metavar="URL", help="OpenAI-compatible base URL")
    p.add_argument("--llm-model", metavar="NAME", help="model name for the endpoint")
    p.add_argument("--temperature", type=float, default=0.0)
    p.add_argument("--timeout", type=float, default=30.0)
    p.add_argument("--max-retries", type=int, default=3)


def _make_client(args, parser):
    if args.llm_endpoint:
        if not args.llm_model:
            parser.error("--llm-endpoint requires --llm-model")
        cfg = LlmEndpointConfig(
            base_url=args.llm_endpoint,
            model_name=args.llm_model,
            temperature=args.temperature,
            timeout=args.timeout,
            max_retries=args.max_retries,
        )
        return HttpLlmClient(cfg)
    mock = args.mock_llm or "heuristic"
    if mock == "heuristic":
        return HeuristicLlmClient()
    return ScriptedLlmClient(mock)


def _add_predictor_args(p: argparse.ArgumentParser) -> None:
    p.add_argument(
        "--predictor",
        choices=("unet", "geometric", "uniform"),
        default="geometric",
    )
    p.add_argument("--weights", metavar="FILE", help="TRLW container for --predictor unet")
    p.add_argument("--beta", type=float, default=1.0, help="geometric detour rate per meter")


def _make_predictor(args, parser):
    if args.predictor == "unet":
        if not args.weights:
            parser.error("--predictor unet requires --weights")
        return UnetGoalPredictor(load_weights(args.weights))
    if args.predictor == "uniform":
        return UniformGoalPredictor()
    return GeometricGoalPredictor(beta=args.beta)


def _load_triple(args):
    scene = load_scene(args.scene)
    scenario = load_scenario(args.scenario)
    traj = load_trajectory(args.trajectory)
    return scene, scenario, traj


def _predict_maps(scene, scenario, traj, args, parser, telemetry):
    """Probability map for the requested method plus the heatmap, if any."""
    mode = AblationMode(args.ablation)
    ctx = scene_context_for(scenario, scene)
    client = _make_client(args, parser)
    if args.d_min is not None:
        traj = truncate_at_progress(traj, args.d_min, telemetry)
    heatmap = None
    p_traj = None
    if args.method in ("trajectory", "fused"):
        predictor = _make_predictor(args, parser)
        heatmap = predictor.predict(scene, traj)
        p_traj = object_probabilities(heatmap, scene, telemetry)
    p_llm = None
    if args.method in ("llm", "fused"):
        p_llm = predict_target_ranks(client, ctx, mode, telemetry)
    if args.method == "llm":
        probs = p_llm
    elif args.method == "trajectory":
        probs = p_traj
    else:
        probs = fuse(p_llm, p_traj, telemetry)
    return probs, heatmap, traj, ctx, client, mode


def cmd_predict(args, parser) -> int:
    telemetry = Telemetry()
    scene, scenario, traj = _load_triple(args)
    probs, heatmap, traj, ctx, client, mode = _predict_maps(
        scene, scenario, traj, args, parser, telemetry
    )
    ranking = top_k(probs, len(probs))
    top1 = ranking[0]
    action = predict_action(client, ctx, mode, top1)
    result = {
        "method": args.method,
        "ablation": mode.value,
        "scene": scene.name,
        "scenario": scenario.id,
        "ranking": ranking[: args.k],
        "probabilities": {label: probs[label] for label in ranking},
        "top_object": top1,
        "action": action,
        "flags": telemetry.as_dict(),
    }
    if args.render:
        from .render import render_prediction
        from .scene import Heatmap
        import numpy as np

        if heatmap is None:
            geom = scene.geometry
            heatmap = Heatmap(
                geometry=geom,
                values=np.zeros((geom.height_px, geom.width_px)),
            )
        render_prediction(scene, traj, heatmap, probs, args.render)
        _log(f"wrote {args.render}")
    print(json.dumps(result, indent=2))
    return 0


def cmd_evaluate(args, parser) -> int:
    pairs = load_manifest(args.manifest)
    cfg = EvalConfig(
        methods=tuple(args.methods.split(",")),
        ablations=tuple(AblationMode(a) for a in args.ablations.split(",")),
        d_thresholds_m=tuple(float(v) for v in args.d_thresholds.split(",")),
        trials=args.trials,
        k=args.k,
        predictor=_make_predictor(args, parser),
        llm_client=_make_client(args, parser),
        embedder=LocalHashingEmbedder(),
        seed=args.seed,
        jobs=args.jobs,
    )
    _log(f"evaluating {len(pairs)} pairs over {len(cfg.methods)} methods, "
         f"{len(cfg.ablations)} ablations, {len(cfg.d_thresholds_m)} thresholds, "
         f"{cfg.trials} trials")
    report = run_evaluation(pairs, cfg)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_text(report.to_json(), encoding="utf-8")
    (out_dir / "report.txt").write_text(report.to_text(), encoding="utf-8")
    _log(f"wrote {out_dir / 'report.json'} and {out_dir / 'report.txt'}")
    print(report.to_text())
    return 0


def cmd_gen_data(args, parser) -> int:
    from .datagen import generate_dataset

    manifest = generate_dataset(
        args.out,
        seed=args.seed,
        n_scenes=args.scenes,
        n_scenarios=args.scenarios,
        speed_mps=args.speed,
    )
    n_pairs = len(json.loads(Path(manifest).read_text(encoding="utf-8")))
    _log(f"wrote dataset with {n_pairs} pairs under {args.out}")
    print(json.dumps({"manifest": str(manifest), "pairs": n_pairs}, indent=2))
    return 0


def cmd_render(args, parser) -> int:
    from .render import render_prediction

    telemetry = Telemetry()
    scene, scenario, traj = _load_triple(args)
    probs, heatmap, traj, _, _, _ = _predict_maps(
        scene, scenario, traj, args, parser, telemetry
    )
    if heatmap is None:
        import numpy as np

        from .scene import Heatmap

        geom = scene.geometry
        heatmap = Heatmap(
            geometry=geom, values=np.zeros((geom.height_px, geom.width_px))
        )
    render_prediction(scene, traj, heatmap, probs, args.out)
    _log(f"wrote {args.out}")
    return 0


def cmd_make_weights(args, parser) -> int:
    container = make_random_weights(args.seed)
    save_weights(container, args.out)
    _log(f"wrote {args.out} ({len(container.tensors)} tensors, seed {args.seed})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="goalfuse",
        description="Predict a person's next target object and action from "
        "scene context and their trajectory.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("predict", help="single-pair prediction as JSON")
    p.add_argument("--scene", required=True)
    p.add_argument("--scenario", required=True)
    p.add_argument("--trajectory", required=True)
    p.add_argument("--method", choices=("llm", "trajectory", "fused"), default="fused")
    p.add_argument("--ablation", choices=[m.value for m in AblationMode], default="all")
    p.add_argument("--d-min", type=_non_negative_float, default=None,
                   help="truncate the trajectory at this progress in meters")
    p.add_argument("--k", type=_positive_int, default=5)
    p.add_argument("--render", metavar="PNG", help="also write a composite image")
    _add_predictor_args(p)
    _add_llm_args(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="run the evaluation grid over a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--methods", default="llm,trajectory,fused")
    p.add_argument("--ablations", default="all,wo_conv,wo_conv_hist")
    p.add_argument("--d-thresholds", default="1,2,3")
    p.add_argument("--trials", type=_positive_int, default=3)
    p.add_argument("--k", type=_positive_int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=_positive_int, default=1)
    _add_predictor_args(p)
    _add_llm_args(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("gen-data", help="materialize the synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--scenes", type=_positive_int, default=6)
    p.add_argument("--scenarios", type=_positive_int, default=8)
    p.add_argument("--speed", type=float, default=1.2)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("render", help="write the composite prediction image")
    p.add_argument("--scene", required=True)
    p.add_argument("--scenario", required=True)
    p.add_argument("--trajectory", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--method", choices=("llm", "trajectory", "fused"), default="fused")
    p.add_argument("--ablation", choices=[m.value for m in AblationMode], default="all")
    p.add_argument("--d-min", type=_non_negative_float, default=None)
    _add_predictor_args(p)
    _add_llm_args(p)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("make-weights", help="seeded random TRLW container")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=1)
    p.set_defaults(func=cmd_make_weights)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, parser)
    except _TRANSPORT as exc:
        _log(f"transport error: {exc}")
        return 4
    except _DATA_ERRORS as exc:
        _log(f"error: {exc}")
        return 3


if __name__ == "__main__":
    sys.exit(main())
