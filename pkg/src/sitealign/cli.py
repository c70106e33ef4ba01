"""Command-line interface.

Subcommands: ``scene-gen``, ``register``, ``eval``, ``priors``, ``hav``.
Exit codes: 0 success, 2 usage problems, 3 unreadable or inconsistent data,
4 infeasible registration. All JSON outputs are canonical (sorted keys),
so identical inputs and seeds reproduce byte-identical files.
"""

from __future__ import annotations

import argparse
import json
import re
import sys
from pathlib import Path

import numpy as np

from . import figures
from .errors import (
    DegenerateGeometryError,
    EmptyMeshError,
    InfeasibleRegistrationError,
    InsufficientSceneError,
    PriorServiceError,
    SitealignError,
    StreamOrderError,
)
from .evaluation import (
    DistanceStats,
    ScenarioMetrics,
    build_report,
    point_to_mesh_distances,
    report_to_csv,
    report_to_text,
)
from .geometry import UP, RigidTransform, geodesic_angle, tilt_angle
from .hav import HavMonitor, MonitorConfig, VibrationWindow, records_to_json
from .mesh import sample_mesh_with_normals
from .meshio import load_mesh, load_ply_points, save_obj, save_ply_points
from .priors import (
    PriorServiceConfig,
    SemanticPriorTable,
    build_detection_prompt,
    effective_gravity_weight,
    fallback_priors,
    fetch_priors,
    simplify_label,
)
from .registration import GravityPrior, IcpParams, run_registration
from .scenes import generate_scenario, load_preset, preset_names


class UsageError(Exception):
    """Bad flags or config keys; maps to exit code 2."""


class DataError(Exception):
    """Unreadable or inconsistent input data; maps to exit code 3."""


# camelCase JSON keys (config files, job files) -> IcpParams fields
_PARAM_KEYS = {
    "sampleCount": "sample_count",
    "maxIterations": "max_iterations",
    "maxPairDistance": "max_pair_distance",
    "normalGate": "normal_gate_deg",
    "trimFraction": "trim_fraction",
    "huberDelta": "huber_delta",
    "epsRot": "eps_rot_deg",
    "epsTrans": "eps_trans",
    "restarts": "restarts",
    "yawJitterDeg": "yaw_jitter_deg",
    "gravityWeightInitial": "gravity_weight_initial",
    "seed": "seed",
}

_PRIOR_KEYS = {
    "gravityWorld": "gravity_world",
    "uprightModel": "upright_model",
    "uprightBias": "upright_bias",
    "effectiveWeight": "effective_weight",
    "yawOnly": "yaw_only",
}


def _write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _read_json(path):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{path} is not valid JSON: {exc}") from exc


def _slug(label: str) -> str:
    return re.sub(r"[^a-z0-9]+", "_", label.lower()).strip("_") or "object"


def _params_from_json(data: dict, base: IcpParams | None = None) -> IcpParams:
    values = {k: getattr(base, k) for k in IcpParams.__dataclass_fields__} if base else {}
    unknown = [k for k in data if k not in _PARAM_KEYS]
    if unknown:
        raise UsageError(f"unknown parameter keys: {', '.join(sorted(unknown))}")
    for key, field_name in _PARAM_KEYS.items():
        if key in data:
            values[field_name] = data[key]
    try:
        return IcpParams(**values)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad parameter value: {exc}") from exc


def _prior_from_json(data: dict) -> GravityPrior:
    unknown = [k for k in data if k not in _PRIOR_KEYS]
    if unknown:
        raise UsageError(f"unknown prior keys: {', '.join(sorted(unknown))}")
    kwargs = {}
    for key, field_name in _PRIOR_KEYS.items():
        if key in data:
            value = data[key]
            if field_name in ("gravity_world", "upright_model"):
                value = np.asarray(value, dtype=float)
            kwargs[field_name] = value
    try:
        return GravityPrior(**kwargs)
    except ValueError as exc:
        raise UsageError(f"bad prior value: {exc}") from exc


def _apply_param_flags(params: IcpParams, args) -> IcpParams:
    from dataclasses import replace

    overrides = {}
    for flag, field_name in (
        ("seed", "seed"),
        ("sample_count", "sample_count"),
        ("max_iterations", "max_iterations"),
        ("restarts", "restarts"),
        ("trim_fraction", "trim_fraction"),
        ("max_pair_distance", "max_pair_distance"),
        ("gamma_initial", "gravity_weight_initial"),
    ):
        value = getattr(args, flag, None)
        if value is not None:
            overrides[field_name] = value
    if not overrides:
        return params
    try:
        return replace(params, **overrides)
    except ValueError as exc:
        raise UsageError(f"bad parameter value: {exc}") from exc


# ---------------------------------------------------------------------------
# scene-gen


def cmd_scene_gen(args) -> int:
    try:
        spec = load_preset(args.preset, seed=args.seed)
    except KeyError:
        raise UsageError(
            f"unknown preset {args.preset!r}; available presets: {', '.join(preset_names())}"
        ) from None
    scene = generate_scenario(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    save_ply_points(scene.scene_points, out / "cloud.ply", normals=scene.scene_normals)
    objects = []
    for placed, mesh, init_pose, n_pts in zip(
        scene.objects, scene.meshes, scene.initial_poses, scene.points_per_object
    ):
        mesh_name = f"{_slug(placed.spec.label)}.obj"
        save_obj(mesh, out / mesh_name)
        objects.append(
            {
                "label": placed.spec.label,
                "kind": placed.spec.kind,
                "mesh": mesh_name,
                "truthPose": placed.truth_pose.as_dict(),
                "initialPose": init_pose.as_dict(),
                "scenePoints": n_pts,
            }
        )
    _write_json(
        out / "poses.json",
        {"scenario": spec.name, "seed": spec.seed, "objects": objects},
    )
    if not args.no_figures:
        figures.save_scene_figure(scene, out / "scene.png")
    print(
        f"scene '{spec.name}' seed {spec.seed}: {len(scene.scene_points)} points, "
        f"{len(scene.objects)} objects -> {out}"
    )
    return 0


# ---------------------------------------------------------------------------
# register


def _resolve_prior_table(labels, args) -> SemanticPriorTable:
    if getattr(args, "priors_file", None):
        return SemanticPriorTable.load(args.priors_file)
    if args.offline or not args.endpoint:
        return fallback_priors(labels)
    config = PriorServiceConfig(
        endpoint=args.endpoint,
        model=args.model,
        timeout=args.timeout,
        retries=args.retries,
        cache_path=getattr(args, "cache", None),
    )
    return fetch_priors(labels, config)


def _registration_jobs(args, params):
    """Yield (label, kind, mesh, initial_pose, truth_pose_or_None, scene, scene_normals)."""
    if args.preset and args.job:
        raise UsageError("--preset and --job are mutually exclusive")
    if args.preset:
        try:
            spec = load_preset(args.preset, seed=args.seed)
        except KeyError:
            raise UsageError(
                f"unknown preset {args.preset!r}; available presets: {', '.join(preset_names())}"
            ) from None
        scene = generate_scenario(spec)
        jobs = []
        for placed, mesh, init_pose in zip(scene.objects, scene.meshes, scene.initial_poses):
            if args.object and placed.spec.label != args.object:
                continue
            jobs.append(
                (
                    placed.spec.label,
                    placed.spec.kind,
                    mesh,
                    init_pose,
                    placed.truth_pose,
                    scene.scene_points,
                    scene.scene_normals,
                )
            )
        if not jobs:
            raise UsageError(f"preset has no object labelled {args.object!r}")
        return spec.name, jobs
    if not args.job:
        raise UsageError("either --preset or --job is required")

    job = _read_json(args.job)
    known = {"model", "scene", "initialPose", "params", "prior", "biasMode", "label"}
    unknown = sorted(set(job) - known)
    if unknown:
        raise UsageError(f"unknown job keys: {', '.join(unknown)}")
    try:
        mesh = load_mesh(job["model"])
        scene_pts, scene_normals = load_ply_points(job["scene"])
        init_pose = RigidTransform.from_dict(job["initialPose"])
    except (KeyError, ValueError, OSError) as exc:
        raise DataError(f"bad job file: {exc}") from exc
    label = job.get("label", Path(job["model"]).stem)
    return None, [(label, "mesh", mesh, init_pose, None, scene_pts, scene_normals)]


def cmd_register(args) -> int:
    if args.mode not in ("icp", "sgicp", "both"):
        raise UsageError(f"unknown mode {args.mode!r} (expected icp, sgicp, or both)")
    if args.preset and args.job:
        raise UsageError("--preset and --job are mutually exclusive")

    params = IcpParams()
    if args.config:
        params = _params_from_json(_read_json(args.config), base=params)
    if args.job:
        job_data = _read_json(args.job)
        if "params" in job_data:
            params = _params_from_json(job_data["params"], base=params)
    params = _apply_param_flags(params, args)

    bias_mode = args.bias_mode
    job_prior = None
    if args.job:
        job_data = _read_json(args.job)
        if job_data.get("biasMode"):
            bias_mode = job_data["biasMode"] if args.bias_mode == "penalty" else bias_mode
        if job_data.get("prior"):
            job_prior = _prior_from_json(job_data["prior"])

    scenario_name, jobs = _registration_jobs(args, params)
    modes = ["icp", "sgicp"] if args.mode == "both" else [args.mode]

    table = None
    if "sgicp" in modes and job_prior is None:
        labels = [simplify_label(label) for label, *_ in jobs]
        table = _resolve_prior_table(labels, args)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    results: dict[str, list] = {mode: [] for mode in modes}
    comparison = []
    for label, kind, mesh, init_pose, truth_pose, scene_pts, scene_normals in jobs:
        per_mode = {}
        for mode in modes:
            prior = None
            if mode == "sgicp":
                if job_prior is not None:
                    prior = job_prior
                else:
                    simplified = simplify_label(label)
                    bias = table.bias(simplified)
                    prior = GravityPrior(
                        upright_bias=bias,
                        effective_weight=effective_gravity_weight(
                            params.gravity_weight_initial, bias
                        ),
                        yaw_only=table.is_yaw_only(simplified),
                    )
            result = run_registration(
                mesh,
                init_pose,
                scene_pts,
                params,
                prior,
                bias_mode=bias_mode,
                scene_normals=scene_normals,
                collect_trace=args.trace,
            )
            per_mode[mode] = result
            entry = {"label": label, "kind": kind, "result": result.as_dict()}
            if prior is not None:
                entry["prior"] = {
                    "uprightBias": prior.upright_bias,
                    "effectiveWeight": prior.effective_weight,
                    "yawOnly": prior.yaw_only,
                    "biasMode": bias_mode,
                }
            results[mode].append(entry)

        row: dict = {"label": label}
        for mode, result in per_mode.items():
            stats = {
                "score": result.score,
                "tiltDeg": tilt_angle(result.pose.rotation, UP, UP),
                "converged": result.converged,
                "iterations": result.iterations,
            }
            if truth_pose is not None:
                stats["rotationErrDeg"] = geodesic_angle(result.pose.rotation, truth_pose.rotation)
                stats["translationErr"] = float(
                    np.linalg.norm(result.pose.translation - truth_pose.translation)
                )
            row[mode] = stats
        comparison.append(row)

        if not args.no_figures:
            probe = sample_mesh_with_normals(mesh, 400, params.seed)
            stages = {"initial": init_pose.apply(probe.points)}
            for mode, result in per_mode.items():
                stages[mode] = result.pose.apply(probe.points)
            figures.save_registration_figure(
                scene_pts, stages, out / f"overlay_{_slug(label)}.png", title=label
            )

    for mode in modes:
        _write_json(
            out / f"result_{mode}.json",
            {"scenario": scenario_name, "seed": params.seed, "mode": mode, "objects": results[mode]},
        )
    if len(modes) > 1:
        _write_json(
            out / "comparison.json",
            {"scenario": scenario_name, "seed": params.seed, "objects": comparison},
        )

    for row in comparison:
        bits = [f"{row['label']}:"]
        for mode in modes:
            bits.append(
                f"{mode} score={row[mode]['score']:.4f} tilt={row[mode]['tiltDeg']:.1f} deg"
            )
        print("  ".join(bits))
    return 0


# ---------------------------------------------------------------------------
# eval


def cmd_eval(args) -> int:
    truth = _read_json(args.truth)
    truth_dir = Path(args.truth).parent
    results_dir = Path(args.results)
    baseline_doc = _read_json(results_dir / "result_icp.json")
    proposed_doc = _read_json(results_dir / "result_sgicp.json")

    for doc, name in ((baseline_doc, "baseline"), (proposed_doc, "proposed")):
        if doc.get("scenario") != truth.get("scenario"):
            raise DataError(
                f"{name} results are for scenario {doc.get('scenario')!r} but ground truth "
                f"is for {truth.get('scenario')!r}"
            )

    truth_objects = {o["label"]: o for o in truth["objects"]}
    per_object = []
    pooled: dict[str, list] = {"icp": [], "sgicp": []}
    for mode, doc in (("icp", baseline_doc), ("sgicp", proposed_doc)):
        for entry in doc["objects"]:
            label = entry["label"]
            if label not in truth_objects:
                raise DataError(f"result object {label!r} missing from ground truth")
            t_obj = truth_objects[label]
            mesh = load_mesh(truth_dir / t_obj["mesh"])
            truth_pose = RigidTransform.from_dict(t_obj["truthPose"])
            est_pose = RigidTransform.from_dict(entry["result"]["pose"])
            probe = sample_mesh_with_normals(mesh, args.samples, args.seed)
            distances = point_to_mesh_distances(est_pose.apply(probe.points), mesh, truth_pose)
            pooled[mode].append(distances)
            per_object.append(
                {
                    "label": label,
                    "mode": mode,
                    "stats": DistanceStats.from_distances(distances).as_dict(),
                }
            )

    scenario = truth.get("scenario") or "scenario"
    metrics = ScenarioMetrics(
        scenario=scenario,
        baseline=DistanceStats.from_distances(np.concatenate(pooled["icp"])),
        proposed=DistanceStats.from_distances(np.concatenate(pooled["sgicp"])),
    )
    report = build_report([metrics])

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "report.json", {"report": report.as_dict(), "perObject": per_object})
    (out / "report.txt").write_text(report_to_text(report), encoding="utf-8")
    (out / "report.csv").write_text(report_to_csv(report), encoding="utf-8")
    if not args.no_figures:
        figures.save_comparison_figure(report, out / "comparison.png")
    sys.stdout.write(report_to_text(report))
    return 0


# ---------------------------------------------------------------------------
# priors


def cmd_priors(args) -> int:
    if args.offline and args.no_fallback:
        raise UsageError("--offline together with --no-fallback leaves no way to resolve priors")
    raw_labels = _read_json(args.labels)
    if not isinstance(raw_labels, list) or not raw_labels:
        raise DataError(f"{args.labels} must contain a non-empty JSON array of labels")
    simplified = {}
    for raw in raw_labels:
        if not isinstance(raw, str) or not raw.strip():
            raise DataError(f"bad label entry {raw!r}")
        simplified[raw] = simplify_label(raw)

    labels = sorted(set(simplified.values()))
    prompt = build_detection_prompt(labels, context=args.context)

    if args.offline or not args.endpoint:
        if args.no_fallback:
            raise PriorServiceError("no endpoint configured and fallback disabled")
        table = fallback_priors(labels)
    else:
        config = PriorServiceConfig(
            endpoint=args.endpoint,
            model=args.model,
            timeout=args.timeout,
            retries=args.retries,
            cache_path=args.cache,
        )
        table = fetch_priors(labels, config, allow_fallback=not args.no_fallback)

    out = Path(args.out)
    if out.parent != Path(""):
        out.parent.mkdir(parents=True, exist_ok=True)
    table.save(out)
    print(f"detection prompt: {prompt}")
    for raw in raw_labels:
        s = simplified[raw]
        print(f"{raw} -> {s}: bias={table.bias(s):.2f} (source={table.source})")
    return 0


# ---------------------------------------------------------------------------
# hav


def _parse_stream_line(line: str, lineno: int):
    try:
        data = json.loads(line)
    except json.JSONDecodeError as exc:
        raise DataError(f"stream line {lineno}: invalid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise DataError(f"stream line {lineno}: expected a JSON object")
    if "control" in data:
        kind = data["control"]
        if kind not in ("end_session", "end_day"):
            raise DataError(f"stream line {lineno}: unknown control {kind!r}")
        return ("control", data)
    try:
        window = VibrationWindow(
            worker_id=str(data["worker"]),
            tool_label=str(data.get("tool", "")),
            start=float(data["start"]),
            end=float(data["end"]),
            awx=float(data["awx"]),
            awy=float(data["awy"]),
            awz=float(data["awz"]),
        )
    except KeyError as exc:
        raise DataError(f"stream line {lineno}: missing field {exc}") from exc
    except (TypeError, ValueError) as exc:
        raise DataError(f"stream line {lineno}: {exc}") from exc
    return ("window", window)


def cmd_hav(args) -> int:
    if args.stream == "-":
        lines = sys.stdin.read().splitlines()
    else:
        try:
            lines = Path(args.stream).read_text(encoding="utf-8").splitlines()
        except OSError as exc:
            raise DataError(f"cannot read stream: {exc}") from exc

    monitor = HavMonitor(MonitorConfig(eav=args.eav, idle_gap_s=args.idle_gap, day_offset_s=args.day_offset))
    records = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        kind, payload = _parse_stream_line(line, lineno)
        try:
            if kind == "window":
                records.extend(monitor.ingest(payload))
            elif payload["control"] == "end_session":
                records.extend(monitor.end_session(str(payload.get("worker", ""))))
            else:
                records.extend(monitor.end_day())
        except StreamOrderError as exc:
            raise DataError(f"stream line {lineno}: {exc}") from exc
    records.extend(monitor.flush())

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "records.json").write_text(records_to_json(records), encoding="utf-8")
    if not args.no_figures:
        figures.save_exposure_figure(monitor, records, out / "exposure.png")
    for s in monitor.summaries():
        flag = "yes" if s["triggered"] else "no"
        print(
            f"worker={s['workerId']} A(8)={s['a8']:.3f} m/s^2 "
            f"action-triggered={flag} windows={s['windows']}"
        )
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_common_prior_flags(p) -> None:
    p.add_argument("--offline", action="store_true", help="skip the prior service, use the keyword fallback")
    p.add_argument("--endpoint", default=None, help="chat-completion endpoint URL for priors")
    p.add_argument("--model", default="prior-model", help="model identifier sent to the prior service")
    p.add_argument("--timeout", type=float, default=10.0)
    p.add_argument("--retries", type=int, default=1)
    p.add_argument("--cache", default=None, help="JSON cache file for resolved priors")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sitealign",
        description="Scan-to-model registration with semantic gravity priors, plus site-safety tooling.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("scene-gen", help="generate a synthetic scenario (cloud, meshes, poses)")
    p.add_argument("--preset", required=True, help="scenario preset name")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_scene_gen)

    p = sub.add_parser("register", help="align model meshes to a scene cloud")
    p.add_argument("--preset", default=None, help="generate the scene from a preset")
    p.add_argument("--object", default=None, help="restrict a preset run to one object label")
    p.add_argument("--job", default=None, help="job JSON (model, scene, initialPose, params, prior)")
    p.add_argument("--mode", default="both", help="icp, sgicp, or both")
    p.add_argument("--bias-mode", default="penalty", choices=("penalty", "corrective"))
    p.add_argument("--config", default=None, help="JSON file with registration parameters")
    p.add_argument("--priors-file", default=None, help="prior table JSON (overrides service/fallback)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--sample-count", type=int, default=None)
    p.add_argument("--max-iterations", type=int, default=None)
    p.add_argument("--restarts", type=int, default=None)
    p.add_argument("--trim-fraction", type=float, default=None)
    p.add_argument("--max-pair-distance", type=float, default=None)
    p.add_argument("--gamma-initial", type=float, default=None, help="base gravity weight before the family bias")
    p.add_argument("--trace", action="store_true", help="embed a per-iteration trace in results")
    p.add_argument("--out", required=True)
    p.add_argument("--no-figures", action="store_true")
    _add_common_prior_flags(p)
    p.set_defaults(func=cmd_register)

    p = sub.add_parser("eval", help="compare registration results against ground truth")
    p.add_argument("--results", required=True, help="directory with result_icp.json and result_sgicp.json")
    p.add_argument("--truth", required=True, help="poses.json written by scene-gen")
    p.add_argument("--samples", type=int, default=1500, help="surface samples per object for the metrics")
    p.add_argument("--seed", type=int, default=12345)
    p.add_argument("--out", required=True)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("priors", help="resolve upright-bias priors for BIM labels")
    p.add_argument("--labels", required=True, help="JSON array of raw BIM family labels")
    p.add_argument("--out", required=True, help="output prior table JSON")
    p.add_argument("--context", default="building site")
    p.add_argument("--no-fallback", action="store_true")
    _add_common_prior_flags(p)
    p.set_defaults(func=cmd_priors)

    p = sub.add_parser("hav", help="process a vibration telemetry stream into safety records")
    p.add_argument("--stream", required=True, help="JSONL file of windows and control lines, or - for stdin")
    p.add_argument("--out", required=True)
    p.add_argument("--eav", type=float, default=2.5)
    p.add_argument("--idle-gap", type=float, default=600.0)
    p.add_argument("--day-offset", type=float, default=0.0)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_hav)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (InfeasibleRegistrationError, InsufficientSceneError, DegenerateGeometryError, EmptyMeshError) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return 4
    except (DataError, StreamOrderError, PriorServiceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except SitealignError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
