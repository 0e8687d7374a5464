"""High-level contour following with online-learned tactile perception.

One run: tap an arc, pick the edge reference, fit the model, then per step
tap twice (predict, move, verify), collect a fresh arc when the verification
tap is off by more than the tolerance, plant the foot a safe angle inside the
edge and walk on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from . import perception as P
from .errors import EdgeLost, NoTransition, SearchExhausted, TrackingLost
from .geometry import ArcSpec, Pose2D, RobotParams, apply_actuation_noise, foot_position, turn_and_step
from .sensor import PinLayout, SensorParams, TapFrame, simulate_tap
from .terrain import Terrain, edge_hip_angle, is_supported, signed_edge_distance, signed_edge_distances
from .vision import Camera, DetectionParams, detect_pins, match_pins, render_image

Predictor = Callable[[P.GPModel, np.ndarray, dict], "tuple[float, float]"]


@dataclass(frozen=True)
class SearchConfig:
    max_sweeps: int = 3
    extent_growth: float = 1.5


@dataclass(frozen=True)
class ControllerConfig:
    tolerance: float = 3.0
    safe_offset: float = 7.0
    max_iterations: int = 10
    arc: ArcSpec = ArcSpec(center_angle=0.0, half_extent=7.5, num_taps=31)
    search: SearchConfig = SearchConfig()
    sensing: bool = True
    retrain: bool = True
    reference_index: int | None = None
    min_contrast: float = 0.1
    noise_floor: float = 0.5
    use_image_pipeline: bool = False

    def __post_init__(self):
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


@dataclass
class Simulation:
    """Everything a run touches that is not controller state."""

    robot: RobotParams
    sensor: SensorParams
    terrain: Terrain
    layout: PinLayout = field(default_factory=PinLayout.concentric)
    detection: DetectionParams = field(default_factory=DetectionParams)
    camera: Camera = field(default_factory=Camera)
    image_sink: Callable[[int, np.ndarray], None] | None = None  # receives (tap index, image)


@dataclass
class ControllerState:
    pose: Pose2D
    model: P.GPModel
    reference: P.ReferenceTap | None
    edge_angle: float
    rng: np.random.Generator
    log: list = field(default_factory=list)
    iteration: int = 0
    arc_count: int = 0
    tap_count: int = 0
    search_count: int = 0


def gp_predictor(model: P.GPModel, feature: np.ndarray, meta: dict) -> tuple[float, float]:
    return P.predict(model, feature)


def blind_predictor(model: P.GPModel, feature: np.ndarray, meta: dict) -> tuple[float, float]:
    return 0.0, 0.0


def true_edge_angle(terrain: Terrain, pose: Pose2D, robot: RobotParams, near: float = 0.0,
                    span: float = 60.0) -> float | None:
    """Ground-truth hip angle of the edge crossing nearest ``near`` (None if absent)."""
    foot_at = lambda a: foot_position(pose, robot, a)  # noqa: E731
    grid = np.arange(near - span, near + span + 1e-9, 0.5)
    rad = np.radians(pose.heading + grid)
    pts = pose.position + robot.hip_radius * np.column_stack([np.cos(rad), np.sin(rad)])
    s = signed_edge_distances(terrain, pts)
    crossings = np.flatnonzero((s[:-1] < 0) & (s[1:] >= 0))
    if crossings.size == 0:
        return None
    i = int(crossings[np.argmin(np.abs(grid[crossings] - near))])
    return edge_hip_angle(terrain, foot_at, grid[i], grid[i + 1])


def _pt(p) -> list[float]:
    return [float(p[0]), float(p[1])]


def _tap(state: ControllerState, sim: Simulation, config: ControllerConfig, hip_angle: float) -> tuple[TapFrame, dict]:
    commanded = foot_position(state.pose, sim.robot, hip_angle)
    actual = apply_actuation_noise(commanded, sim.robot, state.rng)
    meta = {"hip_angle": float(hip_angle), "world_point": _pt(actual), "timestamp": state.tap_count}
    yaw = state.pose.heading + hip_angle
    frame = simulate_tap(sim.layout, sim.sensor, sim.terrain, actual, state.rng, yaw=yaw, meta=meta)
    if config.use_image_pipeline:
        image = render_image(frame, sim.detection, sim.camera, state.rng)
        if sim.image_sink is not None:
            sim.image_sink(state.tap_count, image)
        centroids = detect_pins(image, sim.detection)
        frame = match_pins(centroids, sim.layout.rest_positions, sim.camera,
                           contact_flag=frame.contact_flag, meta=meta)
    state.tap_count += 1
    truth = true_edge_angle(sim.terrain, state.pose, sim.robot, near=hip_angle)
    record = {
        "hip_angle": float(hip_angle),
        "world_point": _pt(actual),
        "signed_edge_distance": signed_edge_distance(sim.terrain, actual),
        "contact": bool(frame.contact_flag),
        "true_displacement": None if truth is None else float(hip_angle - truth),
        "feature": [float(v) for v in frame.feature()],
    }
    return frame, record


def _collect_arc(state: ControllerState, sim: Simulation, config: ControllerConfig, arc: ArcSpec):
    taps, records = [], []
    for a in arc.angles():
        frame, rec = _tap(state, sim, config, float(a))
        taps.append((float(a), frame.feature()))
        records.append(rec)
    state.arc_count += 1
    return taps, records


def _arc_record(kind: str, arc_id: int, arc: ArcSpec, records: list, alignment: P.Alignment | None) -> dict:
    out = {
        "id": arc_id,
        "kind": kind,
        "center": arc.center_angle,
        "half_extent": arc.half_extent,
        "num_taps": arc.num_taps,
        "taps": records,
    }
    if alignment is not None:
        out.update({
            "dissimilarity": [float(v) for v in alignment.profile],
            "labels": [float(v) for v in alignment.labels],
            "edge_angle": alignment.edge_angle,
            "boundary": alignment.boundary,
            "flat": alignment.flat,
        })
    return out


def _plant_and_walk(state: ControllerState, sim: Simulation, config: ControllerConfig, edge: float) -> dict:
    target_angle = edge + config.safe_offset
    commanded = foot_position(state.pose, sim.robot, target_angle)
    actual = apply_actuation_noise(commanded, sim.robot, state.rng)
    foothold = {
        "hip_angle": float(target_angle),
        "x": float(actual[0]),
        "y": float(actual[1]),
        "signed_edge_distance": signed_edge_distance(sim.terrain, actual),
        "supported": bool(is_supported(sim.terrain, actual)),
    }
    state.pose = turn_and_step(state.pose, sim.robot, actual, state.rng)
    state.edge_angle = float(edge)
    return foothold


def initialize(config: ControllerConfig, sim: Simulation, start: Pose2D, seed) -> ControllerState:
    rng = np.random.default_rng(seed)
    state = ControllerState(pose=start, model=P.GPModel(noise_floor=config.noise_floor), reference=None,
                            edge_angle=config.arc.center_angle, rng=rng)
    pose_before = start
    taps, records = _collect_arc(state, sim, config, config.arc)
    state.reference = P.select_reference(taps, sim.layout.rest_positions, override=config.reference_index,
                                         source={"arc_id": 0})
    alignment = P.align_arc(taps, state.reference, min_contrast=config.min_contrast)
    state.model = P.update(state.model, alignment.taps)
    foothold = _plant_and_walk(state, sim, config, alignment.edge_angle)
    state.log.append({
        "type": "init",
        "iteration": 0,
        "pose_before": pose_before.to_dict(),
        "reference": state.reference.to_dict(),
        "arcs": [_arc_record("init", 0, config.arc, records, alignment)],
        "edge_angle": alignment.edge_angle,
        "foothold": foothold,
        "pose_after": state.pose.to_dict(),
        "n_train": state.model.n_train,
        "taps_total": state.tap_count,
    })
    return state


def search_edge(state: ControllerState, config: ControllerConfig, sim: Simulation, center: float,
                start_sweep: int = 0, arcs_out: list | None = None) -> float:
    """Sweep ever wider arcs about ``center`` until the reference minimum is bracketed."""
    base = config.arc
    state.search_count += 1
    for sweep in range(start_sweep, config.search.max_sweeps + 1):
        half = base.half_extent * config.search.extent_growth ** sweep
        n = 2 * int(round(half / base.spacing)) + 1
        arc = ArcSpec(center_angle=center, half_extent=half, num_taps=n)
        taps, records = _collect_arc(state, sim, config, arc)
        alignment = P.align_arc(taps, state.reference, min_contrast=config.min_contrast)
        if arcs_out is not None:
            arcs_out.append(_arc_record("search", state.arc_count - 1, arc, records, alignment))
        if alignment.bracketed:
            state.model = P.update(state.model, alignment.taps)
            return alignment.edge_angle
    raise SearchExhausted(f"edge not bracketed after {config.search.max_sweeps} widening sweeps")


def _retrain(state: ControllerState, config: ControllerConfig, sim: Simulation, center: float,
             arcs_out: list) -> float:
    arc = replace(config.arc, center_angle=center)
    taps, records = _collect_arc(state, sim, config, arc)
    alignment = P.align_arc(taps, state.reference, min_contrast=config.min_contrast)
    arcs_out.append(_arc_record("retrain", state.arc_count - 1, arc, records, alignment))
    if not alignment.bracketed:
        raise EdgeLost(f"reference minimum not inside the arc centred at {center:.2f} deg")
    state.model = P.update(state.model, alignment.taps)
    return alignment.edge_angle


def control_step(state: ControllerState, config: ControllerConfig, sim: Simulation,
                 predictor: Predictor | None = None) -> tuple[ControllerState, dict]:
    if predictor is None:
        predictor = gp_predictor if config.sensing else blind_predictor
    state.iteration += 1
    pose_before = state.pose

    a1 = state.edge_angle
    f1, tap1 = _tap(state, sim, config, a1)
    th1, sd1 = predictor(state.model, f1.feature(), tap1)
    tap1.update(predicted=float(th1), std=float(sd1))

    a2 = a1 - th1
    f2, tap2 = _tap(state, sim, config, a2)
    th2, sd2 = predictor(state.model, f2.feature(), tap2)
    tap2.update(predicted=float(th2), std=float(sd2))

    retrained = abs(th2) > config.tolerance
    arcs: list[dict] = []
    searched = False
    edge = a2 - th2
    if retrained and config.retrain and config.sensing:
        try:
            edge = _retrain(state, config, sim, a2, arcs)
        except EdgeLost:
            searched = True
            edge = search_edge(state, config, sim, a2, start_sweep=1, arcs_out=arcs)

    foothold = _plant_and_walk(state, sim, config, edge)
    record = {
        "type": "step",
        "iteration": state.iteration,
        "pose_before": pose_before.to_dict(),
        "tap1": tap1,
        "tap2": tap2,
        "retrained": bool(retrained),
        "searched": searched,
        "arcs": arcs,
        "edge_angle": float(edge),
        "foothold": foothold,
        "pose_after": state.pose.to_dict(),
        "n_train": state.model.n_train,
        "taps_total": state.tap_count,
    }
    state.log.append(record)
    return state, record


def run(config: ControllerConfig, sim: Simulation, start: Pose2D, seed,
        predictor: Predictor | None = None) -> list[dict]:
    """Initialise then step until done, a fall, or an exhausted search.

    Returns the log records, ending with an ``end`` record naming the event.
    """
    event = "completed"
    detail = ""
    state = None
    try:
        state = initialize(config, sim, start, seed)
        if not state.log[-1]["foothold"]["supported"]:
            event = "fall"
        else:
            for _ in range(config.max_iterations):
                _, rec = control_step(state, config, sim, predictor)
                if not rec["foothold"]["supported"]:
                    event = "fall"
                    break
    except SearchExhausted as exc:
        event, detail = "search_exhausted", str(exc)
    except NoTransition as exc:
        event, detail = "no_transition", str(exc)
    except TrackingLost as exc:
        event, detail = "tracking_lost", str(exc)
    log = list(state.log) if state is not None else []
    log.append({
        "type": "end",
        "event": event,
        "detail": detail,
        "iterations": state.iteration if state is not None else 0,
        "taps_total": state.tap_count if state is not None else 0,
        "arcs_total": state.arc_count if state is not None else 0,
        "searches": state.search_count if state is not None else 0,
    })
    return log
