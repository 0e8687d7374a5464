"""Experiment harness: config loading, seeded runs, metrics and plot data.

Logs are JSON-lines: a header record (seed, terrain, full config), then the
controller's ``init``/``step`` records and a closing ``end`` record.  Every
metric here is recomputed from those records alone.
"""

from __future__ import annotations

import copy
import csv
import io
import json
import math
import sys
from dataclasses import MISSING, asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .controller import ControllerConfig, SearchConfig, Simulation, run
from .errors import ConfigError, ParseError
from .geometry import ArcSpec, Pose2D, RobotParams
from .sensor import SensorParams
from .terrain import BeamTerrain, TableTerrain, Terrain
from .vision import Camera, DetectionParams, write_pgm

# Per-terrain starting geometry.  The start pose puts the initial arc across
# the tracked edge; the table walks longer strides so the curvature outruns
# the arc often enough to exercise the search.
SCENARIOS = {
    "beam": {"start": (-60.0, 0.0, 0.0), "arc_center": -7.0, "step_length": 40.0, "max_iterations": 10,
             "safe_offset": 7.0},
    # the rim curves away under every step, so footholds sit a degree further in
    "table": {"start": (0.0, -568.0, 0.0), "arc_center": -5.0, "step_length": 120.0, "max_iterations": 16,
              "safe_offset": 8.0},
}


@dataclass(frozen=True)
class ExperimentConfig:
    terrain: Terrain
    robot: RobotParams
    sensor: SensorParams
    detection: DetectionParams
    camera: Camera
    controller: ControllerConfig
    start: Pose2D
    seeds: tuple[int, ...]
    name: str = "experiment"
    image_dir: str | None = None
    out_dir: str = "runs"

    def __post_init__(self):
        if not self.seeds:
            raise ConfigError("experiment.seeds", "at least one seed is required")

    @property
    def terrain_kind(self) -> str:
        return "beam" if isinstance(self.terrain, BeamTerrain) else "table"

    def to_dict(self) -> dict:
        """Everything that affects a run; the output location is left out."""
        return {
            "name": self.name,
            "terrain": {"kind": self.terrain_kind, **asdict(self.terrain)},
            "robot": asdict(self.robot),
            "sensor": asdict(self.sensor),
            "detection": asdict(self.detection),
            "camera": asdict(self.camera),
            "controller": asdict(self.controller),
            "start": self.start.to_dict(),
        }

    def simulation(self) -> Simulation:
        return Simulation(self.robot, self.sensor, self.terrain, detection=self.detection, camera=self.camera)


# ---------------------------------------------------------------- loading


def _coerce(value, default, path: str):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(path, f"expected true/false, got {value!r}")
        return value
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(path, f"expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, f"expected a number, got {value!r}")
        return float(value)
    if isinstance(default, tuple):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(path, f"expected a list, got {value!r}")
        return tuple(float(v) for v in value)
    return value


def _build(cls, table: dict, path: str, nested: dict | None = None, **extra):
    """Instantiate a params dataclass from a config table, naming bad keys by path."""
    if not isinstance(table, dict):
        raise ConfigError(path, "expected a table")
    nested = nested or {}
    known = {f.name: f for f in fields(cls) if not f.name.startswith("_")}
    kwargs = dict(extra)
    for key, value in table.items():
        key_path = f"{path}.{key}"
        if key in nested:
            kwargs[key] = nested[key](value, key_path)
            continue
        if key not in known:
            raise ConfigError(key_path, "unknown key")
        f = known[key]
        default = f.default if f.default is not MISSING else None
        if default is None:
            kwargs[key] = _optional(value, key_path)
        else:
            kwargs[key] = _coerce(value, default, key_path)
    try:
        return cls(**kwargs)
    except (ValueError, TypeError) as exc:
        raise ConfigError(path, str(exc)) from None


def _optional(value, path: str):
    if isinstance(value, bool):
        raise ConfigError(path, f"unexpected boolean {value!r}")
    if isinstance(value, list):
        try:
            return tuple(tuple(float(x) for x in row) for row in value)
        except (TypeError, ValueError):
            raise ConfigError(path, "expected a list of [axial_mm, height_mm] pairs") from None
    if not isinstance(value, int):
        raise ConfigError(path, f"expected an integer, got {value!r}")
    return value


def _terrain(table: dict, kind: str) -> Terrain:
    body = {k: v for k, v in table.items() if k != "kind"}
    if kind == "beam":
        return _build(BeamTerrain, body, "terrain")
    if kind == "table":
        return _build(TableTerrain, body, "terrain")
    raise ConfigError("terrain.kind", f"expected 'beam' or 'table', got {kind!r}")


def _read_file(path) -> dict:
    p = Path(path)
    try:
        text = p.read_bytes()
    except OSError as exc:
        raise ConfigError(str(path), f"cannot read config: {exc.strerror}") from None
    try:
        if p.suffix.lower() == ".json":
            raw = json.loads(text)
        else:
            raw = tomllib.loads(text.decode("utf-8"))
    except (ValueError, UnicodeDecodeError) as exc:
        raise ConfigError(str(path), f"cannot parse config: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError(str(path), "top level must be a table")
    return raw


def config_from_dict(raw: dict, terrain: str | None = None, seeds=None, sensing: bool | None = None,
                     use_image_pipeline: bool | None = None, out_dir: str | None = None) -> ExperimentConfig:
    """Resolve a raw config tree plus command-line overrides.

    Switching ``terrain`` away from the file's kind drops the file's terrain
    geometry and scenario keys (start pose, step length, iteration count, arc
    centre) in favour of the new terrain's scenario.
    """
    raw = copy.deepcopy(raw)
    for section in raw:
        if section not in ("experiment", "terrain", "start", "robot", "sensor", "detection", "camera", "controller"):
            raise ConfigError(section, "unknown section")

    ctrl = raw.get("controller")
    if not isinstance(ctrl, dict) or "tolerance" not in ctrl:
        raise ConfigError("controller.tolerance", "required")

    terrain_table = raw.get("terrain", {})
    if not isinstance(terrain_table, dict):
        raise ConfigError("terrain", "expected a table")
    file_kind = terrain_table.get("kind")
    kind = terrain or file_kind
    if kind is None:
        raise ConfigError("terrain.kind", "required")
    if kind not in SCENARIOS:
        raise ConfigError("terrain.kind", f"expected 'beam' or 'table', got {kind!r}")
    if file_kind is not None and kind != file_kind:
        terrain_table = {}
        raw.pop("start", None)
        raw.get("robot", {}).pop("step_length", None)
        ctrl.pop("max_iterations", None)
        ctrl.pop("safe_offset", None)
        if isinstance(ctrl.get("arc"), dict):
            ctrl["arc"].pop("center_angle", None)
    scenario = SCENARIOS[kind]

    robot_table = dict(raw.get("robot", {}))
    robot_table.setdefault("step_length", scenario["step_length"])
    robot = _build(RobotParams, robot_table, "robot")
    sensor = _build(SensorParams, raw.get("sensor", {}), "sensor")

    detection_table = dict(raw.get("detection", {}))
    image_dir = detection_table.pop("image_dir", None)
    if image_dir is not None and not isinstance(image_dir, str):
        raise ConfigError("detection.image_dir", "expected a path string")
    detection = _build(DetectionParams, detection_table, "detection")
    camera = _build(Camera, raw.get("camera", {}), "camera")

    ctrl = dict(ctrl)
    ctrl.setdefault("max_iterations", scenario["max_iterations"])
    ctrl.setdefault("safe_offset", scenario["safe_offset"])
    if sensing is not None:
        ctrl["sensing"] = sensing
    if use_image_pipeline is not None:
        ctrl["use_image_pipeline"] = use_image_pipeline

    def arc(value, path):
        value = dict(value) if isinstance(value, dict) else value
        if isinstance(value, dict):
            default_arc = ControllerConfig().arc
            value.setdefault("center_angle", scenario["arc_center"])
            value.setdefault("half_extent", default_arc.half_extent)
            value.setdefault("num_taps", default_arc.num_taps)
        return _build(ArcSpec, value, path)

    if "arc" not in ctrl:
        ctrl["arc"] = {}
    controller = _build(ControllerConfig, ctrl, "controller",
                        nested={"arc": arc, "search": lambda v, p: _build(SearchConfig, v, p)})

    start_table = raw.get("start", {})
    if not isinstance(start_table, dict):
        raise ConfigError("start", "expected a table")
    sx, sy, sh = scenario["start"]
    start_values = {"x": sx, "y": sy, "heading": sh}
    for key, value in start_table.items():
        if key not in start_values:
            raise ConfigError(f"start.{key}", "unknown key")
        start_values[key] = _coerce(value, 0.0, f"start.{key}")
    start = Pose2D(**start_values)

    exp = raw.get("experiment", {})
    if not isinstance(exp, dict):
        raise ConfigError("experiment", "expected a table")
    for key in exp:
        if key not in ("name", "seeds", "out"):
            raise ConfigError(f"experiment.{key}", "unknown key")
    if seeds:
        seed_list = list(seeds)
    else:
        seed_list = exp.get("seeds")
        if seed_list is None:
            raise ConfigError("experiment.seeds", "required (or pass --seed)")
        if not isinstance(seed_list, list):
            raise ConfigError("experiment.seeds", "expected a list of integers")
    for s in seed_list:
        if isinstance(s, bool) or not isinstance(s, int) or s < 0:
            raise ConfigError("experiment.seeds", f"seeds must be non-negative integers, got {s!r}")
    name = exp.get("name", kind)
    if not isinstance(name, str):
        raise ConfigError("experiment.name", "expected a string")

    return ExperimentConfig(
        terrain=_terrain(terrain_table, kind),
        robot=robot,
        sensor=sensor,
        detection=detection,
        camera=camera,
        controller=controller,
        start=start,
        seeds=tuple(seed_list),
        name=name,
        image_dir=image_dir,
        out_dir=out_dir or exp.get("out", "runs"),
    )


def load_config(path, **overrides) -> ExperimentConfig:
    return config_from_dict(_read_file(path), **overrides)


def default_config(kind: str = "beam", seeds=(0,), **controller_kw) -> ExperimentConfig:
    """Scenario defaults for ``kind`` with optional controller overrides."""
    ctrl = {"tolerance": 3.0, **controller_kw}
    return config_from_dict({"terrain": {"kind": kind}, "controller": ctrl}, seeds=list(seeds))


# ---------------------------------------------------------------- running


def _dumps(record: dict) -> str:
    return json.dumps(record, sort_keys=True, allow_nan=False)


def run_seed(config: ExperimentConfig, seed: int, sim: Simulation | None = None) -> list[dict]:
    """One controller run, as log records starting with the header."""
    sim = sim or config.simulation()
    header = {"type": "header", "seed": int(seed), "config": config.to_dict()}
    return [header] + run(config.controller, sim, config.start, int(seed))


def log_stem(config: ExperimentConfig, seed: int) -> str:
    return f"{config.name}_seed{seed:04d}"


def run_experiment(config: ExperimentConfig, out_dir=None) -> "MetricsReport":
    """Run every seed, write logs, CSV tables and ``metrics.json``; return the report."""
    out = Path(out_dir or config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    logs = []
    for seed in config.seeds:
        sim = config.simulation()
        if config.image_dir and config.controller.use_image_pipeline:
            img_dir = Path(config.image_dir) / log_stem(config, seed)
            img_dir.mkdir(parents=True, exist_ok=True)
            sim = replace(sim, image_sink=lambda k, img, d=img_dir: write_pgm(img, d / f"tap{k:05d}.pgm"))
        records = run_seed(config, seed, sim)
        stem = log_stem(config, seed)
        (out / f"{stem}.jsonl").write_text("".join(_dumps(r) + "\n" for r in records))
        (out / f"{stem}.footholds.csv").write_text(foothold_csv(records))
        (out / f"{stem}.dissimilarity.csv").write_text(emit_plot_data(records, "dissimilarity"))
        logs.append(records)
    report = compute_metrics(logs)
    (out / "metrics.json").write_text(json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n")
    return report


# ---------------------------------------------------------------- log access


def read_log(path) -> list[dict]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}: invalid JSON ({exc.msg})", line=lineno) from None
            if not isinstance(rec, dict) or "type" not in rec:
                raise ParseError(f"{path}: record without a type", line=lineno)
            records.append(rec)
    _check(records, str(path))
    return records


def _check(records: list[dict], name: str = "log") -> None:
    if not records:
        raise ParseError(f"{name}: empty log", line=0)
    if records[0].get("type") != "header":
        raise ParseError(f"{name}: first record must be the header", line=1)
    if records[-1].get("type") != "end":
        raise ParseError(f"{name}: log has no end record", line=len(records))
    for lineno, rec in enumerate(records, start=1):
        if rec.get("type") in ("init", "step") and "foothold" not in rec:
            raise ParseError(f"{name}: {rec['type']} record without a foothold", line=lineno)


def _records(log) -> list[dict]:
    if isinstance(log, (str, Path)):
        return read_log(log)
    records = list(log)
    _check(records)
    return records


def _steps(records: list[dict]) -> list[dict]:
    return [r for r in records if r["type"] in ("init", "step")]


def safe_target(config: dict) -> float:
    """Signed edge distance the footholds aim for (mm)."""
    terrain = config["terrain"]
    if terrain["kind"] == "beam":
        return terrain["width"] / 2.0
    return config["robot"]["hip_radius"] * math.radians(config["controller"]["safe_offset"])


# ---------------------------------------------------------------- metrics


@dataclass(frozen=True)
class RunMetrics:
    seed: int
    terrain: str
    event: str
    completed: bool
    footholds: int
    mean_displacement: float
    max_displacement: float
    min_signed_distance: float
    max_signed_distance: float
    taps: int
    arcs: int
    searches: int
    retrains: int
    coverage_deg: float | None = None


@dataclass(frozen=True)
class MetricsReport:
    runs: list[RunMetrics] = field(default_factory=list)

    @property
    def successful(self) -> list[RunMetrics]:
        return [r for r in self.runs if r.completed]

    @property
    def success_rate(self) -> float:
        return len(self.successful) / len(self.runs) if self.runs else 0.0

    def aggregate(self) -> dict:
        ok = self.successful
        out = {"n_runs": len(self.runs), "n_completed": len(ok), "success_rate": self.success_rate}
        if ok:
            out.update({
                "mean_displacement": float(np.mean([r.mean_displacement for r in ok])),
                "max_displacement": float(max(r.max_displacement for r in ok)),
                "median_taps": float(np.median([r.taps for r in ok])),
                "median_arcs": float(np.median([r.arcs for r in ok])),
                "mean_taps": float(np.mean([r.taps for r in ok])),
            })
        return out

    def to_dict(self) -> dict:
        return {"runs": [asdict(r) for r in self.runs], "aggregate": self.aggregate()}


def displacement_stats(signed_distances, target: float) -> tuple[float, float]:
    d = np.abs(np.asarray(signed_distances, dtype=float) - target)
    return float(d.mean()), float(d.max())


def run_metrics(log) -> RunMetrics:
    records = _records(log)
    header, end = records[0], records[-1]
    config = header["config"]
    steps = _steps(records)
    s = [r["foothold"]["signed_edge_distance"] for r in steps]
    supported = all(r["foothold"]["supported"] for r in steps)
    mean_d, max_d = displacement_stats(s, safe_target(config)) if s else (float("nan"), float("nan"))

    arcs = [a for r in steps for a in r.get("arcs", [])]
    n_step = sum(1 for r in steps if r["type"] == "step")
    taps = 2 * n_step + sum(a["num_taps"] for a in arcs)

    coverage = None
    if config["terrain"]["kind"] == "table" and steps:
        cx, cy = config["terrain"]["center"]
        ang = np.unwrap([math.atan2(r["foothold"]["y"] - cy, r["foothold"]["x"] - cx) for r in steps])
        coverage = float(math.degrees(ang.max() - ang.min()))

    return RunMetrics(
        seed=header["seed"],
        terrain=config["terrain"]["kind"],
        event=end["event"],
        completed=end["event"] == "completed" and supported,
        footholds=len(steps),
        mean_displacement=mean_d,
        max_displacement=max_d,
        min_signed_distance=float(min(s)) if s else float("nan"),
        max_signed_distance=float(max(s)) if s else float("nan"),
        taps=taps,
        arcs=len(arcs),
        searches=sum(1 for r in steps if r.get("searched")),
        retrains=sum(1 for r in steps if r.get("retrained")),
        coverage_deg=coverage,
    )


def compute_metrics(logs) -> MetricsReport:
    """Per-run and aggregate metrics from log files or in-memory record lists."""
    logs = list(logs)
    if not logs:
        raise ParseError("no logs given", line=0)
    return MetricsReport([run_metrics(log) for log in logs])


# ---------------------------------------------------------------- CSV output


def _csv(header: list[str], rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _num(v) -> str:
    # repr round-trips, so values parsed back compare equal
    return "" if v is None else repr(float(v))


def foothold_csv(log) -> str:
    records = _records(log)
    rows = [[r["iteration"], _num(r["foothold"]["x"]), _num(r["foothold"]["y"]),
             _num(r["foothold"]["signed_edge_distance"]), int(bool(r.get("retrained", False)))]
            for r in _steps(records)]
    return _csv(["iteration", "x", "y", "signed_edge_distance", "retrained"], rows)


PLOT_KINDS = ("trajectory", "dissimilarity", "displacement-bar")


def emit_plot_data(log, kind: str) -> str:
    """Plot-ready CSV text for one log."""
    records = _records(log)
    steps = _steps(records)
    if kind == "trajectory":
        rows = []
        for r in steps:
            it = r["iteration"]
            if r["type"] == "init":
                rows += [[it, "arc", _num(t["world_point"][0]), _num(t["world_point"][1])]
                         for a in r["arcs"] for t in a["taps"]]
            else:
                for role in ("tap1", "tap2"):
                    p = r[role]["world_point"]
                    rows.append([it, role, _num(p[0]), _num(p[1])])
                rows += [[it, "arc", _num(t["world_point"][0]), _num(t["world_point"][1])]
                         for a in r["arcs"] for t in a["taps"]]
            rows.append([it, "foothold", _num(r["foothold"]["x"]), _num(r["foothold"]["y"])])
        return _csv(["iter", "role", "x_mm", "y_mm"], rows)

    if kind == "displacement-bar":
        config = records[0]["config"]
        target = safe_target(config)
        if config["terrain"]["kind"] == "beam":
            half = config["terrain"]["width"] / 2.0
            lo, hi = -half, half
        else:
            lo, hi = -target, None  # the table has no inner edge
        rows = [[r["iteration"], _num(r["foothold"]["signed_edge_distance"] - target), _num(lo), _num(hi)]
                for r in steps]
        return _csv(["iter", "displacement_mm", "lower_limit_mm", "upper_limit_mm"], rows)

    if kind == "dissimilarity":
        rows = []
        for r in steps:
            for a in r.get("arcs", []):
                if "dissimilarity" not in a:
                    continue
                for t, d, lab in zip(a["taps"], a["dissimilarity"], a["labels"]):
                    rows.append([a["id"], a["kind"], r["iteration"], _num(t["hip_angle"]), _num(d), _num(lab)])
        return _csv(["arc_id", "arc_kind", "iter", "hip_angle", "dissimilarity", "label"], rows)

    raise ValueError(f"unknown plot kind {kind!r}; expected one of {', '.join(PLOT_KINDS)}")
