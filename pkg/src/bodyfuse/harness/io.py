"""JSONL readers and writers for sequences and tracker output."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .. import geometry as geo
from ..body_model import HumanState
from ..prob_state import GaussianBodyState
from .scenario import ScenarioConfig, SequenceFrame
from .tracker import TrackOutput


class FormatError(ValueError):
    """Malformed input file; message carries ``path:line``."""


def dumps(obj) -> str:
    return json.dumps(obj, separators=(",", ":"), allow_nan=False)


def frame_to_json(f: SequenceFrame) -> dict:
    return {
        "type": "frame",
        "index": f.index,
        "t": f.t,
        "T_WC": f.T_WC.to_json(),
        "observation": None if f.observation is None else f.observation.to_json(),
        "gt": None if f.gt is None else f.gt.to_json(),
        "visibility": [bool(v) for v in f.visibility],
    }


def frame_from_json(d: dict) -> SequenceFrame:
    obs = d.get("observation")
    gt = d.get("gt")
    vis = d.get("visibility")
    obs = None if obs is None else GaussianBodyState.from_json(obs)
    if vis is None:
        n = 0 if obs is None else obs.var.shape[0]
        vis = np.ones(n, dtype=bool)
    return SequenceFrame(
        int(d["index"]), float(d["t"]), geo.RigidTransform.from_json(d["T_WC"]), obs,
        None if gt is None else HumanState.from_json(gt), np.asarray(vis, dtype=bool),
    )


def write_sequence(path, cfg: ScenarioConfig | None, frames) -> None:
    with open(path, "w") as fh:
        if cfg is not None:
            fh.write(dumps({"type": "header", "scenario": cfg.to_json()}) + "\n")
        for f in frames:
            fh.write(dumps(frame_to_json(f)) + "\n")


def _records(path):
    path = Path(path)
    try:
        fh = open(path)
    except OSError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    with fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc


def read_sequence(path) -> tuple[ScenarioConfig | None, list[SequenceFrame]]:
    cfg, frames, last_t = None, [], -np.inf
    for lineno, d in _records(path):
        try:
            kind = d.get("type", "frame")
            if kind == "header":
                cfg = ScenarioConfig.from_json(d["scenario"])
                continue
            f = frame_from_json(d)
        except (KeyError, TypeError, ValueError, IndexError) as exc:
            raise FormatError(f"{path}:{lineno}: {type(exc).__name__}: {exc}") from exc
        if f.t <= last_t:
            raise FormatError(f"{path}:{lineno}: timestamps must be strictly increasing")
        last_t = f.t
        frames.append(f)
    return cfg, frames


def output_to_json(o: TrackOutput) -> dict:
    d = {
        "type": "posterior",
        "index": o.index,
        "t": o.t,
        "source": o.source,
        "posterior": o.posterior.to_json(),
        "T_WC": o.T_WC.to_json(),
        "T_WH": o.T_WH.to_json(),
    }
    if o.vertices is not None:
        d["vertices"] = o.vertices.to_json()
    return d


def write_outputs(path, outputs) -> None:
    with open(path, "w") as fh:
        for o in outputs:
            if o is not None:
                fh.write(dumps(output_to_json(o)) + "\n")


def read_outputs(path) -> list[TrackOutput]:
    outs = []
    for lineno, d in _records(path):
        try:
            outs.append(TrackOutput(
                int(d["index"]), float(d["t"]), d.get("source", "fused"),
                GaussianBodyState.from_json(d["posterior"]), geo.RigidTransform.from_json(d["T_WC"]),
            ))
        except (KeyError, TypeError, ValueError, IndexError) as exc:
            raise FormatError(f"{path}:{lineno}: {type(exc).__name__}: {exc}") from exc
    return outs


def read_states(path) -> list[HumanState]:
    """Human states from any of our JSONL files: ``gt`` of sequence frames,
    ``posterior.mean`` of tracker output, or bare state records."""
    states = []
    for lineno, d in _records(path):
        try:
            if d.get("type") == "header":
                continue
            if "posterior" in d:
                states.append(HumanState.from_json(d["posterior"]["mean"]))
            elif "gt" in d:
                if d["gt"] is not None:
                    states.append(HumanState.from_json(d["gt"]))
            else:
                states.append(HumanState.from_json(d))
        except (KeyError, TypeError, ValueError, IndexError) as exc:
            raise FormatError(f"{path}:{lineno}: {type(exc).__name__}: {exc}") from exc
    return states
