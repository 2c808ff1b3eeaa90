"""Command-line interface.

Exit codes: 0 ok, 2 bad input, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from contextlib import nullcontext
from pathlib import Path

import numpy as np

from . import body_model, metrics
from .fusion import FusionConfig, FusionError
from .geometry import DomainError
from .harness import io
from .harness.evaluate import evaluate, matched
from .harness.scenario import ScenarioConfig, ScenarioError, generate
from .harness.tracker import Tracker, TrackerConfig
from .motion import WeightsError, load_gru_weights
from .prob_state import propagate_joints

log = logging.getLogger("bodyfuse")

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3


class InputError(Exception):
    pass


def _load_model(spec: str | None, seed: int = 0) -> body_model.BodyModel:
    """``path/to/model.json`` or ``synth:N`` (default ``synth:600``)."""
    spec = spec or "synth:600"
    if spec.startswith("synth"):
        _, _, n = spec.partition(":")
        try:
            return body_model.synth_model(int(n) if n else 600, seed)
        except ValueError as exc:
            raise InputError(f"--model {spec}: {exc}") from exc
    return body_model.load_model(spec)


def _load_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"{path}: {exc}") from exc


def _write_json(path, obj) -> None:
    text = json.dumps(obj, indent=2)
    if path in (None, "-"):
        print(text)
    else:
        Path(path).write_text(text + "\n")


def _threads(n):
    if not n:
        return nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def cmd_simulate(args) -> int:
    d = _load_json(args.scenario) if args.scenario else {}
    if args.seed is not None:
        d["seed"] = args.seed
    cfg = ScenarioConfig.from_json(d)
    model = _load_model(args.model)
    frames = generate(cfg, model)
    io.write_sequence(args.out, cfg, frames)
    log.info("wrote %d frames to %s", len(frames), args.out)
    return EXIT_OK


def cmd_track(args) -> int:
    model = _load_model(args.model)
    _, frames = io.read_sequence(args.sequence)
    cfg_d = _load_json(args.config) if args.config else {}
    weights = load_gru_weights(args.gru_weights) if args.gru_weights else None
    gate = cfg_d.get("gate")
    Q = cfg_d.get("process_noise")
    cfg = TrackerConfig(
        history=int(cfg_d.get("history", 4)),
        predictor=args.predictor,
        process_noise=None if Q is None else np.asarray(Q, dtype=float),
        gru_weights=weights,
        fusion=FusionConfig(gate=gate),
        propagate_vertices=args.vertices,
    )
    tr = Tracker(model, cfg)
    outs = [tr.step(f) for f in frames]
    io.write_outputs(args.out, outs)
    log.info("tracked %d frames (%d waiting)", len(frames), sum(o is None for o in outs))
    return EXIT_OK


def cmd_evaluate(args) -> int:
    model = _load_model(args.model)
    _, frames = io.read_sequence(args.sequence)
    outs = io.read_outputs(args.posteriors)
    report = evaluate(model, frames, outs, with_vertices=not args.no_vertices)
    _write_json(args.out, report.to_json())
    if args.csv:
        pf = report.per_frame
        cols = [c for c in ("index", "g_mpjpe", "pa_mpjpe", "g_pve", "mean_nees") if pf.get(c)]
        lines = [",".join(cols)]
        for i in range(len(pf["index"])):
            lines.append(",".join(str(pf[c][i]) for c in cols))
        Path(args.csv).write_text("\n".join(lines) + "\n")
    return EXIT_OK


def cmd_chi2(args) -> int:
    model = _load_model(args.model)
    _, frames = io.read_sequence(args.sequence)
    outs = io.read_outputs(args.posteriors)
    mus, covs, gts = [], [], []
    for f, o in matched(frames, outs):
        pg = propagate_joints(model, o.posterior)
        mus.append(pg.means)
        covs.append(pg.cov_blocks)
        gts.append(body_model.joints_camera(model, f.gt))
    if not mus:
        raise InputError("no frames with both ground truth and a posterior")
    res = metrics.chi2_consistency(np.array(mus), np.array(covs), np.array(gts))
    _write_json(args.out, metrics._jsonable({
        "dof": res.dof,
        "n": int(res.samples.size),
        "skipped": res.skipped,
        "mean_nees": res.mean_nees,
        "bin_edges": res.bin_edges,
        "counts": res.counts,
        "expected": res.expected,
    }))
    return EXIT_OK


def cmd_corr(args) -> int:
    states = io.read_states(args.states)
    C = metrics.posture_correlation(states)
    off = C[~np.eye(C.shape[0], dtype=bool)]
    _write_json(args.out, {
        "n_states": len(states),
        "max_offdiag": float(off.max()) if off.size else 0.0,
        "mean_offdiag": float(off.mean()) if off.size else 0.0,
        "matrix": C.tolist(),
    })
    return EXIT_OK


def cmd_bench(args) -> int:
    from .bench import run_bench

    sizes = [int(s) for s in args.sizes.split(",")]
    res = run_bench(sizes, backends=args.backend or None, repeats=args.repeats)
    _write_json(args.out, res)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bodyfuse", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    p.add_argument("--threads", type=int, default=None, help="limit BLAS threads")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_required=True):
        sp.add_argument("--model", default=None, help="model JSON path or synth:N (default synth:600)")
        sp.add_argument("--out", required=out_required, default=None)

    sp = sub.add_parser("simulate", help="generate a synthetic sequence (JSONL)")
    common(sp)
    sp.add_argument("--scenario", help="scenario config JSON")
    sp.add_argument("--seed", type=int, default=None)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("track", help="run the tracker over a sequence")
    common(sp)
    sp.add_argument("sequence")
    sp.add_argument("--config", help="tracker config JSON (history, process_noise, gate)")
    sp.add_argument("--predictor", choices=("constvel", "gru", "none"), default="constvel")
    sp.add_argument("--gru-weights")
    sp.add_argument("--vertices", action="store_true", help="also emit per-vertex Gaussians")
    sp.set_defaults(func=cmd_track)

    sp = sub.add_parser("evaluate", help="metrics report for tracker output")
    common(sp, out_required=False)
    sp.add_argument("posteriors")
    sp.add_argument("sequence")
    sp.add_argument("--csv", help="per-frame CSV dump")
    sp.add_argument("--no-vertices", action="store_true", help="skip G-PVE")
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("chi2", help="per-joint NEES histogram")
    common(sp, out_required=False)
    sp.add_argument("posteriors")
    sp.add_argument("sequence")
    sp.set_defaults(func=cmd_chi2)

    sp = sub.add_parser("corr", help="absolute posture correlation matrix")
    sp.add_argument("states")
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=cmd_corr)

    sp = sub.add_parser("bench", help="per-stage latency sweep over model sizes")
    sp.add_argument("--sizes", default="600,2000,6890")
    sp.add_argument("--backend", action="append", choices=("compiled", "python"))
    sp.add_argument("--repeats", type=int, default=20)
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=cmd_bench)
    return p


def run_cli(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.command == "track" and args.predictor == "gru" and not args.gru_weights:
        print("error: --predictor gru requires --gru-weights", file=sys.stderr)
        return EXIT_INPUT
    try:
        with _threads(args.threads):
            return args.func(args)
    except (InputError, io.FormatError, body_model.ModelError, ScenarioError, WeightsError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (FusionError, DomainError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
