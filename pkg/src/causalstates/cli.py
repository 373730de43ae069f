"""Command-line surface: simulate fixtures, embed, gap-fill, distances.

Exit codes: 0 success, 1 validation error (bad arguments, schema or input
problems), 2 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from .errors import CausalStatesError, NumericalError, ValidationError
from .pipeline import (PipelineConfig, run_embed, run_gapfill, write_coordinates,
                       write_eigenvalues, write_filled_series, write_manifest,
                       write_updated_coordinates, _atomic_write, _fmt)
from .systems import (PendulumConfig, ThreeWellConfig, simulate_pendulum,
                      simulate_three_well)


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on usage errors; those are validation
    # problems here, so raise and let main() map them to exit code 1
    def error(self, message):
        raise ValidationError(message)


def _build_parser() -> _Parser:
    p = _Parser(prog="causalstates",
                description="Predictive-state coordinates for time series")
    sub = p.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", parents=[], help="generate a fixture CSV")
    sim.add_argument("kind", choices=["pendulum-conservative", "pendulum-damped", "three-well"])
    sim.add_argument("--out", required=True, help="output CSV path")
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--dt", type=float, default=None)
    sim.add_argument("--steps", type=int, default=2000)
    sim.add_argument("--theta0", type=float, default=None)
    sim.add_argument("--omega0", type=float, default=0.0)
    sim.add_argument("--gravity", type=float, default=9.81)
    sim.add_argument("--length", type=float, default=1.0)
    sim.add_argument("--mass", type=float, default=1.0)
    sim.add_argument("--drag", type=float, default=None)
    sim.add_argument("--barrier", type=float, default=1.0)
    sim.add_argument("--temperature", type=float, default=0.25)
    sim.add_argument("--stride", type=int, default=125)

    for name in ("embed", "gapfill"):
        c = sub.add_parser(name, help=f"run the {name} pipeline")
        c.add_argument("--config", required=True, help="pipeline config JSON")
        c.add_argument("--threads", type=int, default=1)
        c.add_argument("--out", default=None, help="override the config output directory")
        c.add_argument("--seed", type=int, default=None, help="override the config seed")

    d = sub.add_parser("distance", help="diffusion distances between embedded states")
    d.add_argument("--coordinates", required=True, help="coordinates.csv from an embed run")
    d.add_argument("--eigenvalues", required=True, help="eigenvalues.json from the same run")
    d.add_argument("--pairs", required=True, nargs="+", help="anchor index pairs, i:l")
    d.add_argument("--m-used", type=int, default=None)
    d.add_argument("--out", required=True, help="output CSV path")
    return p


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def _write_csv(path, header, rows):
    lines = [",".join(header)]
    lines.extend(",".join(r) for r in rows)
    _atomic_write(path, "\n".join(lines) + "\n")


def _cmd_simulate(args) -> int:
    if args.kind.startswith("pendulum"):
        damped = args.kind == "pendulum-damped"
        config = PendulumConfig(
            gravity=args.gravity, length=args.length, mass=args.mass,
            drag=(0.1 if damped else 0.0) if args.drag is None else args.drag,
            theta0=(-math.pi / 2 if damped else 2.2) if args.theta0 is None else args.theta0,
            omega0=args.omega0,
            dt=0.05 if args.dt is None else args.dt,
            n_steps=args.steps,
        )
        traj = simulate_pendulum(config)
        rows = [(_fmt(a), _fmt(b)) for a, b in zip(traj.q1, traj.q2)]
        _write_csv(args.out, ["q1", "q2"], rows)
    else:
        config = ThreeWellConfig(
            barrier=args.barrier, temperature=args.temperature,
            dt=0.002 if args.dt is None else args.dt,
            n_steps=args.steps, stride=args.stride, seed=args.seed,
        )
        traj = simulate_three_well(config)
        rows = [
            (_fmt(x), _fmt(math.cos(x)), _fmt(math.sin(x)), str(int(w)))
            for x, w in zip(traj.angle, traj.labels)
        ]
        _write_csv(args.out, ["angle", "cos_angle", "sin_angle", "well"], rows)
    return 0


# ---------------------------------------------------------------------------
# embed / gapfill
# ---------------------------------------------------------------------------

def _load_config(args) -> PipelineConfig:
    config = PipelineConfig.from_json_file(args.config)
    if args.out is not None:
        config.output_dir = args.out
    if args.seed is not None:
        config.seed = args.seed
    return config


def _cmd_embed(args) -> int:
    config = _load_config(args)
    run = run_embed(config, threads=max(1, args.threads))
    os.makedirs(config.output_dir, exist_ok=True)
    write_coordinates(run, os.path.join(config.output_dir, "coordinates.csv"))
    write_eigenvalues(run, os.path.join(config.output_dir, "eigenvalues.json"))
    write_manifest(run, os.path.join(config.output_dir, "manifest.json"))
    print(f"embedded {run.library.n_pairs} states with "
          f"{run.embedding.n_components} components -> {config.output_dir}")
    return 0


def _cmd_gapfill(args) -> int:
    config = _load_config(args)
    run, result = run_gapfill(config, threads=max(1, args.threads))
    os.makedirs(config.output_dir, exist_ok=True)
    n_imputed = int(sum(int(m.sum()) for blk in result.imputed for m in blk))
    write_filled_series(result.series, result.imputed, config.schema,
                        os.path.join(config.output_dir, "filled.csv"),
                        block_ids=run.series.block_ids)
    write_updated_coordinates(result.series, result,
                              os.path.join(config.output_dir, "coordinates_updated.csv"))
    write_manifest(run, os.path.join(config.output_dir, "manifest.json"), extra={
        "imputed_cells": n_imputed,
        "pass1_states": result.n_pass1,
        "pass2_states": result.n_pass2,
        "updated_gram_size": int(result.updated_gram.shape[0]),
        "transition_rmse": result.transition.rmse,
        "observation_rmse": [float(r) for r in result.observation_maps.residuals],
    })
    print(f"filled {n_imputed} cells ({result.n_pass1} edge states, "
          f"{result.n_pass2} gap states) -> {config.output_dir}")
    return 0


# ---------------------------------------------------------------------------
# distance
# ---------------------------------------------------------------------------

def _cmd_distance(args) -> int:
    with open(args.eigenvalues, encoding="utf-8") as fh:
        eig_doc = json.load(fh)
    eigenvalues = np.asarray(eig_doc["eigenvalues"], dtype=float)

    rows = []
    with open(args.coordinates, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        n_cols = sum(1 for h in header if h.startswith("psi_"))
        for line in fh:
            rows.append([float(c) for c in line.strip().split(",")[3:]])
    coords = np.asarray(rows)

    m = eig_doc["n_components"] if args.m_used is None else args.m_used
    if not 0 <= m <= n_cols:
        raise ValidationError(f"m_used={m} outside the available {n_cols} components")
    lam = eigenvalues[1 : m + 1]

    out_rows = []
    for token in args.pairs:
        try:
            a, b = (int(x) for x in token.split(":"))
        except ValueError:
            raise ValidationError(f"bad pair {token!r}; expected i:l") from None
        if not (0 <= a < len(coords) and 0 <= b < len(coords)):
            raise ValidationError(f"pair {token!r} outside 0..{len(coords) - 1}")
        diff = coords[a, :m] - coords[b, :m]
        dist = math.sqrt(float(np.sum((lam * diff) ** 2)))
        out_rows.append((str(a), str(b), _fmt(dist)))
    _write_csv(args.out, ["i", "l", "distance"], out_rows)
    return 0


def main(argv=None) -> int:
    try:
        args = _build_parser().parse_args(argv)
        if args.command == "simulate":
            return _cmd_simulate(args)
        if args.command == "embed":
            return _cmd_embed(args)
        if args.command == "gapfill":
            return _cmd_gapfill(args)
        return _cmd_distance(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (NumericalError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except CausalStatesError as exc:  # pragma: no cover - safety net
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
