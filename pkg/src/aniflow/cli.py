"""``aniflow`` command line: ``run``, ``convergence`` and ``validate``.

Exit codes: 0 success, 1 configuration error, 2 I/O error, 3 solver error,
4 failed validation.  On failure a one-line JSON object
``{"error": ..., "message": ..., "step": ...}`` is written to stderr.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .anisotropy import make_anisotropy, make_mobility, validate
from .config import FlowConfig
from .diagnostics import TimeSeriesRecord, convergence_csv, convergence_study, convergence_table, series_row
from .errors import AniflowError, ConfigError, InvalidInput
from .flow_matrix import check_parabolicity
from .mesh import NodalField
from .presets import MANUFACTURED, write_frame
from .solver import run_flow

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_SOLVER, EXIT_INVALID = 0, 1, 2, 3, 4

log = logging.getLogger("aniflow")


def _fail(code: int, exc: BaseException) -> int:
    payload = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    step = getattr(exc, "step", None)
    if step is not None:
        payload["step"] = step
    print(json.dumps(payload), file=sys.stderr)
    return code


def write_vtk(path, x: NodalField, title: str = "aniflow curve") -> None:
    """Legacy ASCII VTK file holding the closed polygon as one polyline."""
    pts = np.zeros((x.J, 3))
    pts[:, : min(3, x.d)] = x.values[:, :3]
    with open(path, "w") as fh:
        fh.write(f"# vtk DataFile Version 3.0\n{title}\nASCII\nDATASET POLYDATA\nPOINTS {x.J} double\n")
        for p in pts:
            fh.write(" ".join(format(v, ".17g") for v in p) + "\n")
        fh.write(f"LINES 1 {x.J + 2}\n{x.J + 1} " + " ".join(str(j) for j in range(x.J)) + " 0\n")


def cmd_run(config_path: str) -> int:
    try:
        config = FlowConfig.from_json(config_path)
        config.build()  # surface config errors before any output is created
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, exc)
    except OSError as exc:
        return _fail(EXIT_IO, exc)

    frames_dir = Path(config.frames_dir) if config.frames_dir and config.frames_every else None
    vtk = bool(config.outputs.get("vtk", False))
    series_fh = None
    try:
        if frames_dir is not None:
            frames_dir.mkdir(parents=True, exist_ok=True)
        if config.series_path:
            Path(config.series_path).parent.mkdir(parents=True, exist_ok=True)
            series_fh = open(config.series_path, "w", newline="")
            writer = csv.writer(series_fh, lineterminator="\n")
            writer.writerow(TimeSeriesRecord.columns())
    except OSError as exc:
        return _fail(EXIT_IO, exc)

    def on_record(rec):
        if series_fh is not None:
            writer.writerow(series_row(rec))

    def on_frame(step, t, x):
        write_frame(frames_dir / f"frame_{step:08d}.csv", x)
        if vtk:
            write_vtk(frames_dir / f"frame_{step:08d}.vtk", x, f"step {step} t {t:.17g}")

    try:
        result = run_flow(config, on_record=on_record, on_frame=on_frame if frames_dir else None,
                          keep_frames=False)
    except OSError as exc:
        return _fail(EXIT_IO, exc)
    except AniflowError as exc:
        return _fail(EXIT_SOLVER, exc)
    finally:
        if series_fh is not None:
            series_fh.close()
    last = result.series[-1]
    print(f"completed {last.step} steps to t={last.t:.6g}: E_phi={last.E_phi:.10g} ratio={last.ratio:.4g} "
          f"K_inf={last.K_inf:.6g}")
    return EXIT_OK


def _parse_J(text: str) -> list:
    try:
        Js = [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"--J must be a comma separated list of integers, got {text!r}") from exc
    if not Js:
        raise ConfigError("--J is empty")
    return Js


def cmd_convergence(preset: str, delta: float, J_list, dt_rule: str, T: float, out_path=None,
                    mass_treatment: str = "consistent", workers=None) -> int:
    rule = {"h": "dt_eq_h", "h2": "dt_eq_h2"}.get(dt_rule, dt_rule)
    try:
        if preset not in MANUFACTURED:
            raise ConfigError(f"unknown --preset {preset!r}; expected one of {sorted(MANUFACTURED)}")
        problem = MANUFACTURED[preset](delta) if preset == "ellipse3d" else MANUFACTURED[preset]()
        Js = _parse_J(J_list) if isinstance(J_list, str) else list(J_list)
        rows = convergence_study(problem, Js, rule, T, mass_treatment=mass_treatment, workers=workers)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, exc)
    except InvalidInput as exc:
        return _fail(EXIT_CONFIG, exc)
    except AniflowError as exc:
        return _fail(EXIT_SOLVER, exc)
    table = convergence_table(rows)
    if out_path:
        try:
            out = Path(out_path)
            out.parent.mkdir(parents=True, exist_ok=True)
            out.write_text(convergence_csv(rows))
            out.with_suffix(".txt").write_text(table)
        except OSError as exc:
            return _fail(EXIT_IO, exc)
    print(table, end="")
    if len(rows) > 1:
        print(f"final EOC: L2 {rows[-1].l2_eoc:.3f}, H1 {rows[-1].h1_eoc:.3f}")
    return EXIT_OK


def cmd_validate(spec_path: str, samples: int = 1000, seed: int = 0) -> int:
    try:
        text = Path(spec_path).read_text()
    except OSError as exc:
        return _fail(EXIT_IO, exc)
    try:
        try:
            spec = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{spec_path}: malformed JSON at line {exc.lineno} column {exc.colno}") from exc
        if not isinstance(spec, dict) or "kind" not in spec:
            raise ConfigError("missing required key 'kind'")
        extra = sorted(set(spec) - {"kind", "dim", "params", "mobility"})
        if extra:
            raise ConfigError(f"unknown key '{extra[0]}'")
        a = make_anisotropy(spec["kind"], spec.get("dim"), **spec.get("params", {}))
        mob = spec.get("mobility", {"kind": "constant_one"})
        m = make_mobility(mob["kind"] if isinstance(mob, dict) else mob, a)
    except (ConfigError, InvalidInput, TypeError) as exc:
        return _fail(EXIT_CONFIG, exc if isinstance(exc, AniflowError) else ConfigError(str(exc)))

    report = validate(a, samples=samples, seed=seed).as_dict()
    rng = np.random.default_rng(seed)
    P = rng.standard_normal((samples, a.dim))
    try:
        parabolic = all(check_parabolicity(a, m, p) for p in P)
    except AniflowError:
        parabolic = False
    report["parabolicity_ok"] = parabolic
    report["ok"] = bool(report["ok"] and parabolic)
    report["anisotropy"] = a.to_spec()
    report["mobility"] = m.kind
    print(json.dumps(report, indent=2))
    return EXIT_OK if report["ok"] else EXIT_INVALID


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="aniflow", description="Anisotropic curve shortening flow solver.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a configured flow")
    r.add_argument("config")

    c = sub.add_parser("convergence", help="convergence study against an exact solution")
    c.add_argument("--preset", default="ellipse3d", choices=sorted(MANUFACTURED))
    c.add_argument("--delta", type=float, default=0.5)
    c.add_argument("--J", default="64,128,256,512", help="comma separated element counts")
    c.add_argument("--dt-rule", default="h2", choices=["h", "h2"])
    c.add_argument("--T", type=float, default=0.45)
    c.add_argument("--mass", default="consistent", choices=["consistent", "lumped"])
    c.add_argument("--workers", type=int, default=None, help="parallel levels (default $ANIFLOW_THREADS or 1)")
    c.add_argument("--out", default=None, help="CSV path; the text table goes next to it with suffix .txt")

    v = sub.add_parser("validate", help="check the structural assumptions of an anisotropy")
    v.add_argument("spec")
    v.add_argument("--samples", type=int, default=1000)
    v.add_argument("--seed", type=int, default=0)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "run":
        return cmd_run(args.config)
    if args.command == "convergence":
        return cmd_convergence(args.preset, args.delta, args.J, args.dt_rule, args.T, args.out,
                               args.mass, args.workers)
    return cmd_validate(args.spec, args.samples, args.seed)


if __name__ == "__main__":
    sys.exit(main())
