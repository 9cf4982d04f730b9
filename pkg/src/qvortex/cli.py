"""Command-line pipeline: each stage reads files written by earlier stages.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import experiments as ex
from .config import RunConfig, load_config, write_snapshot
from .encoding import EncodingFrame, WaveState, decode, load_encoding_json, save_encoding_json
from .errors import ConfigError, DataError, DimensionError, NumericalError, QVortexError
from .fields import (
    deviation,
    fidelity,
    render_svg,
    streamlines,
    velocity_field,
    write_field_csv,
    write_streamlines_json,
)
from .hamiltonian import (
    FitOptions,
    TrainingSet,
    fit,
    load_hamiltonian_json,
    propagator,
    save_hamiltonian_json,
)
from .spacetime import n_qubits_for, run, save_plan_json
from .statevector import save_statevector_json
from .vortex import Trajectory, VortexSystem, read_trajectory_csv, write_trajectory_csv
from .vqa import ansatz_from_descriptor, save_train_log

log = logging.getLogger("qvortex")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERICAL = 0, 2, 3, 4

TRUTH = "truth.csv"
TRUTH_META = "truth_meta.json"
ENCODING = "encoding.json"
HAM_MODEL = "model_hamiltonian.json"
VQA_MODEL = "model_vqa.json"
BLOCKS = "blocks.json"
NOISY_BLOCKS = "blocks_noisy.json"


def _c2(z: complex) -> list[float]:
    return [float(np.real(z)), float(np.imag(z))]


def _dump(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=1) + "\n")


def _load(path: Path) -> dict:
    try:
        return json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise DataError(f"missing input {path}; run the earlier pipeline stage first") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: {exc}") from exc


# ---------------------------------------------------------------------------
# stages
# ---------------------------------------------------------------------------

def cmd_gen_truth(cfg: RunConfig, out: Path, args) -> None:
    traj = ex.ground_truth(cfg)
    ex.check_truth_matches(cfg, traj)
    write_trajectory_csv(traj, out / TRUTH)
    _dump(out / TRUTH_META, {
        "integrator": "rk4" if not cfg.truth_csv else "imported",
        "dt": traj.dt if len(traj) > 1 else cfg.dt,
        "n_frames": len(traj),
        "seed": cfg.seed,
        "preset": cfg.preset,
        "strengths": traj.strengths.tolist(),
    })


def _read_truth(out: Path) -> Trajectory:
    try:
        return read_trajectory_csv(out / TRUTH)
    except FileNotFoundError as exc:
        raise DataError(f"missing {out / TRUTH}; run gen-truth first") from exc


def cmd_encode(cfg: RunConfig, out: Path, args) -> None:
    enc = ex.encode_truth(cfg, _read_truth(out))
    save_encoding_json(out / ENCODING, enc.states, enc.frame, dt=enc.dt, seed=cfg.seed, extra={
        "refs": [_c2(r) for r in enc.refs], "mode": enc.mode,
        "max_norm_error": enc.max_norm_error,
    })


def _read_encoding(out: Path) -> ex.Encoded:
    path = out / ENCODING
    if not path.exists():
        raise DataError(f"missing {path}; run encode first")
    states, frame, meta = load_encoding_json(path)
    refs = np.array([complex(a, b) for a, b in meta["refs"]])
    return ex.Encoded(states, frame, refs, meta["dt"], meta["mode"], meta.get("max_norm_error", 0.0))


def _planted_self_test(cfg: RunConfig, out: Path) -> dict:
    """Recover a random Hermitian generator from exactly N_p^2 synthetic pairs."""
    rng = np.random.default_rng(cfg.seed)
    n = 4
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    h_true = 0.5 * (a + a.conj().T)
    x = rng.normal(size=(n * n, n)) + 1j * rng.normal(size=(n * n, n))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    from .hamiltonian import expm_hermitian

    y = x @ expm_hermitian(h_true, 0.1).T
    h = fit(TrainingSet(x, y, np.ones(n * n, dtype=int)), 0.1, FitOptions(seed=cfg.seed))
    err = float(np.linalg.norm(propagator(h, 1) - expm_hermitian(h_true, 0.1), 2))
    return {"loss": h.loss, "propagator_error": err, "passed": bool(h.loss < 1e-8)}


def cmd_train_ham(cfg: RunConfig, out: Path, args) -> None:
    if args.self_test:
        _dump(out / "self_test.json", _planted_self_test(cfg, out))
        return
    cfg.model = "hamiltonian"
    enc = _read_encoding(out)
    model = ex.fit_model(cfg, enc)
    save_hamiltonian_json(model.hamiltonian, out / HAM_MODEL)
    _dump(out / "loss_log.json", {"model": "hamiltonian", "loss": model.loss,
                                  "iterations": model.hamiltonian.iterations})


def cmd_train_vqa(cfg: RunConfig, out: Path, args) -> None:
    cfg.model = "vqa"
    enc = _read_encoding(out)
    model = ex.fit_model(cfg, enc)
    save_train_log(model.vqa, out / VQA_MODEL)


def _load_model(cfg: RunConfig, out: Path) -> ex.Model:
    if cfg.model == "hamiltonian":
        path = out / HAM_MODEL
        if not path.exists():
            raise DataError(f"missing {path}; run train-ham first")
        h = load_hamiltonian_json(path)
        if abs(h.dt_predict - cfg.dt_predict) > 1e-12:
            raise ConfigError("model dt_predict differs from config; retrain")
        return ex.Model("hamiltonian", propagator(h, 1), hamiltonian=h, loss=h.loss)
    doc = _load(out / VQA_MODEL)
    ansatz = ansatz_from_descriptor(doc["ansatz"])
    theta = np.array(doc["theta"])
    return ex.Model("vqa", ansatz.unitary(theta), ansatz=ansatz, loss=doc["loss"][-1])


def _frame_doc(frame: EncodingFrame) -> dict:
    return {"lambda": frame.lam, "c0": _c2(frame.c0), "c_integral": _c2(frame.c_integral),
            "t": frame.t, "strengths": frame.strengths.tolist()}


def _frame_from_doc(doc: dict) -> EncodingFrame:
    return EncodingFrame(doc["lambda"], complex(*doc["c0"]), doc["strengths"],
                         complex(*doc["c_integral"]), doc["t"])


def _blocks_doc(cfg, frame, c_const, blocks, weights, extra=None) -> dict:
    doc = {
        "times": ex.block_times(cfg, frame).tolist(),
        "dt_predict": cfg.dt_predict,
        "frame": _frame_doc(frame),
        "c_const": _c2(c_const),
        "weights": [float(w) for w in weights],
        "blocks": [[_c2(z) for z in b.amplitudes] for b in blocks],
    }
    doc.update(extra or {})
    return doc


def cmd_simulate(cfg: RunConfig, out: Path, args) -> None:
    enc = _read_encoding(out)
    n_qubits = cfg.n_t + n_qubits_for(len(enc.frame.strengths))
    if args.noisy and n_qubits > ex.NOISY_QUBIT_CAP:
        raise ConfigError(f"--noisy is capped at {ex.NOISY_QUBIT_CAP} qubits; this plan has {n_qubits}")
    model = _load_model(cfg, out)
    psi, frame = ex.start_frame(cfg, enc)
    c_const = ex.drift_constant(cfg, enc)
    plan = ex.make_plan(cfg, model, psi)
    st = run(plan)
    save_plan_json(plan, out / "plan.json")
    save_statevector_json(st.state, out / "spacetime_state.json")
    blocks, weights = ex.extract_all(st)
    _dump(out / BLOCKS, _blocks_doc(cfg, frame, c_const, blocks, weights,
                                    {"controlled_applications": st.controlled_applications}))
    if args.noisy:
        model_n = ex.noise_model(cfg, plan.n_qubits)
        shots = cfg.shots or None
        res = ex.noisy_blocks(plan, model_n, cfg.n_variants, cfg.seed, shots, cfg.readout_mitigation)
        _dump(out / NOISY_BLOCKS, _blocks_doc(cfg, frame, c_const, res.blocks, res.weights, {
            "eigenvalues": res.eigenvalues.tolist(), "n_variants": cfg.n_variants,
            "shots": cfg.shots, "n_cz": res.n_cz,
        }))


def _read_blocks(path: Path) -> tuple[list[WaveState], EncodingFrame, complex, float, np.ndarray]:
    doc = _load(path)
    blocks = [WaveState([complex(a, b) for a, b in blk]) for blk in doc["blocks"]]
    return blocks, _frame_from_doc(doc["frame"]), complex(*doc["c_const"]), doc["dt_predict"], \
        np.array(doc["times"])


def _export_field(cfg: RunConfig, system: VortexSystem, stem: Path) -> None:
    pos = system.positions
    m = cfg.field_margin
    xr = (float(pos.real.min() - m), float(pos.real.max() + m))
    yr = (float(pos.imag.min() - m), float(pos.imag.max() + m))
    delta = None if cfg.field_delta < 0 else cfg.field_delta
    grid = velocity_field(system, xr, yr, cfg.field_nx, cfg.field_ny, delta)
    lines = streamlines(grid)
    write_field_csv(grid, stem.with_suffix(".csv"))
    write_streamlines_json(lines, stem.parent / (stem.name + "_streamlines.json"))
    stem.with_suffix(".svg").write_text(render_svg(grid, lines, system))


def cmd_reconstruct(cfg: RunConfig, out: Path, args) -> None:
    blocks, frame, c_const, dtp, times = _read_blocks(out / BLOCKS)
    ideal = ex.reconstruct(blocks, frame, c_const, dtp)
    write_trajectory_csv(ideal.trajectory, out / "trajectory.csv")
    metrics: dict = {"times": times.tolist(), "phase_fallback_steps": ideal.fallback_steps}
    truth_path = out / TRUTH
    if truth_path.exists():
        truth = read_trajectory_csv(truth_path)
        idx = np.rint((times - truth.times[0]) / truth.dt).astype(int)
        ok = (idx >= 0) & (idx < len(truth)) & np.isclose(truth.times[np.clip(idx, 0, len(truth) - 1)], times)
        metrics["deviation_vs_truth"] = [
            deviation(truth.positions[i], p) if good else None
            for i, p, good in zip(idx, ideal.trajectory.positions, ok)
        ]
    noisy_path = out / NOISY_BLOCKS
    if noisy_path.exists():
        nblocks, *_ = _read_blocks(noisy_path)
        noisy = ex.reconstruct(nblocks, frame, c_const, dtp)
        write_trajectory_csv(noisy.trajectory, out / "trajectory_noisy.csv")
        metrics["fidelity"] = [fidelity(a, b) for a, b in zip(ideal.states, noisy.states)]
        metrics["deviation"] = [deviation(a, b) for a, b in
                                zip(ideal.trajectory.positions, noisy.trajectory.positions)]
    for t, i in zip(cfg.fig_times, ex.nearest_steps(times, cfg.fig_times)):
        system = ideal.trajectory.frame(i)
        _export_field(cfg, system, out / f"field_t{t:g}")
    _dump(out / "metrics.json", metrics)


def cmd_field(cfg: RunConfig, out: Path, args) -> None:
    path = Path(args.trajectory) if args.trajectory else out / "trajectory.csv"
    try:
        traj = read_trajectory_csv(path)
    except FileNotFoundError as exc:
        raise DataError(f"missing trajectory {path}") from exc
    times = list(args.time) if args.time else [float(traj.times[0])]
    for t in times:
        i = ex.nearest_steps(traj.times, [t])[0]
        _export_field(cfg, traj.frame(i), out / f"field_t{t:g}")


def cmd_sweep_sp(cfg: RunConfig, out: Path, args) -> None:
    truth = _read_truth(out)
    enc = _read_encoding(out)
    rows = []
    for sp in cfg.sp_values:
        max_err, rel_err = [], []
        for s in range(cfg.sp_seeds):
            res = decode(enc.states, enc.frame, sp, dt=enc.dt, seed=cfg.seed + s)
            diff = np.abs(res.trajectory.positions - truth.positions)
            max_err.append(float(diff.max()))
            rel_err.append(float(np.mean(np.linalg.norm(res.trajectory.positions - truth.positions, axis=1)
                                         / np.linalg.norm(truth.positions, axis=1))))
            if sp == 1.0:
                break
        rows.append({"sampling_proportion": sp, "max_error": max_err, "relative_error": rel_err,
                     "max_error_p90": float(np.percentile(max_err, 90))})
    _dump(out / "sp_sweep.json", rows)
    lines = ["sampling_proportion,seed_index,max_error,relative_error"]
    for r in rows:
        for k, (a, b) in enumerate(zip(r["max_error"], r["relative_error"])):
            lines.append(f"{r['sampling_proportion']:g},{k},{a:.17g},{b:.17g}")
    (out / "sp_sweep.csv").write_text("\n".join(lines) + "\n")


COMMANDS = {
    "gen-truth": cmd_gen_truth,
    "encode": cmd_encode,
    "train-ham": cmd_train_ham,
    "train-vqa": cmd_train_vqa,
    "simulate": cmd_simulate,
    "reconstruct": cmd_reconstruct,
    "field": cmd_field,
    "sweep-sp": cmd_sweep_sp,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML run configuration")
    common.add_argument("--preset", help="start from a named preset instead of the config's")
    common.add_argument("--seed", type=int, help="override the configured seed")
    common.add_argument("--out", help="output directory (default from config)")
    common.add_argument("--noisy", action="store_true", help="also run the noisy emulation")
    common.add_argument("-v", "--verbose", action="store_true")
    parser = argparse.ArgumentParser(prog="qvortex", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common])
        if name == "train-ham":
            p.add_argument("--self-test", action="store_true",
                           help="fit a planted generator instead of the trajectory")
        if name == "field":
            p.add_argument("--trajectory", help="trajectory CSV (default: <out>/trajectory.csv)")
            p.add_argument("--time", type=float, action="append", help="snapshot time (repeatable)")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        overrides = {}
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.out is not None:
            overrides["out"] = args.out
        cfg = load_config(args.config, args.preset, overrides)
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        write_snapshot(cfg, out, f"resolved_config.{args.command}.toml")
        COMMANDS[args.command](cfg, out, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, DimensionError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except QVortexError as exc:  # pragma: no cover - every subclass is handled above
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
