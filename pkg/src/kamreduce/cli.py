"""Command-line driver: reduce, verify, measure, spectrum, norms.

All artifacts are JSON (reports) or CSV (bulk arrays); identical configs and
seeds reproduce them byte for byte.  Exit codes: 0 success, 1 error, 2 the
configured frequency was excluded by a small divisor.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .blockmat import (
    NormalFormMatrix,
    msb_norm,
    read_block_csv,
    write_block_csv,
)
from .config import load_config
from .dynamics import (
    ReducedPropagator,
    floquet_direct_crosscheck,
    floquet_spectrum,
    integrate_direct,
    sobolev_norm,
)
from .errors import KamreduceError
from .kam import (
    Transformation,
    run_kam,
    schedule_row,
    transformation_distance,
    wab_check,
)
from .melnikov import check_A1, check_divisors, estimate_excluded_measure
from .qpmat import QPMatrix

__all__ = ["main"]


def _write_text(path, text):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w") as fh:
        fh.write(text)


def _write_json(path, obj):
    _write_text(path, json.dumps(obj, sort_keys=True, indent=2) + "\n")


def _k_tag(k):
    return "_".join(str(c) for c in k)


def _float_list(xs):
    return [float(x) for x in xs]


# -- reduce -------------------------------------------------------------------


def cmd_reduce(config, outdir=None):
    config.validate(require_omega=True)
    outdir = outdir or config.output_dir
    basis = config.build_basis()
    w = config.frequency()
    params = config.kam_params()
    q0, _ = config.initial_perturbation(basis)
    n0 = NormalFormMatrix.n0(basis)

    result = run_kam(n0, q0, w, params, check_conjugation=True)
    state = result.state

    # schedule table over the executed steps (at least one row for context)
    rows = [schedule_row(params, m) for m in range(1, max(state.m, 1) + 1)]
    sched_csv = ["m,sigma,K,kappa,eps,kappa_floored"]
    sched_csv += [
        f"{r.m},{r.sigma!r},{r.K!r},{r.kappa!r},{r.eps!r},{int(r.kappa_floored)}" for r in rows
    ]
    _write_text(os.path.join(outdir, "schedule.csv"), "\n".join(sched_csv) + "\n")

    qh_csv = ["m,qnorm"] + [f"{m},{v!r}" for m, v in enumerate(state.qnorm_history)]
    _write_text(os.path.join(outdir, "qnorm_history.csv"), "\n".join(qh_csv) + "\n")

    write_block_csv(state.N, os.path.join(outdir, "N_final.csv"))

    gen_entries = []
    if state.S_list:
        os.makedirs(os.path.join(outdir, "generators"), exist_ok=True)
    for mi, s in enumerate(state.S_list, start=1):
        for k in sorted(s.fourier):
            rel = os.path.join("generators", f"gen{mi:02d}_k{_k_tag(k)}.csv")
            write_block_csv(s.fourier[k], os.path.join(outdir, rel))
            gen_entries.append({"m": mi, "k": list(k), "path": rel})

    q_entries = []
    if q0.fourier:
        os.makedirs(os.path.join(outdir, "q0"), exist_ok=True)
    for k in sorted(q0.fourier):
        rel = os.path.join("q0", f"q0_k{_k_tag(k)}.csv")
        write_block_csv(q0.fourier[k], os.path.join(outdir, rel))
        q_entries.append({"k": list(k), "path": rel})

    c0_lower, c0_gap = check_A1(state.N)
    report = {
        "ops": {
            "run_kam": {
                "status": result.status,
                "steps": state.m,
                "qnorm_history": _float_list(state.qnorm_history),
                "excluded_at": result.excluded_at,
                "divisor_violation": result.divisor_violation,
                "target_qnorm": params.target_qnorm,
            },
            "make_schedule": [
                {
                    "m": r.m,
                    "sigma": r.sigma,
                    "K": r.K,
                    "kappa": r.kappa,
                    "eps": r.eps,
                    "kappa_floored": r.kappa_floored,
                }
                for r in rows
            ],
            "solve_homological": {
                "residuals": _float_list(state.residual_history),
                "divisor_min": _float_list(state.divisor_min_history),
            },
            "kam_step": {
                "conjugation_residuals": _float_list(state.conj_residual_history),
                "fourier_defects": _float_list(state.defect_history),
            },
            "check_A1": {"c0_lower": c0_lower, "c0_gap": c0_gap},
            "msb_norm": {
                "n_final_minus_n0": msb_norm(
                    state.N - NormalFormMatrix.n0(basis), params.norm_params
                ),
                "hermiticity_defect": state.N.hermiticity_defect(),
                "block_diagonal": state.N.is_block_diagonal(),
            },
        },
        "artifacts": {
            "n_final": "N_final.csv",
            "schedule": "schedule.csv",
            "qnorm_history": "qnorm_history.csv",
            "generators": gen_entries,
            "q0_coefficients": q_entries,
        },
        "parameters": {
            "d": config.d,
            "n": config.n,
            "e_max": basis.energy_cutoff,
            "q_pts": basis.q_pts,
            "s": config.s,
            "beta": config.beta,
            "sigma0": config.sigma0,
            "epsilon": config.epsilon,
            "omega": list(config.omega),
            "delta0": params.delta0,
            "delta": params.delta,
            "kappa_delta": params.kappa_delta,
            "nu": params.nu,
            "alpha_exp": params.alpha_exp,
        },
    }

    if result.status != "excluded":
        seed = config.seeds.get("phi_unitarity", 2024)
        dist = {
            "s0": transformation_distance(
                result.transformation, 0.0, params.beta, params.phi_samples, n_dim=config.n
            ),
            "s1": transformation_distance(
                result.transformation, 1.0, params.beta, params.phi_samples, n_dim=config.n
            ),
        }
        report["ops"]["transformation_distance"] = dist
        report["ops"]["unitarity"] = {
            "defect": result.transformation.unitarity_defect(config.n, seed=seed, samples=50),
            "seed": seed,
            "samples": 50,
        }
        report["ops"]["wab_check"] = wab_check(state.N, q0, config.epsilon, params)

    _write_json(os.path.join(outdir, "report.json"), report)

    if result.status == "excluded":
        v = result.divisor_violation
        failed_row = schedule_row(params, result.excluded_at)
        rep = check_divisors(
            result.state.N, w, failed_row.kappa, int(failed_row.K),
            k_scan_cap=params.k_scan_cap,
        )
        header = ",".join(f"k{i + 1}" for i in range(config.n)) + ",wa,wb,divisor,bound"
        _write_text(
            os.path.join(outdir, "divisor_violations.csv"),
            "\n".join([header] + rep.violations_csv()) + "\n",
        )
        print(
            f"excluded at step {result.excluded_at}: k={v['k']} clusters "
            f"({v['w_row']},{v['w_col']}) divisor {v['divisor']:.3e} < bound {v['bound']:.3e}"
        )
        return 2
    print(
        f"{result.status}: {state.m} steps, final qnorm "
        f"{state.qnorm_history[-1]:.3e} (target {params.target_qnorm:.3e})"
    )
    return 0


# -- verify -------------------------------------------------------------------


def _load_artifacts(config, outdir):
    basis = config.build_basis()
    with open(os.path.join(outdir, "report.json")) as fh:
        report = json.load(fh)
    n_final_bm = read_block_csv(
        basis, os.path.join(outdir, report["artifacts"]["n_final"]), hermitian=True
    )
    n_final = NormalFormMatrix(basis, n_final_bm.blocks)
    by_step = {}
    for entry in report["artifacts"]["generators"]:
        bm = read_block_csv(basis, os.path.join(outdir, entry["path"]))
        by_step.setdefault(entry["m"], {})[tuple(entry["k"])] = bm
    gens = []
    for mi in sorted(by_step):
        s = QPMatrix(basis, by_step[mi], sigma=config.sigma0)
        defect = s.hermitian_symmetry_defect()
        if defect > 1e-9:
            raise KamreduceError(
                f"generator {mi} fails the hermitian symmetry check "
                f"(defect {defect:.3e}): artifacts corrupted?"
            )
        gens.append(s)
    return basis, n_final, Transformation(basis=basis, generators=tuple(gens)), report


def cmd_verify(config, outdir=None):
    config.validate(require_omega=True)
    outdir = outdir or config.output_dir
    basis, n_final, transf, _report = _load_artifacts(config, outdir)
    w = config.frequency()
    params = config.kam_params()
    q0, _ = config.initial_perturbation(basis)
    xi0 = config.initial_state(basis)
    vconf = config.verify
    t_final = vconf.get("t_final", 100.0)
    dt = vconf.get("dt")
    k_cut = vconf.get("k_cut", 12)
    band_factor = vconf.get("band_factor", 20.0)

    # the eps scaling already lives inside q0, so the coupling factor is 1
    traj = integrate_direct(q0, w, 1.0, xi0, t_final, dt=dt)
    prop = ReducedPropagator(transf, n_final, w)
    reduced = np.stack([prop(xi0, t) for t in traj.times])
    l2_err = float(np.max(np.linalg.norm(traj.states - reduced, axis=1)))

    norms1 = np.array([sobolev_norm(x, basis, 1.0) for x in traj.states])
    norms_s = np.array([sobolev_norm(x, basis, config.s) for x in traj.states])
    bands = {}
    for label, arr in (("1", norms1), ("s", norms_s)):
        rel = arr / arr[0]
        bands[label] = float(max(np.max(rel) - 1.0, 1.0 - np.min(rel)))

    fl = floquet_direct_crosscheck(q0, w, 1.0, n_final, k_cut)

    checks = {
        "cross_validation": {
            "value": l2_err,
            "threshold": 1e-5 * float(np.linalg.norm(xi0)),
        },
        "norm_band_1": {"value": bands["1"], "threshold": band_factor * config.epsilon},
        "norm_band_s": {"value": bands["s"], "threshold": band_factor * config.epsilon},
        "floquet_hausdorff": {
            "value": fl["hausdorff"],
            "threshold": 10 * config.epsilon**2 + 1e-6,
        },
        "floquet_mass": {"value": 1.0 - fl["min_dominant_mass"], "threshold": 0.01},
        "unitarity": {
            "value": transf.unitarity_defect(
                config.n, seed=config.seeds.get("phi_unitarity", 2024), samples=50
            ),
            "threshold": 1e-9,
        },
        "l2_drift_direct": {"value": traj.l2_drift, "threshold": 1e-8},
    }
    all_pass = True
    for name, c in checks.items():
        c["pass"] = bool(c["value"] <= c["threshold"])
        all_pass &= c["pass"]
        print(f"{'PASS' if c['pass'] else 'FAIL'} {name}: {c['value']:.3e} <= {c['threshold']:.3e}")

    lines = ["t,norm_1,norm_s,l2_error_vs_reduced"]
    errs = np.linalg.norm(traj.states - reduced, axis=1)
    for i, t in enumerate(traj.times):
        lines.append(f"{t!r},{norms1[i]!r},{norms_s[i]!r},{errs[i]!r}")
    _write_text(os.path.join(outdir, "norms.csv"), "\n".join(lines) + "\n")

    _write_json(
        os.path.join(outdir, "verify_report.json"),
        {
            "ops": {
                "integrate_direct": {"t_final": t_final, "l2_drift": traj.l2_drift},
                "propagate_reduced": {"max_l2_error": l2_err},
                "sobolev_norm": {"band_halfwidth": bands},
                "floquet_direct_crosscheck": fl,
            },
            "checks": checks,
            "all_pass": all_pass,
        },
    )
    return 0 if all_pass else 1


# -- measure ------------------------------------------------------------------


def cmd_measure(config, outdir=None):
    config.validate(require_omega=False)
    outdir = outdir or config.output_dir
    mconf = config.measure
    kappas = mconf.get("kappas", [1e-4, 1e-3, 1e-2])
    ks = mconf.get("Ks", [5])
    samples = int(mconf.get("samples", 100000))
    seed = int(mconf.get("seed", config.seeds.get("measure", 7)))
    basis = config.build_basis()
    n0 = NormalFormMatrix.n0(basis)

    rows = []
    results = []
    for kk in ks:
        for kap in kappas:
            est = estimate_excluded_measure(
                n0, kap, kk, samples, seed, n_dim=config.n
            )
            rows.append(
                f"{kap!r},{kk},{est.excluded_fraction!r},{est.confidence_halfwidth!r}"
            )
            results.append(
                {
                    "kappa": kap,
                    "K": kk,
                    "excluded_fraction": est.excluded_fraction,
                    "confidence_halfwidth": est.confidence_halfwidth,
                }
            )
    slopes = {}
    for kk in ks:
        pts = [
            (r["kappa"], r["excluded_fraction"])
            for r in results
            if r["K"] == kk and r["excluded_fraction"] > 0
        ]
        if len(pts) >= 2:
            xs = np.log([p[0] for p in pts])
            ys = np.log([p[1] for p in pts])
            slopes[str(kk)] = float(np.polyfit(xs, ys, 1)[0])
    _write_text(
        os.path.join(outdir, "measure.csv"),
        "\n".join(["kappa,K,excluded_fraction,confidence_halfwidth"] + rows) + "\n",
    )
    _write_json(
        os.path.join(outdir, "measure.json"),
        {
            "ops": {
                "estimate_excluded_measure": {
                    "samples": samples,
                    "seed": seed,
                    "grid": results,
                    "fitted_slope_vs_kappa": slopes,
                }
            }
        },
    )
    print(f"measure grid written ({len(results)} cells)")
    return 0


# -- spectrum / norms ---------------------------------------------------------


def cmd_spectrum(config, outdir=None):
    config.validate(require_omega=True)
    outdir = outdir or config.output_dir
    basis, n_final, _transf, _report = _load_artifacts(config, outdir)
    w = config.frequency()
    k_range = config.verify.get("k_range", 8)
    spec = floquet_spectrum(n_final, w, k_range)
    lines = ["mu," + ",".join(f"k{i+1}" for i in range(config.n)) + ",value"]
    import itertools

    om = w.array()
    for ce, mu in spec.mu:
        for k in itertools.product(range(-k_range, k_range + 1), repeat=config.n):
            ks = ",".join(str(c) for c in k)
            lines.append(f"{mu!r},{ks},{mu + float(np.dot(k, om))!r}")
    _write_text(os.path.join(outdir, "spectrum.csv"), "\n".join(lines) + "\n")
    print(f"spectrum written ({len(lines) - 1} points)")
    return 0


def cmd_norms(config, outdir=None):
    config.validate(require_omega=True)
    outdir = outdir or config.output_dir
    basis, n_final, transf, _report = _load_artifacts(config, outdir)
    w = config.frequency()
    q0, _ = config.initial_perturbation(basis)
    xi0 = config.initial_state(basis)
    t_final = config.verify.get("t_final", 100.0)
    traj = integrate_direct(q0, w, 1.0, xi0, t_final, dt=config.verify.get("dt"))
    prop = ReducedPropagator(transf, n_final, w)
    reduced = np.stack([prop(xi0, t) for t in traj.times])
    errs = np.linalg.norm(traj.states - reduced, axis=1)
    lines = ["t,norm_1,norm_s,l2_error_vs_reduced"]
    for i, t in enumerate(traj.times):
        n1 = sobolev_norm(traj.states[i], basis, 1.0)
        ns = sobolev_norm(traj.states[i], basis, config.s)
        lines.append(f"{t!r},{n1!r},{ns!r},{errs[i]!r}")
    _write_text(os.path.join(outdir, "norms.csv"), "\n".join(lines) + "\n")
    print(f"norms written ({len(traj.times)} samples)")
    return 0


# -- entry point ----------------------------------------------------------------


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="kamreduce",
        description="KAM reduction engine for the quasiperiodically forced "
        "quantum harmonic oscillator",
    )
    parser.add_argument("command", choices=["reduce", "verify", "measure", "spectrum", "norms"])
    parser.add_argument("--config", required=True, help="path to the JSON run configuration")
    parser.add_argument("--out", default=None, help="output directory (default: from config)")
    args = parser.parse_args(argv)

    try:
        config = load_config(args.config)
        handler = {
            "reduce": cmd_reduce,
            "verify": cmd_verify,
            "measure": cmd_measure,
            "spectrum": cmd_spectrum,
            "norms": cmd_norms,
        }[args.command]
        return handler(config, outdir=args.out)
    except KamreduceError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except (OSError, json.JSONDecodeError, KeyError, ValueError) as err:
        print(f"error: {err!r}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
