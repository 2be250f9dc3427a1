"""
Command-line front end.

Subcommands group the self-checking experiment suites; the exit code is
nonzero exactly when one of the invoked assertions fails.

    toricmaps legendre-check             transform round-trip and duality
    toricmaps geodesic [--out DIR]       interval convergence experiment
    toricmaps disc                       disc convergence + kernel cross-check
    toricmaps flow-duality               heat-flow / harmonic-map-flow duality
    toricmaps diagnostics                norming oracle, szego, localization,
                                         peak asymptotics, ratio bounds
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import acceptance
from .harness import (ExperimentConfig, build_approximants, error_report,
                      geodesic_family, kahler_field, rate_fit,
                      write_error_csv, write_error_dat)

_SUITES = {
    "legendre-check": (acceptance.check_legendre_involution,
                       acceptance.check_gradient_hessian_duality),
    "geodesic": (acceptance.check_geodesic_c0,
                 acceptance.check_geodesic_c1_c2),
    "disc": (acceptance.check_disc_c0_crosscheck,
             acceptance.check_hcma_residual),
    "flow-duality": (acceptance.check_flow_duality,),
    "diagnostics": (acceptance.check_norming_oracle,
                    acceptance.check_duality_identity,
                    acceptance.check_szego_normalization,
                    acceptance.check_ratio_bounds,
                    acceptance.check_peak_asymptotics,
                    acceptance.check_localization),
}


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", type=Path, default=None,
                   help="JSON experiment config (see ExperimentConfig fields)")
    p.add_argument("--out", type=Path, default=None,
                   help="directory for CSV/.dat outputs")
    p.add_argument("--levels", type=str, default=None,
                   help="comma-separated level list, e.g. 8,16,32,64")
    p.add_argument("--resolution", type=str, default=None,
                   help="comma-separated overrides, e.g. n_x=801,n_rho=801,n_y=17")
    p.add_argument("--window", type=float, default=None,
                   help="interior window threshold on the facet functions")
    p.add_argument("--snapshot-every", type=int, default=None,
                   help="flow snapshot cadence in steps (0 = never)")


def _load_config(args) -> ExperimentConfig:
    doc = {}
    if args.config is not None:
        doc = json.loads(Path(args.config).read_text())
    if args.levels:
        doc["levels"] = [int(v) for v in args.levels.split(",")]
    if args.resolution:
        for pair in args.resolution.split(","):
            key, val = pair.split("=")
            doc[key.strip()] = int(val)
    if args.window is not None:
        doc["window"] = args.window
    if args.snapshot_every is not None:
        doc["snapshot_every"] = args.snapshot_every
    if args.out is not None:
        doc["out_dir"] = str(args.out)
    return ExperimentConfig.from_json(json.dumps(doc))


def _run_suite(name: str, args) -> int:
    results = acceptance.run_checks(_SUITES[name], verbose=True)
    if name == "geodesic" and args.out is not None:
        _write_geodesic_outputs(_load_config(args))
    if name == "flow-duality" and args.out is not None:
        _write_flow_snapshots(_load_config(args))
    return 0 if all(r.passed for r in results) else 1


def _write_flow_snapshots(cfg: ExperimentConfig):
    if cfg.snapshot_every <= 0:
        return
    import numpy as np
    from .dirichlet import make_interval
    from .flows import heat_evolve, make_flow_state, save_snapshot
    from .potentials import make_polytope_grid
    P = cfg.build_polytope()
    xgrid = make_polytope_grid(P, cfg.n_x, 1e-3)
    domain = make_interval(cfg.n_y)
    t = domain.nodes
    x = xgrid.axes[0]
    f0 = (0.1 * t + 0.2 * t * (1 - t))[:, None] * (x * (1 - x))[None, :]
    state = make_flow_state(domain, xgrid, f0)
    h = t[1] - t[0]
    dtau = h**2 / 4.0
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    total = 10 * cfg.snapshot_every
    for step in range(0, total, cfg.snapshot_every):
        save_snapshot(state, out / f"flow_{state.tau:.6f}.txt")
        state = heat_evolve(state, dtau, cfg.snapshot_every)
    save_snapshot(state, out / f"flow_{state.tau:.6f}.txt")
    print(f"wrote {total // cfg.snapshot_every + 1} snapshots to {out}")


def _write_geodesic_outputs(cfg: ExperimentConfig):
    import numpy as np
    family = geodesic_family(n_t=cfg.n_y, n_x=cfg.n_x, k_max=max(cfg.levels))
    rho = np.linspace(-cfg.rho_span, cfg.rho_span, cfg.n_rho)
    phi_field = kahler_field(family, rho)
    approx = build_approximants(family, cfg.levels)
    report = error_report(family, phi_field, approx, window=cfg.window)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_error_csv(report, out / "geodesic_errors.csv")
    write_error_dat(report, out / "geodesic_errors.dat")
    fit = rate_fit(report.levels, report.column("C0"))
    print(f"wrote {out / 'geodesic_errors.csv'} "
          f"(C0 log-log slope {fit.slope:.3f})")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="toricmaps",
        description="harmonic maps into toric Kahler metrics: "
                    "experiments and self-checks")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _SUITES:
        p = sub.add_parser(name, help=f"run the {name} suite")
        _add_common(p)
    p_all = sub.add_parser("all", help="run every suite")
    _add_common(p_all)
    args = parser.parse_args(argv)
    if args.command == "all":
        results = acceptance.run_checks(verbose=True)
        return 0 if all(r.passed for r in results) else 1
    return _run_suite(args.command, args)


if __name__ == "__main__":
    sys.exit(main())
