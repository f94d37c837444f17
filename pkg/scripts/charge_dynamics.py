"""Charge-state dynamics: probe decay, discharge sweep, recovery, and a Monte Carlo cross-check.

    python scripts/charge_dynamics.py --out out/dynamics --trajectories 2000
"""

from dataclasses import replace

import numpy as np
from _common import dump, parser, prepare, pyplot

from boundex import experiments as ex
from boundex.acceptance import a9_sequence
from boundex.dynamics import D, evolve
from boundex.figures import fit_figure
from boundex.montecarlo import run_ensemble
from boundex.preset import PAPER, paper_model


def main():
    p = parser(__doc__.splitlines()[0], "out/dynamics")
    p.add_argument("--trajectories", type=int, default=2000)
    p.add_argument("--workers", type=int, default=4)
    args = p.parse_args()
    out = prepare(args)
    m = paper_model()

    decay = ex.probe_decay(m)
    f4a = fit_figure("4a", decay)
    sweep = ex.tau_e_trace(m)
    f4c = fit_figure("4c", sweep)
    f4c_free = fit_figure("4c", sweep, free_beta=True)
    rec = {pw: ex.recovery(pw, m) for pw in (float(PAPER.recovery_low_power), 40.0,
                                            float(PAPER.recovery_high_power))}
    np.savetxt(out / "probe_decay.csv", np.column_stack([decay.times, decay.values]), delimiter=",",
               header="time_s,rf_intensity", comments="")
    np.savetxt(out / "tau_e_sweep.csv", np.column_stack([sweep.times, sweep.values]), delimiter=",",
               header="delay_s,integrated_rf", comments="")

    quiet = replace(m, telegraph=None)
    seq = a9_sequence()
    cps = np.linspace(0.02e-6, seq.duration - 0.01e-6, 40)
    ens = run_ensemble(quiet, seq, cps, args.trajectories, args.seed, initial_state=D, workers=args.workers)
    ode = evolve(seq, quiet, 1e-9, initial=(0.0, 0.0, 1.0))
    ref = np.column_stack([np.interp(cps, ode.times, ode.populations[:, k]) for k in range(3)])
    z = np.abs(ens.populations - ref) / np.maximum(ens.standard_errors, 1.0 / args.trajectories)

    dump(out / "summary.json", {
        "probe_decay_rate_per_us": f4a.headline["rate_per_us"],
        "discharge_scale_us_fixed_beta": f4c.headline["scale_us"],
        "discharge_free_fit": {"scale_us": f4c_free.headline["scale_us"], "beta": f4c_free.headline["beta"]},
        "recovery_tau_ns": {f"{pw:g}nW": fit.headline["tau_ns"] for pw, (_, fit) in rec.items()},
        "monte_carlo": {"trajectories": args.trajectories, "max_z": float(z.max())},
    })

    plt = pyplot(args)
    if plt is None:
        return
    fig, ax = plt.subplots(1, 4, figsize=(18, 4))
    ax[0].plot(decay.times * 1e6, decay.values)
    ax[0].set_xlabel("time in probe (us)")
    ax[1].semilogx(sweep.times * 1e6, sweep.values, "o")
    ax[1].set_xlabel("dark delay (us)")
    for pw, (tr, _) in rec.items():
        ax[2].plot((tr.times - tr.times[0]) * 1e9, tr.values, label=f"{pw:g} nW")
    ax[2].set_xlabel("time (ns)")
    ax[2].legend()
    for k, name in enumerate("GXD"):
        ax[3].plot(cps * 1e6, ens.populations[:, k], "o", ms=3, label=f"MC {name}")
        ax[3].plot(ode.times * 1e6, ode.populations[:, k], "-", lw=0.8)
    ax[3].set_xlabel("time (us)")
    ax[3].legend()
    fig.tight_layout()
    fig.savefig(out / "charge_dynamics.png", dpi=120)


if __name__ == "__main__":
    main()
