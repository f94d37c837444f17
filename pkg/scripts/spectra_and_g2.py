"""Emission spectrum, resonant scan and CW photon correlation: simulate and fit.

    python scripts/spectra_and_g2.py --out out/spectra_g2
"""

from _common import dump, parser, prepare, pyplot

from boundex import experiments as ex
from boundex.figures import fit_figure
from boundex.fitting import MODELS
from boundex.preset import PAPER


def main():
    args = parser(__doc__.splitlines()[0], "out/spectra_g2").parse_args()
    out = prepare(args)

    spec = ex.emission_spectrum(args.seed)
    spec.to_csv(out / "emission_spectrum.csv")
    f2b = fit_figure("2b", spec)
    scan = ex.resonant_scan(args.seed)
    scan.to_csv(out / "resonant_scan.csv")
    f2c = fit_figure("2c", scan)
    hist, truth = ex.g2_histogram(args.seed)
    hist.to_csv(out / "g2_histogram.csv")
    f2d = fit_figure("2d", hist, signal_fraction=float(PAPER.signal_fraction))
    for name, fit in (("emission_spectrum", f2b), ("resonant_scan", f2c), ("g2", f2d)):
        (out / f"{name}_fit.txt").write_text(fit.report())

    dump(out / "summary.json", {
        "debye_waller": f2b.headline["f_dw"],
        "linewidth_mev": f2c.headline["linewidth_ev"] * 1e3,
        "voigt_fwhm_mev": f2c.headline["voigt_fwhm_ev"] * 1e3,
        "g2": {k: float(v) for k, v in f2d.headline.items()},
        "g2_truth": {k: truth[k] for k in ("emission_rate", "on_fraction", "counts", "dark_counts")},
    })

    plt = pyplot(args)
    if plt is None:
        return
    fig, ax = plt.subplots(1, 3, figsize=(14, 4))
    e0 = float(PAPER.zpl_energy)
    for a, tr, fit in ((ax[0], spec, f2b), (ax[1], scan, f2c)):
        x = (tr.energies - e0) * 1e3
        a.plot(x, tr.intensities, ".", ms=2)
        if fit.model_id == "voigt":
            a.plot(x, MODELS["voigt"].func(tr.energies, fit.params))
        else:
            a.plot(x, MODELS[fit.model_id].func(tr.energies, fit.params))
        a.set_xlabel("detuning (meV)")
    ax[0].set_yscale("log")
    t_ns = hist.delays * 1e-3
    ax[2].plot(t_ns, hist.g2, ".", ms=2)
    ax[2].plot(t_ns, MODELS["g2_combined"].func(t_ns, f2d.params))
    ax[2].set_xlabel("delay (ns)")
    ax[2].set_ylabel("g2")
    fig.tight_layout()
    fig.savefig(out / "spectra_and_g2.png", dpi=120)


if __name__ == "__main__":
    main()
