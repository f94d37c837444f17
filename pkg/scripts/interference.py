"""LO/RF interference traces versus detuning and QWP offset, plus the power comparison.

    python scripts/interference.py --out out/interference
"""

import numpy as np
from _common import dump, parser, prepare, pyplot

from boundex import experiments as ex
from boundex.interferometry import write_map_csv
from boundex.preset import PAPER, paper_scatterer


def main():
    args = parser(__doc__.splitlines()[0], "out/interference").parse_args()
    out = prepare(args)
    ang = float(PAPER.qwp_angle_map)
    low, high = float(PAPER.low_power), float(PAPER.high_power)

    d, rad, imap = ex.interference_map(np.linspace(-1.0, 1.0, 41), low)
    write_map_csv(out / "map.csv", d, rad, imap)
    traces = {dt: ex.interference(dt, low) for dt in (-ang, 0.0, ang)}
    for dt, tr in traces.items():
        tr.to_csv(out / f"trace_{dt:+.2f}deg.csv")
    ang_p = float(PAPER.qwp_angle_power)
    power = {p: ex.interference(ang_p, p) for p in (low, high)}
    peak = {f"{p:g}nW": float(np.nanmax(np.abs(tr.visibility))) for p, tr in power.items()}
    dump(out / "summary.json", {"peak_abs_visibility": peak, "qwp_offset_deg": ang_p})

    plt = pyplot(args)
    if plt is None:
        return
    gamma = paper_scatterer().gamma
    fig, ax = plt.subplots(1, 3, figsize=(14, 4))
    ax[0].pcolormesh(d / gamma, np.degrees(rad), imap, shading="auto", cmap="RdBu_r")
    ax[0].set_xlabel("detuning (gamma)")
    ax[0].set_ylabel("QWP offset (deg)")
    for dt, tr in traces.items():
        ax[1].plot(tr.detunings / gamma, tr.i_diff, label=f"{dt:+.1f} deg")
    ax[1].legend()
    for p, tr in power.items():
        ax[2].plot(tr.detunings / gamma, tr.visibility, label=f"{p:g} nW")
    ax[2].legend()
    fig.tight_layout()
    fig.savefig(out / "interference.png", dpi=120)


if __name__ == "__main__":
    main()
