"""Smoke test for the Python bindings.

Build the extension first:

    cargo build -p irs-wet-py --features extension-module --release

then run `python3 python/smoke_test.py` from the repository root. The script
loads target/release/libirs_wet_py.so (or the debug build) under its module
name.
"""

import importlib.machinery
import importlib.util
import math
import pathlib
import sys

ROOT = pathlib.Path(__file__).resolve().parent.parent


def load():
    for profile in ("release", "debug"):
        for name in ("libirs_wet_py.so", "libirs_wet_py.dylib", "irs_wet_py.dll"):
            path = ROOT / "target" / profile / name
            if path.exists():
                loader = importlib.machinery.ExtensionFileLoader("irs_wet_py", str(path))
                spec = importlib.util.spec_from_loader("irs_wet_py", loader)
                mod = importlib.util.module_from_spec(spec)
                loader.exec_module(mod)
                return mod
    sys.exit("extension not built; see the module docstring")


def main():
    m = load()
    eh = m.EhParams()
    assert eh.dc_power(0.0) == 0.0
    phi = 0.5 * eh.m
    assert abs(eh.dc_power(eh.required_rf_power(phi)) - phi) < 1e-9 * eh.m

    cfg = m.SystemConfig.reference(8, 3)
    ch = m.Channel.sample(cfg, 7)
    assert len(ch.h_d) == 3 and len(ch.q[0]) == 8
    th = ch.matched_phase(0)
    assert all(abs(abs(t) - 1.0) < 1e-12 for t in th)
    assert math.isclose(ch.channel_gain(0, th), ch.matched_gain(0), rel_tol=1e-10)

    sdr = m.solve_sdr(ch, eh, cfg)
    e_gr, theta = m.gaussian_randomization(sdr, ch, eh, cfg, 200, 1)
    tdma = m.solve_tdma(ch, eh, cfg)
    dyn = m.solve_dynamic(ch, eh, cfg, 3, sdr)
    assert e_gr <= sdr.e_upper * (1 + 1e-6)
    assert dyn.e >= tdma.e * (1 - 1e-6)
    assert sum(dyn.durations) <= cfg.horizon * (1 + 1e-9)
    print(f"sdr bound {sdr.e_upper:.4e} J (rank {sdr.rank}), gr {e_gr:.4e}, tdma {tdma.e:.4e}, dynamic {dyn.e:.4e}")

    recs = m.run_scenario(
        'n_elements = 4\nsweep = "none"\nschemes = ["tdma", "no-irs"]\n',
        ["n_ers=2", "n_realizations=2"],
    )
    assert len(recs) == 4 and all(r["status"] == "ok" for r in recs)

    try:
        m.SystemConfig.from_toml("bogus = 1")
    except ValueError:
        pass
    else:
        raise AssertionError("unknown key accepted")
    print("python smoke test passed")


if __name__ == "__main__":
    main()
