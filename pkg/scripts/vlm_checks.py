"""Analytic reference cases for the vortex-lattice solver and the nominal wing sweep."""
import argparse
import math

from ddscale import geom, vlm


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--nc", type=int, default=30)
    ap.add_argument("--ns", type=int, default=32)
    args = ap.parse_args()
    cfg = vlm.LatticeConfig(args.nc, args.ns)

    rect = vlm.build_lattice(geom.planform_wing(geom.rectangle_planform(12.0, 1.0)), cfg)
    sol = vlm.run_vlm(rect, vlm.FlowCondition(0.0, 5.0))
    e = sol.cl**2 / (math.pi * 12.0 * sol.cdi)
    print(f"AR 12 rectangle, 5 deg: CL {sol.cl:.4f} (lifting line 0.470), e {e:.3f}")

    delta = vlm.build_lattice(geom.planform_wing(geom.delta_planform(1.0, 4.0)), cfg)
    cla = vlm.run_vlm(delta, vlm.FlowCondition(0.0, 3.0)).cl / math.radians(3.0)
    print(f"AR 0.5 delta: CL_alpha {cla:.3f} /rad (slender wing 0.785)")

    nominal = vlm.build_lattice(geom.build_wing(geom.DesignVector.nominal()), cfg)
    flows = [vlm.FlowCondition(0.3, a) for a in range(11, 20)]
    for s in vlm.run_vlm_sweep(nominal, flows):
        print(f"nominal, M 0.3, {s.flow.aoa_deg:4.1f} deg: CL {s.cl:.4f}  CDi {s.cdi:.4f}  CM {s.cm:+.4f}")


if __name__ == "__main__":
    main()
