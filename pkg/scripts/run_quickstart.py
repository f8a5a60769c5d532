#!/usr/bin/env python3
"""End-to-end quickstart: simulate, TV fit, kernel fit, refinement ladder.

Runs the four CLI commands on the configs in configs/ and prints a short
summary of each artifact.  Everything lands under out/quickstart*.
"""

import json
import pathlib
import sys

ROOT = pathlib.Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "src"))

from seasonal_spline import cli  # noqa: E402


def main():
    configs = ROOT / "configs"
    out = ROOT / "out"

    steps = [
        ("simulate", configs / "quickstart_simulate.json", out / "quickstart"),
        ("fit", configs / "quickstart_fit.json", out / "quickstart_fit"),
        ("quadratic", configs / "quickstart_quadratic.json",
         out / "quickstart_quadratic"),
        ("converge", configs / "quickstart_converge.json",
         out / "quickstart_converge"),
    ]
    for verb, config, out_dir in steps:
        code = cli.main([verb, "--config", str(config), "--out", str(out_dir)])
        print(f"{verb}: exit {code} -> {out_dir}")
        if code != 0:
            return code

    solution = json.loads((out / "quickstart_fit" / "solution.json").read_text())
    print(f"  TV fit: objective {solution['objective']:.4f}, "
          f"K_T={solution['support']['k_t']}, K_S={solution['support']['k_s']}, "
          f"KKT ok={solution['kkt']['ok']}")
    quad = json.loads((out / "quickstart_quadratic" / "quadratic.json").read_text())
    print(f"  kernel fit: relative residual {quad['relative_residual']:.1e}, "
          f"seasonal spread {quad['seasonal_spread']:.3f}")
    conv = json.loads((out / "quickstart_converge" / "convergence.json").read_text())
    objs = [r["objective"] for r in conv["rungs"]]
    print(f"  ladder objectives: {objs} (monotone={conv['monotone']})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
