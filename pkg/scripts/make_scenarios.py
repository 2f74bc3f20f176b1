"""Regenerate the scenario YAML files under scenarios/.

Every walk stays on one side of the LoS line, segment lengths are whole
strides and each file is a complete run configuration (missing sections
take their defaults).  The failure/ folder holds walks that are expected
to be rejected.
"""

from pathlib import Path

import numpy as np
import yaml

ROOT = Path(__file__).resolve().parents[1] / "scenarios"

WALKS = {
    "paper_diagonal": ("4-step diagonal walk away from the link", [(1.0, 0.6), (2.6, 1.8)]),
    "north_x1": ("straight walk away from the LoS line near Tx", [(1.0, 0.4), (1.0, 1.9)]),
    "south_x3": ("straight walk below the LoS line near Rx", [(3.0, -0.4), (3.0, -1.9)]),
    "east_lower": ("walk parallel to the link, lower half", [(0.2, -1.5), (1.7, -1.5)]),
    "east_upper_rx": ("walk parallel to the link towards the Rx side", [(2.4, 1.2), (3.9, 1.2)]),
    "west_upper": ("walk parallel to the link towards Tx", [(1.6, 1.2), (0.1, 1.2)]),
    "diag_receding": ("diagonal walk away from the link", [(2.0, 0.3), (3.2, 1.9)]),
    "diag_approach": ("diagonal walk towards the link", [(0.6, 1.8), (2.2, 0.6)]),
    "diag_lower": ("diagonal walk below the link", [(0.5, -0.5), (2.1, -1.7)]),
    "diag_lower_rx": ("diagonal walk towards Rx ending near the LoS", [(3.6, -1.8), (2.4, -0.2)]),
    "turn_right": ("4 straight steps then a 90 degree right turn",
                   [(0.4, 0.5), (2.0, 1.7), (2.6, 0.9)]),
    "turn_left_lower": ("4 straight steps then a 90 degree left turn",
                        [(0.4, -0.5), (2.0, -1.7), (2.6, -0.9)]),
    "turn_axis": ("3 steps south then a 90 degree turn east",
                  [(0.5, -0.4), (0.5, -1.9), (2.0, -1.9)]),
    "turn_twice": ("two 90 degree turns", [(3.6, 0.3), (2.4, 1.9), (1.6, 1.3), (2.2, 0.5)]),
}


def tangential_waypoints(path_length=5.0, d_los=4.0, x_span=(0.8, 3.2), n=41):
    """Dense polyline along one Fresnel ellipse (constant reflected path)."""
    a, c = path_length / 2, d_los / 2
    b = np.sqrt(a * a - c * c)
    t0 = np.arccos((x_span[1] - c) / a)
    t1 = np.arccos((x_span[0] - c) / a)
    t = np.linspace(t0, t1, n)
    return [(round(float(c + a * np.cos(v)), 4), round(float(b * np.sin(v)), 4)) for v in t]


def write(path, comment, waypoints, **extra):
    doc = {"scenario": {"waypoints": [list(p) for p in waypoints], **extra}}
    text = f"# {comment}\n" + yaml.safe_dump(doc, sort_keys=False, default_flow_style=None)
    path.write_text(text, encoding="utf-8")


def main():
    ROOT.mkdir(exist_ok=True)
    (ROOT / "failure").mkdir(exist_ok=True)
    for name, (comment, wp) in WALKS.items():
        write(ROOT / f"{name}.yaml", comment, wp)
    write(ROOT / "failure" / "tangential.yaml",
          "walk along a Fresnel ellipse: no Doppler anywhere, tracking must fail (exit 3)",
          tangential_waypoints())


if __name__ == "__main__":
    main()
