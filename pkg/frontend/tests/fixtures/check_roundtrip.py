"""Read an exported control-point file back and print what it holds.

Usage: python3 check_roundtrip.py FILE

The workflow test feeds the UI's exported bytes through the same reader
the renderer uses, proving the download is a usable control-point file.
"""

import json
import sys

from spectramls import read_control_points


def main() -> None:
    cps = read_control_points(sys.argv[1])
    print(
        json.dumps(
            {
                "count": int(cps.u.shape[0]),
                "bands": int(cps.u.shape[1]),
                "sensor": cps.sensor,
                "hsi": [list(p) for p in cps.hsi_pixels or []],
                "rgb": [list(p) for p in cps.rgb_pixels or []],
                "u": cps.u.tolist(),
                "v": cps.v.astype(int).tolist(),
            }
        )
    )


if __name__ == "__main__":
    main()
