"""Regenerate the bundled vessel-density weight map.

Builds the synthetic vessel mask, measures the dense-pixel fraction of
every face region, and normalizes the fractions into per-region weights
with unit mean. Writes JSON to the path given on the command line, or
prints the weights when no path is given.
"""

import sys
from pathlib import Path

from pulsestitch.harness import synthetic_vessel_mask
from pulsestitch.representation import vessel_weights_from_mask
from pulsestitch.signals import partition_rois


def main():
    mask, landmarks = synthetic_vessel_mask()
    height, width = mask.shape
    grid = partition_rois((0, 0, width, height))
    weight_map = vessel_weights_from_mask(mask, landmarks, landmarks, grid)

    print(f"{len(weight_map.weights)} region weights, "
          f"mean {weight_map.weights.mean():.3f}, "
          f"max {weight_map.weights.max():.3f}")
    if len(sys.argv) > 1:
        path = Path(sys.argv[1])
        path.write_text(weight_map.to_json())
        print(f"wrote {path}")
    else:
        for i, w in enumerate(weight_map.weights):
            print(f"  region {i:2d}: {w:.4f}")


if __name__ == "__main__":
    main()
