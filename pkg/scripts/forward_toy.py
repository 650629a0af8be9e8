"""Toy segmentation forward pass on a synthetic room, with stage sizes and timing."""

import argparse
import time

import numpy as np

from pointgva.bench import synth_uniform
from pointgva.geom import PointCloud
from pointgva.network import BackboneConfig, SegmentationNet, count_params, stage_point_counts


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=10_000)
    ap.add_argument("--room", type=float, default=4.0, help="edge length of the cube")
    ap.add_argument("--config", default=None, help="TOML config; toy settings if omitted")
    args = ap.parse_args()
    cfg = BackboneConfig.load(args.config) if args.config else BackboneConfig.toy()
    base = synth_uniform(args.n, cfg.in_channels, 0)
    cloud = PointCloud(base.positions * args.room, base.features)
    net = SegmentationNet(cfg)
    t0 = time.perf_counter()
    logits = net(cloud).data
    print(f"params {count_params(net)}; forward {time.perf_counter() - t0:.2f}s; "
          f"logits {logits.shape}, finite={np.isfinite(logits).all()}")
    print("points per level:", stage_point_counts(net.backbone, cloud))


if __name__ == "__main__":
    main()
