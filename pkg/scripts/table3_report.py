"""Shape table and parameter counts at 227 and 224 input, plus a toy 64x64 forward."""
import time

import numpy as np

from colordet import backbone as bb
from colordet import fpn

graph = bb.build_vcr_resnet()
for size in (227, 224):
    print(f"input {size}x{size}")
    for row in bb.infer_shapes(graph, (size, size, 3)):
        print(f"  {row.name:<14}{row.shape_str()}")

counts = bb.param_count(graph)
print("\nstage   computed      reference")
for k, v in counts["stages"].items():
    ref = bb.REFERENCE_STAGE_PARAMS.get(k, "")
    print(f"{k:<7}{v:>10,}   {ref:>12,}" if ref else f"{k:<7}{v:>10,}")
print(f"total  {counts['total']:>10,}")

t = time.perf_counter()
x = np.random.default_rng(0).uniform(size=(1, 3, 64, 64))
stages = bb.forward(graph, x, bb.init_weights(graph, 0, head=False))
pyr = fpn.build_pyramid(stages, fpn.init_fpn_weights(seed=0))
print(f"\ntoy forward + pyramid in {time.perf_counter() - t:.2f}s")
for name, level in pyr.levels().items():
    print(f"  {name} {level.shape}")
