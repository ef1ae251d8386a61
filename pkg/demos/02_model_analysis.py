"""Build the baseline detector from its JSON layer table and reproduce the
published model-size figures: 7,012,822 parameters and ~15.8 GFLOPs at 640.
"""

from litedet import analysis
from litedet.graph import build_from_file

config = analysis.CONFIG_DIR / "baseline.json"
graph = build_from_file(config, nc=1, input_size=640, seed=0)

report = analysis.analyze(graph)
print(analysis.format_report(report))

# the detection head sees three strided scales
print("\ndetect strides:", graph.strides)

# parameter totals are input-size independent; compute is not
for size in (320, 640):
    r = analysis.analyze(build_from_file(config, nc=1, input_size=size))
    print(f"imgsz {size}: params={r.total_params:,}  gflops={r.gflops:.2f}")
