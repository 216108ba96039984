# %% [markdown]
# Wall time and analytic memory as the sequence grows, with the landmark
# budget fixed.

# %%
from sketchattn import evalbench

reports = evalbench.runtime_sweep([512, 1024, 2048, 4096], d=128, p=32, repeats=5)
table = {(r.n, r.method, r.metric): r.value for r in reports}
print(f"{'n':>6} {'skyformer s':>12} {'exact s':>10} {'skyformer MB':>13} {'exact MB':>9}")
for n in (512, 1024, 2048, 4096):
    print(f"{n:6d} {table[(n, 'SkyformerLifted', 'seconds')]:12.4f} {table[(n, 'Exact', 'seconds')]:10.4f}"
          f" {table[(n, 'SkyformerLifted', 'peak_bytes')] / 2**20:13.2f}"
          f" {table[(n, 'Exact', 'peak_bytes')] / 2**20:9.2f}")
