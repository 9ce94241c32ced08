"""
The link at the cone point for three hosts and three parasites
==============================================================
"""

# %%
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import networkx as nx

from sigmaspace import LeafMap, build_complex, census, link_graph
from sigmaspace.complex import check_cube_condition, has_3_cycle, perfect_cospeciation_faces

out = Path(__file__).with_name("out")
out.mkdir(exist_ok=True)

lm = LeafMap.parse("1:A,2:B,3:C")
print(census(lm))

# %%
# Drop the leaf interval and look at how the remaining orthants meet.
model = build_complex(lm, reduced=True)
lg = link_graph(model)
for v in lg.vertices:
    print(f"{str(model.orthants[v].annotated):14s} degree {lg.degree(v)}")

# %%
print("3-cycle:", has_3_cycle(model), " cube condition:", check_cube_condition(build_complex(lm)))
print("perfect cospeciation faces:", len(perfect_cospeciation_faces(model)))

# %%
g = lg.to_networkx()
pos = nx.spring_layout(g, seed=3)
# orthants in red (interleaved) or blue, shared facets as small grey dots
kind = nx.get_node_attributes(g, "label")
colors = ["lightgrey" if v not in kind else "tab:red" if "H P^c H" in kind[v] else "tab:blue" for v in g]
sizes = [15 if v not in kind else 80 for v in g]
fig, ax = plt.subplots(figsize=(6, 6))
nx.draw(g, pos, ax=ax, node_size=sizes, node_color=colors, width=0.8)
ax.set_title("link of the reduced complex")
fig.savefig(out / "link_sigma3.png", dpi=120)
print("wrote", out / "link_sigma3.png")
