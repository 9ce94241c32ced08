"""
Geodesics between nested trees, and an average of several
=========================================================
"""

# %%
import numpy as np

from sigmaspace import SigmaPoint, cone_distance, distance, frechet_mean, geodesic, sigma_coordinates
from sigmaspace.metric import random_point, tree_from_sigma
from sigmaspace.nesting import LeafMap

rng = np.random.default_rng(0)
lm = LeafMap.parse("1:A,2:A,3:B")

# %%
# Two random points; the geodesic is a chain of straight pieces, one per
# orthant it passes through.
p, q = random_point(lm, rng), random_point(lm, rng)
path = geodesic(p, q)
print(f"d = {path.length:.6f}   via the cone {cone_distance(p, q):.6f}")
for s in path.segments:
    print(f"  {s.orthant.sequence}  {np.round(s.start, 3)} -> {np.round(s.end, 3)}")

# %%
# Points along the way are nested trees too.
mid = path.point_at(0.5)
t = tree_from_sigma(mid.orthant, mid.sigma)
print(t.host.to_newick(4), t.parasite.to_newick(4))
assert np.isclose(distance(p, mid), path.length / 2)

# %%
# A cloud and its Frechet mean.
cloud = [random_point(lm, rng) for _ in range(12)]
m = frechet_mean(cloud, restarts=3, seed=1)
print("mean orthant", m.orthant.sequence, "sigma", np.round(m.sigma, 4))
spread = np.array([distance(m, x) for x in cloud])
print("mean squared distance", float(np.mean(spread**2)))

# %%
# Same orthant, so the coordinate mean is the answer.
o = cloud[0].orthant
flat = [SigmaPoint(o, tuple(rng.uniform(0, 2, o.dimension))) for _ in range(6)]
print(np.allclose(frechet_mean(flat).sigma, np.mean([f.sigma for f in flat], axis=0)))
print(np.allclose(sigma_coordinates(tree_from_sigma(o, flat[0].sigma)).sigma, flat[0].sigma))
