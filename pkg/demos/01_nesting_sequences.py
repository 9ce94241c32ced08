"""
Reading a nested tree off its event times
=========================================

A host tree, a parasite tree and a map from parasite leaves to host leaves.
We walk through the order in which things split and what that order says
about coupling.
"""

# %%
import numpy as np

from sigmaspace import LeafMap, NestedTree, parse_newick
from sigmaspace.nesting import (
    annotated_nesting_sequence,
    concordance,
    cospeciation_events,
    decoupled_sequence,
    interleaved_sequence,
    poset_leq,
)

lm = LeafMap.parse("1:A,2:B,3:C")
host = parse_newick("((A:1,B:1):2,C:3);")

# %%
# Two parasite histories on the same hosts. In the first one every parasite
# split happens shortly after the matching host split.
tracking = NestedTree(host, parse_newick("((1:1.5,2:1.5):2,3:3.5);"), lm)
drifting = NestedTree(host, parse_newick("((1:3.5,3:3.5):0.5,2:4);"), lm)

for name, t in [("tracking", tracking), ("drifting", drifting)]:
    print(f"{name:9s} {annotated_nesting_sequence(t)}")

# %%
# The interleaved word is the lowest any tree of this type can carry, the
# decoupled word the highest.
low, high = interleaved_sequence(lm), decoupled_sequence(lm)
print(low, "<=", high, poset_leq(low, high))

# %%
# Concordance compares the parasite distances pushed down onto the hosts.
c = concordance(drifting)
print(np.round(c.M, 3))

# %%
# Nudge the parasite splits until they coincide with the host ones and the
# cospeciations show up as realized events.
exact = NestedTree(host, parse_newick("((1:1,2:1):2,3:3);"), lm)
print(cospeciation_events(exact))
