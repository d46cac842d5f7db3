"""
From an interaction table to a feature graph
============================================

Interaction rows are filtered by score, then by node degree (one pass, the
induced subgraph is kept). Model features are then attached: a feature mapped
to a protein takes that protein's links, anything else becomes an isolated
node. Every node gets a self-loop so aggregation includes the node itself.
"""

import io

import numpy as np

from mogkan.graph import aggregate, attach_features, build_graph, degree_filter, parse_interactions, parse_mapping

table = parse_interactions(io.StringIO(
    "protein1\tprotein2\tcombined_score\n"
    "TP53\tMDM2\t999\n"
    "TP53\tEGFR\t720\n"
    "EGFR\tGRB2\t980\n"
    "MDM2\tGRB2\t150\n"
    "TP53\tGRB2\t610\n"
))
g = build_graph(table, min_score=400)
print("nodes:", g.node_ids)
print("degrees:", dict(zip(g.node_ids, g.degrees().tolist())))

core = degree_filter(g, min_degree=2)
print("degree >= 2:", core.node_ids, sorted(core.edges))

###############################################################################
# Features: two mRNA genes named like their proteins, a methylation probe
# mapped to EGFR and a miRNA with no protein.

mapping = parse_mapping(io.StringIO("feature_id\tprotein_id\ncg0042\tEGFR\n"))
features = ["TP53", "EGFR", "cg0042", "mir-21"]
fg, fmap = attach_features(core, features, mapping)
print("feature edges:", sorted((fg.node_ids[i], fg.node_ids[j]) for i, j in fg.edges))
print("unmapped:", fmap.unmapped)

x = np.array([[1.0, 3.0, 5.0, 7.0]])
print("mean over neighborhoods:", aggregate(fg, x, "mean"))
print("sum over neighborhoods: ", aggregate(fg, x, "sum"))
