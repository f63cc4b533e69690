import copy
import os

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default",
    max_examples=200,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.register_profile("quick", max_examples=25, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


# Smallest valid config per kind, sized so a full run stays under a second.
_MINIMAL_DOCS = {
    "poisson-hit": {
        "schema_version": 1,
        "kind": "poisson-hit",
        "name": "tiny-poisson",
        "seed": 11,
        "target": {"center": "1/3", "lambda": 2.0},
        "run": {"samples": 10_000, "n_steps": 64},
    },
    "mixed-poisson-return": {
        "schema_version": 1,
        "kind": "mixed-poisson-return",
        "name": "tiny-return",
        "seed": 12,
        "target": {"taus": [0.5, 1.0]},
        "run": {"samples": 10_000, "n_steps": 64},
    },
    "multilog-hit": {
        "schema_version": 1,
        "kind": "multilog-hit",
        "name": "tiny-multilog-hit",
        "seed": 13,
        "target": {"center": "1/3"},
        "run": {"samples": 8, "log2_n_max": 8},
    },
    "multilog-return": {
        "schema_version": 1,
        "kind": "multilog-return",
        "name": "tiny-multilog-return",
        "seed": 14,
        "run": {"samples": 8, "log2_n_max": 8},
    },
    "gibbs-lil": {
        "schema_version": 1,
        "kind": "gibbs-lil",
        "name": "tiny-gibbs",
        "seed": 15,
        "potential": {"kind": "weights", "weights": [0.3, 0.7]},
        "run": {"samples": 64, "block_len": 256},
    },
    "scaled-process": {
        "schema_version": 1,
        "kind": "scaled-process",
        "name": "tiny-scaled",
        "seed": 16,
        "target": {"center": "1/3", "radius_cap": 2.0},
        "run": {"samples": 10_000, "n_steps": 256},
    },
    "evt": {
        "schema_version": 1,
        "kind": "evt",
        "name": "tiny-evt",
        "seed": 17,
        "target": {"center": "1/3"},
        "run": {"samples": 10_000, "n_steps": 256},
    },
    "indep-audit": {
        "schema_version": 1,
        "kind": "indep-audit",
        "name": "tiny-indep",
        "seed": 18,
        "target": {"center": "1/3"},
        "params": {"tuples": [{"n": 1024, "ks": [1]}]},
        "run": {"samples": 10_000},
    },
    "kg-scan": {
        "schema_version": 1,
        "kind": "kg-scan",
        "name": "tiny-kg",
        "seed": 19,
        "query": {},
        "run": {"mode": "scan", "alphas": ["golden"], "n_max": 256},
    },
    "rogers-audit": {
        "schema_version": 1,
        "kind": "rogers-audit",
        "name": "tiny-rogers",
        "seed": 20,
        "run": {"mode": "multi-solution", "samples": 400, "m_log2s": [4, 5, 6]},
    },
}


@pytest.fixture
def minimal_doc():
    """Factory: a fresh deep copy of the smallest valid config for a kind."""

    def make(kind: str) -> dict:
        return copy.deepcopy(_MINIMAL_DOCS[kind])

    return make
