"""Zero-shot 3D visual grounding over object-centric scene graphs.

Thin dict-level wrapper around the C++ core. Scenes are scene-graph JSON
payloads, queries and results are lists of records (JSONL on the wire),
matching the CLI file formats exactly.
"""

import json

try:
    from . import _graphground as _core
except ImportError:  # plain-CMake builds put the module next to the package
    import _graphground as _core

__all__ = [
    "synth",
    "ground",
    "evaluate",
    "parse_query",
    "mock_embed",
    "aabb_iou",
    "render",
]


def _loads_jsonl(text):
    return [json.loads(line) for line in text.splitlines() if line.strip()]


def _dumps_jsonl(records):
    return "".join(json.dumps(r, sort_keys=True) + "\n" for r in records)


def synth(seed, objects=8, groups=1, dup=3, density=1.0, corrupt=False):
    """Generate a synthetic scene.

    Returns a dict with keys: scene (scene-graph dict), queries (list of
    query records), gt_ids (query_id -> object id), config (pipeline config
    tuned for the synthetic point density), and scene_corrupt when
    corrupt=True.
    """
    bundle = json.loads(_core.synth(seed, objects, groups, dup, density, corrupt))
    out = {
        "scene": json.loads(bundle["scene"]),
        "queries": _loads_jsonl(bundle["queries"]),
        "gt_ids": bundle["gt_ids"],
        "config": bundle["config"],
    }
    if "scene_corrupt" in bundle:
        out["scene_corrupt"] = json.loads(bundle["scene_corrupt"])
    return out


def ground(scene, queries, mode="full", jobs=1, chat_response="NONE", config=None):
    """Ground query records against a scene dict; returns result records.

    config takes the same schema as the CLI --config file; synth() bundles a
    matching one under its "config" key.
    """
    return _loads_jsonl(
        _core.ground(
            json.dumps(scene),
            _dumps_jsonl(queries),
            mode,
            jobs,
            chat_response,
            json.dumps(config) if config else "",
        )
    )


def evaluate(results, queries):
    """Acc@{0.1,0.25,0.5} metrics dict for result records vs gt queries."""
    return json.loads(_core.evaluate(_dumps_jsonl(results), _dumps_jsonl(queries)))


def parse_query(text):
    """Rule-based referring-expression parse; returns a query-graph dict."""
    return json.loads(_core.parse_query(text))


def mock_embed(text, dim=256):
    """Deterministic unit-norm mock embedding as a list of floats."""
    return _core.mock_embed(text, dim)


def aabb_iou(box_a, box_b):
    """3D IoU of two boxes given as {"min": [...], "max": [...]} dicts."""
    return _core.aabb_iou(box_a["min"], box_a["max"], box_b["min"], box_b["max"])


def render(scene, ids=None, width=640, height=480):
    """Render candidate objects; returns PNG bytes."""
    return _core.render(json.dumps(scene), list(ids or []), width, height)
