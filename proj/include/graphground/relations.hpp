#pragma once

#include <map>
#include <string>
#include <vector>

#include "graphground/ingest.hpp"
#include "graphground/providers.hpp"
#include "graphground/scene.hpp"

namespace graphground {

/// marker -> object id for the detections of one frame that survived
/// reconstruction.
struct MarkerBinding {
    int frame_id = 0;
    std::map<int, int> marker_to_object;
};

/// One parsed relation line, still in marker space.
struct RelationTriple {
    int src_marker = 0;
    int dst_marker = 0;
    std::string predicate;  // normalized lowercase, copulas stripped
    int frame_id = 0;
};

struct MarkerPrompt {
    std::string text;
    /// (marker, mask centroid pixel) pairs for callers that draw annotations;
    /// the mock provider ignores images, so drawing is optional.
    std::vector<std::pair<int, Eigen::Vector2d>> annotations;
};

/// Deterministic set-of-marks prompt enumerating `label[marker]` pairs and the
/// one-relation-per-line response grammar. Throws on a detection-free frame.
MarkerPrompt build_marker_prompt(const FrameRecord& frame);

struct ParseStats {
    int lines = 0;
    int parse_failures = 0;    // lines not matching the grammar
    int dangling_markers = 0;  // well-formed lines naming unknown markers
};

/// Total function over arbitrary response text: lines matching
/// `<word+>[<int>] <predicate> <word+>[<int>]` become triples, everything
/// else is counted, never thrown.
std::vector<RelationTriple> parse_relations(const std::string& response,
                                            const FrameRecord& frame, ParseStats* stats = nullptr);

struct LiftStats {
    int dropped_unbound = 0;  // marker not bound to a surviving object
    int dropped_self = 0;     // both markers merged into the same object
};

std::vector<RelationEdge> lift_to_3d(const std::vector<RelationTriple>& triples,
                                     const MarkerBinding& binding, LiftStats* stats = nullptr);

/// Directional predicate pairs that contradict each other on the same ordered
/// object pair; "near" maps to itself (symmetric, never contradictory).
const std::map<std::string, std::string>& predicate_antonyms();

/// Groups edges by (src, dst, predicate) summing counts, then resolves
/// antonym contradictions per ordered pair by majority count (exact ties keep
/// both). Output is canonically sorted, making the operation idempotent.
std::vector<RelationEdge> aggregate_edges(const std::vector<RelationEdge>& edges);

struct GeometricConfig {
    double max_pair_distance = 2.0;  // centroid gate for any predicate
    double near_distance = 1.0;      // symmetric "near" threshold
    double axis_margin = 0.05;       // minimum dominant-axis separation
    double touch_eps = 0.05;         // max vertical gap for "on top of"
};

/// Synthesizes fallback edges from world-frame geometry (+Z up): the dominant
/// centroid-delta axis yields left of/right of (x) or above/below (z), with
/// "on top of" added for touching stacked boxes with overlapping footprints;
/// "near" is emitted symmetrically. Ordered pairs already covered by a vlm
/// edge are left untouched.
std::vector<RelationEdge> geometric_relations(const SceneGraph3D& g,
                                              const GeometricConfig& cfg = {});

struct RelateStats {
    int frames_prompted = 0;
    int triples = 0;
    ParseStats parse;
    LiftStats lift;
};

/// Runs marker prompting + parsing + lifting over every stride-th frame that
/// has >= 2 bound markers, then aggregates. Returns vlm-provenance edges only.
std::vector<RelationEdge> extract_relations(
    const std::vector<FrameRecord>& frames,
    const std::map<std::pair<int, int>, int>& bindings, ChatClient& chat, int frame_stride = 1,
    RelateStats* stats = nullptr);

/// Debug dump: one RelationEdge JSON object per line.
std::string edges_to_jsonl(const std::vector<RelationEdge>& edges);
std::vector<RelationEdge> edges_from_jsonl(const std::string& text);

}  // namespace graphground
