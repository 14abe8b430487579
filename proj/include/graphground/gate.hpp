#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "graphground/matcher.hpp"
#include "graphground/providers.hpp"
#include "graphground/render.hpp"
#include "graphground/scene.hpp"

namespace graphground {

struct GateConfig {
    double margin = 0.05;     // top1-top2 score ambiguity threshold
    double near_m = 1.5;      // candidate centroid proximity
    int max_candidates = 4;   // K forwarded to the VLM
    int image_width = 640;
    int image_height = 480;
};

enum class GateReason { close_candidates_neighbor_overlap, no_landmarks, room_only, none };

const char* to_string(GateReason r);

struct GateDecision {
    bool fire = false;
    GateReason reason = GateReason::none;
    std::vector<int> candidates;  // <= max_candidates object ids, rank order
};

/// Labels that describe the room itself rather than a landmark object.
const std::set<std::string>& room_lexicon();

/// Pure decision (no provider calls): fires when (a) the two best candidates
/// are within margin, share >= 1 one-hop scene neighbor, and sit within
/// near_m of each other; (b) the query has only the target node; or (c) the
/// query has edges and every non-target endpoint label is in the room
/// lexicon.
GateDecision should_gate(const GroundResult& result, const QueryGraph& gq,
                         const SceneGraph3D& gs, const GateConfig& cfg = {});

struct TieBreakRequest {
    Image image;
    std::string text;                    // raw query + per-candidate marker/label/caption block
    std::map<int, int> marker_to_object;  // 1-based marker -> object id
};

TieBreakRequest build_tie_break_request(const GateDecision& decision, const QueryGraph& gq,
                                        const SceneGraph3D& gs, const GateConfig& cfg = {});

/// Asks the client to answer with one marker integer or NONE; two retries on
/// unparseable replies, then none. Never throws on response content.
std::optional<int> tie_break(const TieBreakRequest& req, ChatClient& chat,
                             std::vector<std::string>* transcript = nullptr);

/// Final pick: the VLM choice when the gate fired and the tie-break chose a
/// candidate; the graph top-1 otherwise. path is "vlm" or "graph".
struct Resolution {
    int object_id = 0;
    std::string path;
};

Resolution resolve(const GroundResult& result, const GateDecision& decision,
                   const std::optional<int>& tie_break_choice);

}  // namespace graphground
