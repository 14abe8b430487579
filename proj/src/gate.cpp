#include "graphground/gate.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>
#include <stdexcept>

namespace graphground {

const char* to_string(GateReason r) {
    switch (r) {
        case GateReason::close_candidates_neighbor_overlap:
            return "close_candidates_neighbor_overlap";
        case GateReason::no_landmarks:
            return "no_landmarks";
        case GateReason::room_only:
            return "room_only";
        case GateReason::none:
            return "none";
    }
    return "none";
}

const std::set<std::string>& room_lexicon() {
    static const std::set<std::string> lex = {"room", "wall", "floor", "ceiling", "corner",
                                              "center"};
    return lex;
}

namespace {

std::set<int> one_hop_neighbors(const SceneGraph3D& gs, int id) {
    std::set<int> out;
    for (const RelationEdge& e : gs.edges) {
        if (e.src_id == id) out.insert(e.dst_id);
        if (e.dst_id == id) out.insert(e.src_id);
    }
    return out;
}

std::vector<int> top_candidates(const GroundResult& result, int k) {
    std::vector<int> ids;
    for (const Mapping& m : result.ranked) {
        if (static_cast<int>(ids.size()) >= k) break;
        ids.push_back(m.assignment.at(0));
    }
    return ids;
}

}  // namespace

GateDecision should_gate(const GroundResult& result, const QueryGraph& gq,
                         const SceneGraph3D& gs, const GateConfig& cfg) {
    if (result.ranked.empty()) throw std::invalid_argument("should_gate: empty ranking");
    GateDecision decision;

    // (a) close candidates with neighbor overlap (conjunctive: margin AND
    // shared neighbor AND proximity)
    if (result.ranked.size() >= 2) {
        const Mapping& top1 = result.ranked[0];
        const Mapping& top2 = result.ranked[1];
        const int id1 = top1.assignment.at(0);
        const int id2 = top2.assignment.at(0);
        const bool ambiguous = top1.total - top2.total < cfg.margin;
        if (ambiguous) {
            const std::set<int> n1 = one_hop_neighbors(gs, id1);
            const std::set<int> n2 = one_hop_neighbors(gs, id2);
            bool shared = false;
            for (int n : n1) {
                if (n != id1 && n != id2 && n2.count(n)) {
                    shared = true;
                    break;
                }
            }
            const double dist = (gs.at(id1).centroid() - gs.at(id2).centroid()).norm();
            if (shared && dist < cfg.near_m) {
                decision.fire = true;
                decision.reason = GateReason::close_candidates_neighbor_overlap;
            }
        }
    }

    // (b) query contains only the target node
    if (!decision.fire && gq.nodes.size() == 1) {
        decision.fire = true;
        decision.reason = GateReason::no_landmarks;
    }

    // (c) target described solely relative to the room
    if (!decision.fire && !gq.edges.empty()) {
        bool all_room = true;
        for (const QueryEdge& e : gq.edges) {
            for (int idx : {e.src_idx, e.dst_idx}) {
                if (idx == 0) continue;  // the target itself
                if (!room_lexicon().count(gq.nodes[static_cast<std::size_t>(idx)].label)) {
                    all_room = false;
                }
            }
        }
        if (all_room) {
            decision.fire = true;
            decision.reason = GateReason::room_only;
        }
    }

    if (decision.fire) {
        decision.candidates = top_candidates(result, cfg.max_candidates);
    }
    return decision;
}

TieBreakRequest build_tie_break_request(const GateDecision& decision, const QueryGraph& gq,
                                        const SceneGraph3D& gs, const GateConfig& cfg) {
    if (!decision.fire || decision.candidates.empty()) {
        throw std::invalid_argument("tie-break request needs a fired gate with candidates");
    }
    TieBreakRequest req;
    req.image = render_candidates(gs, decision.candidates, cfg.image_width, cfg.image_height);

    std::ostringstream text;
    text << "Query: " << gq.raw_query << "\n";
    text << "The rendered scene view highlights candidate objects with numbered boxes.\n";
    text << "Candidates:\n";
    for (std::size_t i = 0; i < decision.candidates.size(); ++i) {
        const int marker = static_cast<int>(i) + 1;
        const ObjectInstance& obj = gs.at(decision.candidates[i]);
        text << marker << ": " << obj.label;
        if (!obj.captions.empty()) text << " - " << obj.captions.front();
        text << "\n";
        req.marker_to_object[marker] = decision.candidates[i];
    }
    text << "Which numbered candidate best matches the query?\n";
    text << "Respond with a single marker number, or NONE if no candidate matches.\n";
    req.text = text.str();
    return req;
}

namespace {

/// NONE (any case) -> none; otherwise the first all-digit token -> marker.
/// Anything else is unparseable.
std::optional<std::optional<int>> parse_tie_break_reply(const std::string& reply,
                                                        const std::map<int, int>& markers) {
    std::istringstream in(reply);
    std::string token;
    while (in >> token) {
        std::string stripped;
        for (char c : token) {
            if (std::isalnum(static_cast<unsigned char>(c))) {
                stripped += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
            }
        }
        if (stripped.empty()) continue;
        if (stripped == "NONE") return std::optional<int>{};
        if (stripped.size() <= 9 &&
            std::all_of(stripped.begin(), stripped.end(),
                        [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) {
            const int marker = std::stoi(stripped);
            auto it = markers.find(marker);
            if (it == markers.end()) return std::nullopt;  // unknown marker: retry
            return std::optional<int>{it->second};
        }
        return std::nullopt;  // prose: retry
    }
    return std::nullopt;  // empty reply: retry
}

}  // namespace

std::optional<int> tie_break(const TieBreakRequest& req, ChatClient& chat,
                             std::vector<std::string>* transcript) {
    std::string prompt = req.text;
    for (int attempt = 0; attempt <= 2; ++attempt) {
        std::string reply;
        try {
            reply = chat.chat({{"user", prompt, encode_png_rgb(req.image)}});
        } catch (const std::exception& e) {
            if (transcript) transcript->push_back(std::string("error: ") + e.what());
            return std::nullopt;  // provider failure degrades to graph top-1
        }
        if (transcript) {
            transcript->push_back(prompt);
            transcript->push_back(reply);
        }
        const auto parsed = parse_tie_break_reply(reply, req.marker_to_object);
        if (parsed) return *parsed;
        prompt = req.text + "Respond with only one marker number or NONE.\n";
    }
    return std::nullopt;  // unparseable after retries: safe fallback
}

Resolution resolve(const GroundResult& result, const GateDecision& decision,
                   const std::optional<int>& tie_break_choice) {
    if (result.ranked.empty()) throw std::invalid_argument("resolve: empty ranking");
    Resolution r;
    if (decision.fire && tie_break_choice) {
        r.object_id = *tie_break_choice;
        r.path = "vlm";
    } else {
        r.object_id = result.ranked.front().assignment.at(0);
        r.path = "graph";
    }
    return r;
}

}  // namespace graphground
