#include "graphground/matcher.hpp"

#include <algorithm>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>

#include "graphground/relations.hpp"

namespace graphground {

namespace {

void check_query(const QueryGraph& gq) {
    if (gq.nodes.empty()) throw std::invalid_argument("query graph has no nodes");
    const int n = static_cast<int>(gq.nodes.size());
    for (const QueryEdge& e : gq.edges) {
        if (e.src_idx < 0 || e.src_idx >= n || e.dst_idx < 0 || e.dst_idx >= n) {
            throw std::invalid_argument("query edge index out of range");
        }
    }
}

}  // namespace

std::vector<CandidateSet> semantic_filter(const QueryGraph& gq, const SceneGraph3D& gs,
                                          EmbeddingProvider& embedder, const MatcherConfig& cfg) {
    check_query(gq);
    if (gs.nodes.empty()) throw std::runtime_error("empty scene graph");

    const std::set<std::string> labels = gs.label_space();
    std::vector<std::string> texts;
    for (const QueryNode& qn : gq.nodes) texts.push_back(qn.text());
    texts.insert(texts.end(), labels.begin(), labels.end());
    const std::vector<Embedding> embs = embedder.embed(texts);

    std::map<std::string, const Embedding*> label_emb;
    {
        std::size_t i = gq.nodes.size();
        for (const std::string& l : labels) label_emb[l] = &embs[i++];
    }

    std::vector<CandidateSet> out;
    for (std::size_t qi = 0; qi < gq.nodes.size(); ++qi) {
        const Embedding& e_q = embs[qi];
        CandidateSet cs;
        cs.query_node_idx = static_cast<int>(qi);
        for (const std::string& l : labels) {  // sorted: ties keep the smallest label
            const double c = cosine(e_q, *label_emb.at(l));
            if (cs.matched_label.empty() || c > cs.label_cosine) {
                cs.matched_label = l;
                cs.label_cosine = c;
            }
        }
        if (cs.label_cosine >= cfg.label_sim_threshold) {
            for (const auto& [id, obj] : gs.nodes) {
                if (obj.label == cs.matched_label) cs.ids.push_back(id);
            }
        } else {
            cs.fallback = true;
            cs.matched_label.clear();
            std::vector<std::pair<double, int>> scored;  // (-cosine, id): sort ascending
            for (const auto& [id, obj] : gs.nodes) {
                scored.emplace_back(-cosine(e_q, obj.embedding), id);
            }
            std::sort(scored.begin(), scored.end());
            const std::size_t k =
                std::min<std::size_t>(static_cast<std::size_t>(cfg.top_k_fallback), scored.size());
            for (std::size_t i = 0; i < k; ++i) cs.ids.push_back(scored[i].second);
            std::sort(cs.ids.begin(), cs.ids.end());
        }
        out.push_back(std::move(cs));
    }
    return out;
}

MatchContext build_match_context(const QueryGraph& gq, const SceneGraph3D& gs,
                                 EmbeddingProvider& embedder, const MatcherConfig& cfg,
                                 bool edges_enabled) {
    check_query(gq);
    MatchContext ctx;
    ctx.gq = &gq;
    ctx.gs = &gs;
    ctx.cfg = cfg;
    ctx.cfg.normalize_weights();
    ctx.edges_enabled = edges_enabled;

    // one batched call for node texts, query predicates, scene predicates,
    // and the antonym images of scene predicates (reverse-edge checks)
    std::vector<std::string> texts;
    for (const QueryNode& qn : gq.nodes) texts.push_back(qn.text());
    for (const QueryEdge& qe : gq.edges) texts.push_back(qe.predicate);
    std::set<std::string> predicates;
    const auto& antonyms = predicate_antonyms();
    for (const RelationEdge& e : gs.edges) {
        predicates.insert(e.predicate);
        auto ant = antonyms.find(e.predicate);
        if (ant != antonyms.end()) predicates.insert(ant->second);
        ctx.scene_pairs[{e.src_id, e.dst_id}].push_back(e.predicate);
    }
    texts.insert(texts.end(), predicates.begin(), predicates.end());

    const std::vector<Embedding> embs = embedder.embed(texts);
    std::size_t i = 0;
    for (std::size_t q = 0; q < gq.nodes.size(); ++q) ctx.query_node_emb.push_back(embs[i++]);
    for (std::size_t q = 0; q < gq.edges.size(); ++q) ctx.query_edge_emb.push_back(embs[i++]);
    for (const std::string& p : predicates) ctx.predicate_emb.emplace(p, embs[i++]);
    return ctx;
}

double edge_similarity(const QueryEdge& edge, const std::map<int, int>& assignment,
                       const MatchContext& ctx) {
    auto src = assignment.find(edge.src_idx);
    auto dst = assignment.find(edge.dst_idx);
    if (src == assignment.end() || dst == assignment.end()) return 0.0;

    std::size_t edge_idx = 0;
    for (; edge_idx < ctx.gq->edges.size(); ++edge_idx) {
        const QueryEdge& qe = ctx.gq->edges[edge_idx];
        if (qe.src_idx == edge.src_idx && qe.dst_idx == edge.dst_idx &&
            qe.predicate == edge.predicate) {
            break;
        }
    }
    if (edge_idx == ctx.gq->edges.size()) {
        throw std::invalid_argument("edge_similarity: edge not part of the query graph");
    }
    const Embedding& q_emb = ctx.query_edge_emb[edge_idx];

    double best = 0.0;
    auto forward = ctx.scene_pairs.find({src->second, dst->second});
    if (forward != ctx.scene_pairs.end()) {
        for (const std::string& p : forward->second) {
            best = std::max(best, cosine01(q_emb, ctx.predicate_emb.at(p)));
        }
    }
    const auto& antonyms = predicate_antonyms();
    auto reverse = ctx.scene_pairs.find({dst->second, src->second});
    if (reverse != ctx.scene_pairs.end()) {
        for (const std::string& p : reverse->second) {
            auto ant = antonyms.find(p);  // B right-of A satisfies A left-of B
            if (ant == antonyms.end()) continue;
            best = std::max(best, cosine01(q_emb, ctx.predicate_emb.at(ant->second)));
        }
    }
    return best;
}

Mapping score_mapping(const std::map<int, int>& assignment, const MatchContext& ctx) {
    Mapping m;
    m.assignment = assignment;
    const std::size_t n_query = ctx.gq->nodes.size();
    m.completion = static_cast<double>(assignment.size()) / static_cast<double>(n_query);

    auto target = assignment.find(0);
    if (target == assignment.end()) {
        m.total = -std::numeric_limits<double>::infinity();
        return m;
    }

    double node_sum = 0.0;
    for (const auto& [q_idx, obj_id] : assignment) {
        node_sum += cosine01(ctx.query_node_emb[static_cast<std::size_t>(q_idx)],
                             ctx.gs->at(obj_id).embedding);
    }
    m.s_node_mean = node_sum / static_cast<double>(assignment.size());

    const ObjectInstance& target_obj = ctx.gs->at(target->second);
    m.s_target = ctx.target_scorer
                     ? std::clamp(ctx.target_scorer(ctx.gq->nodes[0].text(), target_obj), 0.0, 1.0)
                     : cosine01(ctx.query_node_emb[0], target_obj.embedding);

    if (ctx.edges_enabled && !ctx.gq->edges.empty()) {
        double edge_sum = 0.0;
        for (const QueryEdge& qe : ctx.gq->edges) {
            edge_sum += edge_similarity(qe, assignment, ctx);
        }
        m.s_edge_mean = edge_sum / static_cast<double>(ctx.gq->edges.size());
    } else {
        m.s_edge_mean = 0.0;  // empty edge set (or the edges-off ablation)
    }

    m.total = ctx.cfg.alpha * m.s_target + ctx.cfg.beta * m.s_node_mean +
              ctx.cfg.gamma * m.s_edge_mean + ctx.cfg.delta * m.completion;
    return m;
}

namespace {

void dfs_assign(const std::vector<CandidateSet>& candidates, const MatcherConfig& cfg,
                std::size_t idx, std::map<int, int>& current, std::set<int>& used,
                const std::function<void(const std::map<int, int>&)>& emit) {
    if (idx == candidates.size()) {
        emit(current);
        return;
    }
    bool any = false;
    for (int id : candidates[idx].ids) {  // ascending ids
        if (used.count(id)) continue;
        any = true;
        used.insert(id);
        current[candidates[idx].query_node_idx] = id;
        dfs_assign(candidates, cfg, idx + 1, current, used, emit);
        current.erase(candidates[idx].query_node_idx);
        used.erase(id);
    }
    if (!any && cfg.allow_landmark_skip) {
        dfs_assign(candidates, cfg, idx + 1, current, used, emit);  // skip this landmark
    }
    // with skip disabled an exhausted set prunes the whole branch
}

}  // namespace

std::vector<std::map<int, int>> enumerate_mappings(const QueryGraph& gq,
                                                   const std::vector<CandidateSet>& candidates,
                                                   const MatcherConfig& cfg) {
    check_query(gq);
    if (candidates.size() != gq.nodes.size()) {
        throw std::invalid_argument("one candidate set per query node required");
    }
    if (candidates[0].ids.empty()) {
        throw std::runtime_error("target candidate set is empty");
    }
    std::vector<std::map<int, int>> out;
    std::map<int, int> current;
    std::set<int> used;
    for (int target_id : candidates[0].ids) {
        current[0] = target_id;
        used.insert(target_id);
        dfs_assign(candidates, cfg, 1, current, used,
                   [&out](const std::map<int, int>& m) { out.push_back(m); });
        used.erase(target_id);
        current.erase(0);
    }
    return out;
}

GroundResult ground(const QueryGraph& gq, const SceneGraph3D& gs, EmbeddingProvider& embedder,
                    const MatcherConfig& cfg, bool edges_enabled,
                    const TargetScorer& target_scorer) {
    GroundResult result;
    result.candidates = semantic_filter(gq, gs, embedder, cfg);
    if (result.candidates[0].ids.empty()) throw std::runtime_error("ungroundable query");

    MatchContext ctx = build_match_context(gq, gs, embedder, cfg, edges_enabled);
    ctx.target_scorer = target_scorer;

    // best mapping per target fixation, in ascending target id order
    std::map<int, Mapping> best_by_target;
    for (const std::map<int, int>& assignment : enumerate_mappings(gq, result.candidates, ctx.cfg)) {
        Mapping m = score_mapping(assignment, ctx);
        const int target_id = assignment.at(0);
        auto it = best_by_target.find(target_id);
        if (it == best_by_target.end()) {
            best_by_target.emplace(target_id, std::move(m));
        } else if (m.total > it->second.total) {
            it->second = std::move(m);
        }
    }
    if (best_by_target.empty()) throw std::runtime_error("ungroundable query");

    for (auto& [id, m] : best_by_target) result.ranked.push_back(std::move(m));
    std::stable_sort(result.ranked.begin(), result.ranked.end(),
                     [](const Mapping& a, const Mapping& b) { return a.total > b.total; });
    return result;
}

TargetScorer make_vlm_target_scorer(ChatClient& chat) {
    return [&chat](const std::string& query_text, const ObjectInstance& obj) {
        std::ostringstream prompt;
        prompt << "Rate how well an object matches a description.\n";
        prompt << "Description: " << query_text << "\n";
        prompt << "Object label: " << obj.label << "\n";
        for (const std::string& c : obj.captions) prompt << "Object caption: " << c << "\n";
        prompt << "Respond with a single decimal number between 0 and 1.\n";
        const std::string response = chat.chat({{"user", prompt.str(), std::nullopt}});
        try {
            return std::clamp(std::stod(response), 0.0, 1.0);
        } catch (const std::exception&) {
            return 0.5;  // uninformative score on an unparseable reply
        }
    };
}

}  // namespace graphground
