#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "graphground/providers.hpp"
#include "graphground/scene.hpp"

namespace graphground {

/// Candidate scene objects for one query node after semantic filtering.
struct CandidateSet {
    int query_node_idx = 0;
    std::string matched_label;  // L_s; empty when the fallback path was used
    double label_cosine = 0.0;  // cos(e_q, embedding of L_s)
    bool fallback = false;      // top-k by node embedding instead of label match
    std::vector<int> ids;       // ascending object ids
};

/// Per-query-node candidate sets: the best-matching scene label wins (ties go
/// to the lexicographically smallest); below label_sim_threshold the set
/// falls back to the top_k_fallback nodes by node-embedding cosine.
/// Throws "empty scene graph" on a node-free scene.
std::vector<CandidateSet> semantic_filter(const QueryGraph& gq, const SceneGraph3D& gs,
                                          EmbeddingProvider& embedder, const MatcherConfig& cfg);

/// Optional replacement for the default target scorer (cosine of query text
/// vs node embedding); receives the target query text and the candidate.
using TargetScorer = std::function<double(const std::string&, const ObjectInstance&)>;

/// Precomputed embeddings and edge indexes so that scoring a mapping is pure
/// arithmetic. edges_enabled=false zeroes every edge similarity (the
/// "S-bar_e = 0 for all node pairs" ablation).
struct MatchContext {
    const QueryGraph* gq = nullptr;
    const SceneGraph3D* gs = nullptr;
    MatcherConfig cfg;
    bool edges_enabled = true;
    std::vector<Embedding> query_node_emb;                       // per query node text
    std::vector<Embedding> query_edge_emb;                       // per query edge predicate
    std::map<std::string, Embedding> predicate_emb;              // scene + antonym predicates
    std::map<std::pair<int, int>, std::vector<std::string>> scene_pairs;  // ordered pair -> predicates
    TargetScorer target_scorer;  // null = default S_t = S_n(q_0, m(q_0))
};

MatchContext build_match_context(const QueryGraph& gq, const SceneGraph3D& gs,
                                 EmbeddingProvider& embedder, const MatcherConfig& cfg,
                                 bool edges_enabled = true);

/// Similarity of one query edge under an assignment: max cosine01 between the
/// query predicate and any scene predicate on the mapped ordered pair, also
/// checking reverse scene edges through the antonym table. Unassigned
/// endpoint or no scene edge -> 0.
double edge_similarity(const QueryEdge& edge, const std::map<int, int>& assignment,
                       const MatchContext& ctx);

/// Scores an injective partial assignment per the mapping-score formula.
/// An unassigned target yields total = -infinity (target is mandatory).
Mapping score_mapping(const std::map<int, int>& assignment, const MatchContext& ctx);

/// All maximal mappings: the target is fixed to each of its candidates in
/// ascending id order; remaining nodes are assigned in index order from their
/// candidate sets (ascending id), and a landmark is skipped only when
/// allow_landmark_skip is set and every candidate is already used. With skip
/// disabled, an exhausted landmark prunes the branch.
std::vector<std::map<int, int>> enumerate_mappings(const QueryGraph& gq,
                                                   const std::vector<CandidateSet>& candidates,
                                                   const MatcherConfig& cfg);

struct GroundResult {
    /// Best mapping per target candidate, ranked by total descending, ties by
    /// lower target object id.
    std::vector<Mapping> ranked;
    std::vector<CandidateSet> candidates;
};

/// Full grounding: filter, enumerate, score, rank. Deterministic given the
/// provider. Throws "ungroundable query" when no mapping exists.
GroundResult ground(const QueryGraph& gq, const SceneGraph3D& gs, EmbeddingProvider& embedder,
                    const MatcherConfig& cfg, bool edges_enabled = true,
                    const TargetScorer& target_scorer = nullptr);

/// Target scorer backed by a chat model: asks for a bare decimal in [0,1]
/// rating how well the candidate matches the target term, clamped on parse.
TargetScorer make_vlm_target_scorer(ChatClient& chat);

}  // namespace graphground
