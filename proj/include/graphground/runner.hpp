#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "graphground/evalharness.hpp"
#include "graphground/gate.hpp"
#include "graphground/matcher.hpp"
#include "graphground/providers.hpp"
#include "graphground/queryparse.hpp"
#include "graphground/reconstruct.hpp"
#include "graphground/relations.hpp"
#include "graphground/scene.hpp"

namespace graphground {

/// Ablation rows: full pipeline; graph matching only (no VLM at any stage);
/// target-similarity ranking with a forced VLM tie-break; edge similarities
/// zeroed; denoise pass skipped.
enum class GroundMode { full, graph_only, vlm_only, no_edges, no_denoise };

const char* to_string(GroundMode m);
GroundMode ground_mode_from_string(const std::string& s);

enum class QueryParser { rules, llm };

struct RunnerConfig {
    MatcherConfig matcher;
    AssociationConfig association;  // ground-time denoise parameters
    GateConfig gate;
    GroundMode mode = GroundMode::full;
    QueryParser parser = QueryParser::rules;
    int jobs = 1;
    std::string dump_dir;  // when set, fired gates dump a render + transcript
};

struct GroundOutcome {
    ResultRecord record;
    GateDecision gate;
    bool tie_break_attempted = false;
};

/// Grounds one query on an already-denoised scene. chat may be null: the
/// gate then resolves to the graph top-1 (graph_only never consults it).
/// Throws on unparseable/ungroundable queries.
GroundOutcome ground_one(const std::string& query_id, const std::string& text,
                         const SceneGraph3D& scene, EmbeddingProvider& embedder,
                         ChatClient* chat, const RunnerConfig& cfg);

struct RunReport {
    std::vector<ResultRecord> results;  // successes, ordered by query_id
    std::vector<std::pair<std::string, std::string>> errors;  // (query_id, message)
    int gates_fired = 0;
    int vlm_picks = 0;
};

/// Denoises once (unless mode == no_denoise), then grounds every query on a
/// jobs-wide worker pool. Output ordering is by query_id regardless of
/// completion order, so runs are byte-deterministic for deterministic
/// providers.
RunReport ground_all(const std::vector<QueryRecord>& queries, const SceneGraph3D& scene,
                     EmbeddingProvider& embedder, ChatClient* chat, const RunnerConfig& cfg);

/// Optional JSON config file: any subset of the sections
/// {matcher, association, gate, geometric, embed_provider, chat_provider,
/// frame_stride, min_confidence} overrides the defaults; unknown keys are
/// config errors.
struct MasterConfig {
    MatcherConfig matcher;
    AssociationConfig association;
    GateConfig gate;
    GeometricConfig geometric;
    std::optional<ProviderConfig> embed_provider;
    std::optional<ProviderConfig> chat_provider;
    int frame_stride = 1;
    double min_confidence = 0.2;
};

MasterConfig master_config_from_json(const std::string& text);
MasterConfig load_master_config(const std::string& path);

}  // namespace graphground
