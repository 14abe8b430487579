#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "graphground/ingest.hpp"
#include "graphground/matcher.hpp"
#include "graphground/queryparse.hpp"
#include "graphground/reconstruct.hpp"
#include "graphground/scene.hpp"

namespace graphground {

struct SynthSpec {
    int n_objects = 8;             // total objects, duplicates included
    int n_duplicate_groups = 1;    // labels instantiated several times
    int duplicates_per_group = 3;  // k members per duplicate group
    double relation_density = 1.0;  // keep fraction of non-essential edges
    bool with_frames = false;       // also derive RGB-D style observations

    void validate() const;
};

struct SynthInstance {
    SceneGraph3D scene;  // exact boxes, points, and geometric edges
    std::vector<QueryRecord> queries;
    std::map<std::string, int> gt_ids;  // query_id -> ground-truth object id
    std::vector<FrameRecord> frames;    // with_frames only; depth_path unset
    std::vector<DepthImage> depths;     // parallel to frames
};

/// Deterministic desk-scale scene + query generator. Objects are
/// non-overlapping boxes in a 10x10x3 m room (+Z up); duplicate groups share
/// a label and exactly one member satisfies the query relation against a
/// unique-label landmark (re-checked exhaustively; the qualifying member is
/// chosen uniformly). Queries are tagged unique/multiple by label
/// multiplicity. Throws on an infeasible spec.
SynthInstance gen_synthetic(std::uint64_t seed, const SynthSpec& spec = {});

/// Association config tuned to the generator's point scale (400-point
/// objects, meters): eps 0.15, min_pts 4, min_points 30.
AssociationConfig synth_association_config();

/// Noise model for the denoise ablation: 10% uniform-in-room outlier points
/// per object (boxes recomputed, hence inflated), plus 3 ghost mini-objects
/// (20 points each) labeled after query targets and placed away from every
/// real object; edges are recomputed geometrically on the corrupted scene.
SceneGraph3D corrupt_scene(const SceneGraph3D& scene, const std::vector<std::string>& ghost_labels,
                           std::uint64_t seed);

/// Exhaustive reference matcher: scores every injective partial mapping over
/// all scene nodes with the target assigned, including every landmark-skip
/// subset. Ties resolve to the lower target id. Throws "instance too large
/// for oracle" when |V_s|^|V_q| exceeds 1e7.
Mapping brute_force_ground(const QueryGraph& gq, const SceneGraph3D& gs,
                           EmbeddingProvider& embedder, const MatcherConfig& cfg,
                           bool edges_enabled = true);

/// One grounded query as written to the results file.
struct ResultRecord {
    std::string query_id;
    int predicted_object_id = -1;
    Aabb predicted_aabb;
    double total = 0.0;
    double s_target = 0.0;
    double s_node = 0.0;
    double s_edge = 0.0;
    double completion = 0.0;
    std::string path = "graph";  // "graph" | "vlm"
    std::optional<double> runner_up_margin;  // empty with a single candidate
};

std::string results_to_jsonl(const std::vector<ResultRecord>& results);
std::vector<ResultRecord> results_from_jsonl(const std::string& text);

struct AccBucket {
    int n = 0;
    int hits10 = 0;
    int hits25 = 0;
    int hits50 = 0;

    double acc10() const { return n ? static_cast<double>(hits10) / n : 0.0; }
    double acc25() const { return n ? static_cast<double>(hits25) / n : 0.0; }
    double acc50() const { return n ? static_cast<double>(hits50) / n : 0.0; }
};

struct MetricsReport {
    AccBucket overall;
    std::map<std::string, AccBucket> by_split;  // unique / multiple
    std::map<std::string, AccBucket> by_path;   // graph / vlm
    int unevaluable = 0;                        // results lacking a gt box
};

/// Acc@{0.1,0.25,0.5} with inclusive thresholds, joined on query_id.
MetricsReport evaluate(const std::vector<ResultRecord>& results,
                       const std::vector<QueryRecord>& queries);

std::string metrics_to_json(const MetricsReport& report);
std::string metrics_table(const MetricsReport& report);
std::string metrics_csv(const MetricsReport& report);

}  // namespace graphground
