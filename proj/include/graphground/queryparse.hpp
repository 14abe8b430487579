#pragma once

#include <optional>
#include <string>
#include <vector>

#include "graphground/geometry.hpp"
#include "graphground/providers.hpp"
#include "graphground/scene.hpp"

namespace graphground {

/// Parses a referring expression through the chat client, which is prompted
/// to answer with JSON {target:{label,attributes}, landmarks:[...],
/// relations:[{src,rel,dst}]} (indices: 0 = target, then landmarks in order).
/// Malformed responses are retried twice with a JSON-only reinforcement;
/// throws "unparseable query response" after that, or on an empty target
/// label.
QueryGraph parse_query_llm(const std::string& query, ChatClient& chat);

/// Deterministic pattern-based fallback over a fixed preposition lexicon.
/// The first noun phrase is the target; each preposition links the phrase
/// before it to the phrase after it (left-to-right attachment); "between A
/// and B" expands to two "near" edges. Total: the worst case is a single-node
/// graph labeled with the whole query.
QueryGraph parse_query_rules(const std::string& query);

/// Structural defect codes: empty_target, dangling_edge_index,
/// extra_relation_suspected (more edges than nodes-1),
/// duplicate_node_labels_without_relations. Empty result = pass.
std::vector<std::string> validate_query_graph(const QueryGraph& gq);

/// One benchmark query: ScanRefer-style JSONL record. gt fields are optional
/// and consumed only by the eval harness.
struct QueryRecord {
    std::string query_id;
    std::string scene_id;
    std::string text;
    std::optional<Aabb> gt_aabb;
    std::optional<std::string> split;  // "unique" | "multiple"
};

std::vector<QueryRecord> queries_from_jsonl(const std::string& text);
std::string queries_to_jsonl(const std::vector<QueryRecord>& queries);
std::vector<QueryRecord> load_queries(const std::string& path);
void save_queries(const std::vector<QueryRecord>& queries, const std::string& path);

}  // namespace graphground
