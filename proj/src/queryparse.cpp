#include "graphground/queryparse.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "graphground/ingest.hpp"

namespace graphground {

using json = nlohmann::json;

namespace {

const char* kParsePromptHeader =
    "Parse the following referring expression into a JSON object with this exact shape:\n"
    "{\"target\":{\"label\":str,\"attributes\":[str]},"
    "\"landmarks\":[{\"label\":str,\"attributes\":[str]}],"
    "\"relations\":[{\"src\":int,\"rel\":str,\"dst\":int}]}\n"
    "Node indices: 0 is the target, landmarks are numbered from 1 in order.\n"
    "Respond with JSON only.\n"
    "Expression: ";

QueryNode node_from_json(const json& j) {
    QueryNode node;
    node.label = normalize_text(j.at("label").get<std::string>());
    if (j.contains("attributes")) {
        for (const json& a : j["attributes"]) {
            node.attributes.push_back(normalize_text(a.get<std::string>()));
        }
    }
    return node;
}

std::optional<QueryGraph> try_parse_response(const std::string& response,
                                             const std::string& raw_query) {
    json doc;
    // tolerate surrounding prose by slicing the outermost braces
    const std::size_t lo = response.find('{');
    const std::size_t hi = response.rfind('}');
    if (lo == std::string::npos || hi == std::string::npos || hi < lo) return std::nullopt;
    try {
        doc = json::parse(response.substr(lo, hi - lo + 1));
    } catch (const json::exception&) {
        return std::nullopt;
    }
    try {
        QueryGraph gq;
        gq.raw_query = raw_query;
        gq.nodes.push_back(node_from_json(doc.at("target")));
        if (doc.contains("landmarks")) {
            for (const json& l : doc["landmarks"]) gq.nodes.push_back(node_from_json(l));
        }
        if (doc.contains("relations")) {
            for (const json& r : doc["relations"]) {
                QueryEdge e;
                e.src_idx = r.at("src").get<int>();
                e.dst_idx = r.at("dst").get<int>();
                e.predicate = normalize_text(r.at("rel").get<std::string>());
                if (e.predicate.empty()) return std::nullopt;
                gq.edges.push_back(std::move(e));
            }
        }
        return gq;
    } catch (const json::exception&) {
        return std::nullopt;
    }
}

}  // namespace

QueryGraph parse_query_llm(const std::string& query, ChatClient& chat) {
    if (normalize_text(query).empty()) throw std::invalid_argument("empty query");
    std::string prompt = std::string(kParsePromptHeader) + query;
    for (int attempt = 0; attempt <= 2; ++attempt) {
        const std::string response = chat.chat({{"user", prompt, std::nullopt}});
        if (auto gq = try_parse_response(response, query)) {
            if (gq->nodes.front().label.empty()) {
                throw std::runtime_error("query parse: empty target label");
            }
            return *gq;
        }
        prompt = std::string(kParsePromptHeader) + query +
                 "\nYour previous answer was not valid JSON. Respond with JSON only.";
    }
    throw std::runtime_error("unparseable query response");
}

namespace {

// longest-match-first preposition lexicon for the rule parser
const std::vector<std::string>& preposition_lexicon() {
    static const std::vector<std::string> lex = {
        "in front of", "on top of", "left of", "right of", "next to", "between",
        "above",       "below",     "behind", "inside",   "under",   "near",
        "on",
    };
    return lex;
}

bool is_noise_word(const std::string& w) {
    return w == "the" || w == "a" || w == "an" || w == "that" || w == "which" ||
           w == "is" || w == "are" || w == "of";
}

std::string clean_phrase(const std::vector<std::string>& words, std::size_t lo, std::size_t hi) {
    std::string out;
    for (std::size_t i = lo; i < hi; ++i) {
        if (is_noise_word(words[i])) continue;
        if (!out.empty()) out += ' ';
        out += words[i];
    }
    return out;
}

}  // namespace

QueryGraph parse_query_rules(const std::string& query) {
    QueryGraph gq;
    gq.raw_query = query;
    std::string text = normalize_text(query);
    std::erase_if(text, [](char c) { return c == '.' || c == ',' || c == '!' || c == '?'; });

    std::vector<std::string> words;
    {
        std::istringstream in(text);
        std::string w;
        while (in >> w) words.push_back(w);
    }

    // split the word stream on lexicon prepositions (longest match first)
    std::vector<std::string> phrases;
    std::vector<std::string> predicates;
    std::size_t phrase_start = 0;
    for (std::size_t i = 0; i < words.size();) {
        std::size_t matched = 0;
        std::string matched_prep;
        for (const std::string& prep : preposition_lexicon()) {
            std::vector<std::string> pw;
            std::istringstream pin(prep);
            std::string w;
            while (pin >> w) pw.push_back(w);
            if (i + pw.size() > words.size()) continue;
            if (std::equal(pw.begin(), pw.end(), words.begin() + static_cast<long>(i))) {
                matched = pw.size();
                matched_prep = prep;
                break;  // lexicon is ordered longest-first
            }
        }
        if (matched > 0 && i > phrase_start) {  // a preposition needs a left phrase
            phrases.push_back(clean_phrase(words, phrase_start, i));
            predicates.push_back(matched_prep);
            i += matched;
            phrase_start = i;
        } else {
            ++i;
        }
    }
    phrases.push_back(clean_phrase(words, phrase_start, words.size()));

    if (phrases.front().empty() || predicates.empty()) {
        QueryNode target;
        target.label = phrases.front().empty() ? normalize_text(query) : phrases.front();
        gq.nodes.push_back(std::move(target));
        return gq;
    }

    for (std::size_t i = 0; i < phrases.size(); ++i) {
        // a trailing empty phrase can happen ("the chair near"): drop its edge
        if (phrases[i].empty()) break;
        if (i == 0) {
            QueryNode target;
            target.label = phrases[0];
            gq.nodes.push_back(std::move(target));
            continue;
        }
        const std::string& predicate = predicates[i - 1];
        const int src = static_cast<int>(gq.nodes.size()) - 1;
        if (predicate == "between") {
            // "between A and B" -> src near A, src near B
            const std::string& phrase = phrases[i];
            const std::size_t pos = phrase.find(" and ");
            std::vector<std::string> parts;
            if (pos == std::string::npos) {
                parts.push_back(phrase);
            } else {
                parts.push_back(phrase.substr(0, pos));
                parts.push_back(phrase.substr(pos + 5));
            }
            for (const std::string& part : parts) {
                if (part.empty()) continue;
                QueryNode lm;
                lm.label = part;
                gq.nodes.push_back(std::move(lm));
                QueryEdge e;
                e.src_idx = src;
                e.dst_idx = static_cast<int>(gq.nodes.size()) - 1;
                e.predicate = "near";
                gq.edges.push_back(std::move(e));
            }
        } else {
            QueryNode lm;
            lm.label = phrases[i];
            gq.nodes.push_back(std::move(lm));
            QueryEdge e;
            e.src_idx = src;
            e.dst_idx = static_cast<int>(gq.nodes.size()) - 1;
            e.predicate = predicate;
            gq.edges.push_back(std::move(e));
        }
    }
    return gq;
}

std::vector<std::string> validate_query_graph(const QueryGraph& gq) {
    std::vector<std::string> defects;
    if (gq.nodes.empty() || gq.nodes.front().label.empty()) {
        defects.push_back("empty_target");
    }
    const int n = static_cast<int>(gq.nodes.size());
    bool dangling = false;
    for (const QueryEdge& e : gq.edges) {
        if (e.src_idx < 0 || e.src_idx >= n || e.dst_idx < 0 || e.dst_idx >= n) dangling = true;
    }
    if (dangling) defects.push_back("dangling_edge_index");
    if (n >= 1 && static_cast<int>(gq.edges.size()) > n - 1) {
        defects.push_back("extra_relation_suspected");
    }
    std::vector<bool> has_edge(gq.nodes.size(), false);
    for (const QueryEdge& e : gq.edges) {
        if (e.src_idx >= 0 && e.src_idx < n) has_edge[static_cast<std::size_t>(e.src_idx)] = true;
        if (e.dst_idx >= 0 && e.dst_idx < n) has_edge[static_cast<std::size_t>(e.dst_idx)] = true;
    }
    bool duplicate_unrelated = false;
    for (int i = 0; i < n && !duplicate_unrelated; ++i) {
        for (int j = i + 1; j < n; ++j) {
            if (gq.nodes[static_cast<std::size_t>(i)].label ==
                    gq.nodes[static_cast<std::size_t>(j)].label &&
                (!has_edge[static_cast<std::size_t>(i)] || !has_edge[static_cast<std::size_t>(j)])) {
                duplicate_unrelated = true;
                break;
            }
        }
    }
    if (duplicate_unrelated) defects.push_back("duplicate_node_labels_without_relations");
    return defects;
}

namespace {

json aabb_to_json(const Aabb& box) {
    return {{"min", {box.min.x(), box.min.y(), box.min.z()}},
            {"max", {box.max.x(), box.max.y(), box.max.z()}}};
}

Aabb aabb_from_json(const json& j) {
    Aabb box;
    for (int i = 0; i < 3; ++i) {
        box.min[i] = j.at("min").at(static_cast<std::size_t>(i)).get<double>();
        box.max[i] = j.at("max").at(static_cast<std::size_t>(i)).get<double>();
    }
    return box;
}

}  // namespace

std::vector<QueryRecord> queries_from_jsonl(const std::string& text) {
    std::vector<QueryRecord> out;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw std::runtime_error("query file: invalid JSON on line " +
                                     std::to_string(line_no) + ": " + e.what());
        }
        QueryRecord q;
        q.query_id = j.at("query_id").get<std::string>();
        q.scene_id = j.at("scene_id").get<std::string>();
        q.text = j.at("text").get<std::string>();
        if (j.contains("gt_aabb")) q.gt_aabb = aabb_from_json(j["gt_aabb"]);
        if (j.contains("split")) {
            q.split = j["split"].get<std::string>();
            if (*q.split != "unique" && *q.split != "multiple") {
                throw std::runtime_error("query file: split must be unique|multiple on line " +
                                         std::to_string(line_no));
            }
        }
        out.push_back(std::move(q));
    }
    return out;
}

std::string queries_to_jsonl(const std::vector<QueryRecord>& queries) {
    std::string out;
    for (const QueryRecord& q : queries) {
        json j{{"query_id", q.query_id}, {"scene_id", q.scene_id}, {"text", q.text}};
        if (q.gt_aabb) j["gt_aabb"] = aabb_to_json(*q.gt_aabb);
        if (q.split) j["split"] = *q.split;
        out += j.dump();
        out += '\n';
    }
    return out;
}

std::vector<QueryRecord> load_queries(const std::string& path) {
    return queries_from_jsonl(read_text_file(path));
}

void save_queries(const std::vector<QueryRecord>& queries, const std::string& path) {
    write_text_file(path, queries_to_jsonl(queries));
}

}  // namespace graphground
