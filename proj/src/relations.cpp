#include "graphground/relations.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include <json.hpp>

namespace graphground {

using json = nlohmann::json;

namespace {

Eigen::Vector2d mask_centroid(const Detection& det, int width, int height) {
    const std::vector<bool> mask = decode_rle(det.rle, width, height);
    double su = 0, sv = 0;
    long n = 0;
    for (int v = 0; v < height; ++v) {
        for (int u = 0; u < width; ++u) {
            if (!mask[static_cast<std::size_t>(v) * width + u]) continue;
            su += u;
            sv += v;
            ++n;
        }
    }
    if (n == 0) return {width / 2.0, height / 2.0};
    return {su / n, sv / n};
}

}  // namespace

MarkerPrompt build_marker_prompt(const FrameRecord& frame) {
    if (frame.detections.empty()) {
        throw std::invalid_argument("build_marker_prompt: frame has no detections");
    }
    MarkerPrompt prompt;
    std::ostringstream text;
    text << "The image shows a scene where each object is annotated with a numeric marker.\n";
    text << "Objects: ";
    bool first = true;
    for (const Detection& d : frame.detections) {
        if (!first) text << ", ";
        first = false;
        text << d.label << "[" << d.marker << "]";
        prompt.annotations.emplace_back(d.marker, mask_centroid(d, frame.width, frame.height));
    }
    text << ".\n";
    text << "Describe the spatial relationships between the annotated objects.\n";
    text << "Respond with one relation per line using exactly this form:\n";
    text << "label[marker] relation label[marker]\n";
    text << "For example: cup[1] is on top of table[3]\n";
    text << "Use only the markers listed above. Do not add any other text.\n";
    prompt.text = text.str();
    return prompt;
}

namespace {

struct Mention {
    std::size_t bracket = 0;  // index of '['
    std::size_t end = 0;      // index one past ']'
    int marker = 0;
};

std::vector<Mention> find_mentions(const std::string& line) {
    std::vector<Mention> out;
    for (std::size_t i = 0; i < line.size(); ++i) {
        if (line[i] != '[') continue;
        std::size_t j = i + 1;
        while (j < line.size() && std::isdigit(static_cast<unsigned char>(line[j]))) ++j;
        if (j == i + 1 || j - i - 1 > 9 || j >= line.size() || line[j] != ']') continue;
        if (i == 0 || !std::isalnum(static_cast<unsigned char>(line[i - 1]))) continue;
        Mention m;
        m.bracket = i;
        m.end = j + 1;
        m.marker = std::stoi(line.substr(i + 1, j - i - 1));
        out.push_back(m);
    }
    return out;
}

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::vector<std::string> split_words(const std::string& s) {
    std::vector<std::string> words;
    std::istringstream in(s);
    std::string w;
    while (in >> w) words.push_back(w);
    return words;
}

bool is_copula(const std::string& w) { return w == "is" || w == "are"; }
bool is_article(const std::string& w) { return w == "the" || w == "a" || w == "an"; }

/// Extracts the predicate from the text between the two mentions: removes the
/// destination label words (known from the frame when the marker is bound),
/// then strips copulas and articles at the boundaries.
std::string extract_predicate(const std::string& raw_between, const std::string& dst_label) {
    std::string between = normalize_text(raw_between);
    const std::string label = normalize_text(dst_label);
    if (!label.empty() && between == label) {
        between.clear();
    } else if (!label.empty() && ends_with(between, " " + label)) {
        between.resize(between.size() - label.size() - 1);
    } else {
        // unknown or unexpected label text: the last word belongs to the
        // destination mention by grammar
        const std::size_t pos = between.rfind(' ');
        if (pos == std::string::npos) return "";
        between.resize(pos);
    }
    std::vector<std::string> words = split_words(between);
    std::size_t lo = 0, hi = words.size();
    while (lo < hi && (is_copula(words[lo]) || is_article(words[lo]))) ++lo;
    while (hi > lo && is_article(words[hi - 1])) --hi;
    std::string predicate;
    for (std::size_t i = lo; i < hi; ++i) {
        if (!predicate.empty()) predicate += ' ';
        predicate += words[i];
    }
    return predicate;
}

}  // namespace

std::vector<RelationTriple> parse_relations(const std::string& response,
                                            const FrameRecord& frame, ParseStats* stats) {
    ParseStats local;
    std::map<int, std::string> frame_labels;
    for (const Detection& d : frame.detections) frame_labels[d.marker] = d.label;

    std::vector<RelationTriple> triples;
    std::istringstream in(response);
    std::string line;
    while (std::getline(in, line)) {
        if (normalize_text(line).empty()) continue;
        ++local.lines;
        const std::vector<Mention> mentions = find_mentions(line);
        if (mentions.size() != 2) {
            ++local.parse_failures;
            continue;
        }
        const Mention& src = mentions[0];
        const Mention& dst = mentions[1];
        auto dst_label = frame_labels.find(dst.marker);
        const std::string predicate = extract_predicate(
            line.substr(src.end, dst.bracket - src.end),
            dst_label != frame_labels.end() ? dst_label->second : "");
        if (predicate.empty() || src.marker == dst.marker) {
            ++local.parse_failures;
            continue;
        }
        if (!frame_labels.count(src.marker) || dst_label == frame_labels.end()) {
            ++local.dangling_markers;
            continue;
        }
        RelationTriple t;
        t.src_marker = src.marker;
        t.dst_marker = dst.marker;
        t.predicate = predicate;
        t.frame_id = frame.frame_id;
        triples.push_back(std::move(t));
    }
    if (stats) {
        stats->lines += local.lines;
        stats->parse_failures += local.parse_failures;
        stats->dangling_markers += local.dangling_markers;
    }
    return triples;
}

std::vector<RelationEdge> lift_to_3d(const std::vector<RelationTriple>& triples,
                                     const MarkerBinding& binding, LiftStats* stats) {
    std::vector<RelationEdge> edges;
    for (const RelationTriple& t : triples) {
        auto src = binding.marker_to_object.find(t.src_marker);
        auto dst = binding.marker_to_object.find(t.dst_marker);
        if (src == binding.marker_to_object.end() || dst == binding.marker_to_object.end()) {
            if (stats) ++stats->dropped_unbound;
            continue;
        }
        if (src->second == dst->second) {  // detections merged into one object
            if (stats) ++stats->dropped_self;
            continue;
        }
        RelationEdge e;
        e.src_id = src->second;
        e.dst_id = dst->second;
        e.predicate = t.predicate;
        e.count = 1;
        e.provenance = Provenance::vlm;
        edges.push_back(std::move(e));
    }
    return edges;
}

const std::map<std::string, std::string>& predicate_antonyms() {
    static const std::map<std::string, std::string> table = {
        {"left of", "right of"}, {"right of", "left of"},
        {"above", "below"},      {"below", "above"},
        {"in front of", "behind"}, {"behind", "in front of"},
        {"near", "near"},
    };
    return table;
}

std::vector<RelationEdge> aggregate_edges(const std::vector<RelationEdge>& edges) {
    // (src, dst, predicate) -> (count, any vlm contributor)
    std::map<std::tuple<int, int, std::string>, std::pair<int, bool>> groups;
    for (const RelationEdge& e : edges) {
        auto& g = groups[{e.src_id, e.dst_id, e.predicate}];
        g.first += e.count;
        g.second = g.second || e.provenance == Provenance::vlm;
    }
    const auto& antonyms = predicate_antonyms();
    std::vector<RelationEdge> out;
    for (const auto& [key, val] : groups) {
        const auto& [src, dst, predicate] = key;
        auto ant = antonyms.find(predicate);
        if (ant != antonyms.end() && ant->second != predicate) {
            auto rival = groups.find({src, dst, ant->second});
            if (rival != groups.end() && rival->second.first > val.first) {
                continue;  // outvoted by the contradicting predicate
            }
        }
        RelationEdge e;
        e.src_id = src;
        e.dst_id = dst;
        e.predicate = predicate;
        e.count = val.first;
        e.provenance = val.second ? Provenance::vlm : Provenance::geometric;
        out.push_back(std::move(e));
    }
    return out;  // map iteration order == canonical (src, dst, predicate) order
}

namespace {

bool stacked_touching(const ObjectInstance& top, const ObjectInstance& bottom, double touch_eps) {
    if (top.aabb.min.z() - bottom.aabb.max.z() > touch_eps) return false;
    const bool x_overlap =
        top.aabb.min.x() <= bottom.aabb.max.x() && bottom.aabb.min.x() <= top.aabb.max.x();
    const bool y_overlap =
        top.aabb.min.y() <= bottom.aabb.max.y() && bottom.aabb.min.y() <= top.aabb.max.y();
    return x_overlap && y_overlap;
}

}  // namespace

std::vector<RelationEdge> geometric_relations(const SceneGraph3D& g, const GeometricConfig& cfg) {
    std::set<std::pair<int, int>> vlm_pairs;
    for (const RelationEdge& e : g.edges) {
        if (e.provenance == Provenance::vlm) vlm_pairs.emplace(e.src_id, e.dst_id);
    }
    std::vector<RelationEdge> out;
    auto emit = [&](int src, int dst, const char* predicate) {
        if (vlm_pairs.count({src, dst})) return;  // never shadow a vlm edge
        RelationEdge e;
        e.src_id = src;
        e.dst_id = dst;
        e.predicate = predicate;
        e.count = 1;
        e.provenance = Provenance::geometric;
        out.push_back(std::move(e));
    };
    for (auto a = g.nodes.begin(); a != g.nodes.end(); ++a) {
        for (auto b = std::next(a); b != g.nodes.end(); ++b) {
            const ObjectInstance& oa = a->second;
            const ObjectInstance& ob = b->second;
            const Vec3 d = oa.centroid() - ob.centroid();
            const double dist = d.norm();
            if (dist >= cfg.max_pair_distance) continue;
            const Vec3 mag = d.cwiseAbs();
            if (mag.x() >= mag.y() && mag.x() >= mag.z() && mag.x() >= cfg.axis_margin) {
                if (d.x() < 0) {
                    emit(oa.id, ob.id, "left of");
                    emit(ob.id, oa.id, "right of");
                } else {
                    emit(oa.id, ob.id, "right of");
                    emit(ob.id, oa.id, "left of");
                }
            } else if (mag.z() >= mag.x() && mag.z() >= mag.y() && mag.z() >= cfg.axis_margin) {
                const ObjectInstance& top = d.z() > 0 ? oa : ob;
                const ObjectInstance& bottom = d.z() > 0 ? ob : oa;
                emit(top.id, bottom.id, "above");
                emit(bottom.id, top.id, "below");
                if (stacked_touching(top, bottom, cfg.touch_eps)) {
                    emit(top.id, bottom.id, "on top of");
                }
            }
            // a y-dominant offset has no world-frame predicate (front/behind
            // would need a viewer frame the scene graph does not store)
            if (dist < cfg.near_distance) {
                emit(oa.id, ob.id, "near");
                emit(ob.id, oa.id, "near");
            }
        }
    }
    return out;
}

std::vector<RelationEdge> extract_relations(
    const std::vector<FrameRecord>& frames,
    const std::map<std::pair<int, int>, int>& bindings, ChatClient& chat, int frame_stride,
    RelateStats* stats) {
    if (frame_stride < 1) throw std::invalid_argument("frame_stride must be >= 1");
    std::vector<const FrameRecord*> ordered;
    ordered.reserve(frames.size());
    for (const FrameRecord& f : frames) ordered.push_back(&f);
    std::sort(ordered.begin(), ordered.end(),
              [](const FrameRecord* a, const FrameRecord* b) { return a->frame_id < b->frame_id; });

    std::vector<RelationEdge> all;
    for (std::size_t i = 0; i < ordered.size(); ++i) {
        if (i % static_cast<std::size_t>(frame_stride) != 0) continue;
        const FrameRecord& frame = *ordered[i];
        MarkerBinding binding;
        binding.frame_id = frame.frame_id;
        for (const Detection& d : frame.detections) {
            auto it = bindings.find({frame.frame_id, d.marker});
            if (it != bindings.end()) binding.marker_to_object[d.marker] = it->second;
        }
        if (binding.marker_to_object.size() < 2) continue;  // no relation possible
        const MarkerPrompt prompt = build_marker_prompt(frame);
        if (stats) ++stats->frames_prompted;
        const std::string response = chat.chat({{"user", prompt.text, std::nullopt}});
        const std::vector<RelationTriple> triples =
            parse_relations(response, frame, stats ? &stats->parse : nullptr);
        if (stats) stats->triples += static_cast<int>(triples.size());
        const std::vector<RelationEdge> lifted =
            lift_to_3d(triples, binding, stats ? &stats->lift : nullptr);
        all.insert(all.end(), lifted.begin(), lifted.end());
    }
    return aggregate_edges(all);
}

std::string edges_to_jsonl(const std::vector<RelationEdge>& edges) {
    std::string out;
    for (const RelationEdge& e : edges) {
        json j{{"src", e.src_id},
               {"dst", e.dst_id},
               {"predicate", e.predicate},
               {"count", e.count},
               {"provenance", to_string(e.provenance)}};
        out += j.dump();
        out += '\n';
    }
    return out;
}

std::vector<RelationEdge> edges_from_jsonl(const std::string& text) {
    std::vector<RelationEdge> edges;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const json j = json::parse(line);
        RelationEdge e;
        e.src_id = j.at("src").get<int>();
        e.dst_id = j.at("dst").get<int>();
        e.predicate = j.at("predicate").get<std::string>();
        e.count = j.value("count", 1);
        e.provenance = provenance_from_string(j.at("provenance").get<std::string>());
        edges.push_back(std::move(e));
    }
    return edges;
}

}  // namespace graphground
