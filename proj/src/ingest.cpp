#include "graphground/ingest.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <png.h>
#include <json.hpp>

namespace graphground {

using json = nlohmann::json;
namespace fs = std::filesystem;

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write file: " + path);
    out << content;
    if (!out) throw std::runtime_error("write failed: " + path);
}

void FrameRecord::validate() const {
    if (!(fx > 0) || !(fy > 0)) throw std::runtime_error("frame intrinsics: fx and fy must be > 0");
    if (width <= 0 || height <= 0) throw std::runtime_error("frame dimensions must be positive");
    const Eigen::Matrix3d R = pose.block<3, 3>(0, 0);
    if (((R * R.transpose()) - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-4) {
        throw std::runtime_error("frame pose: rotation block is not orthonormal");
    }
    std::vector<int> markers;
    for (const Detection& d : detections) {
        if (d.marker < 1) throw std::runtime_error("detection marker must be a positive integer");
        if (d.label.empty()) throw std::runtime_error("detection label must be non-empty");
        if (d.confidence < 0.0 || d.confidence > 1.0) {
            throw std::runtime_error("detection confidence must be in [0,1]");
        }
        markers.push_back(d.marker);
    }
    std::sort(markers.begin(), markers.end());
    if (std::adjacent_find(markers.begin(), markers.end()) != markers.end()) {
        throw std::runtime_error("detection markers must be unique within a frame");
    }
}

std::vector<bool> decode_rle(const std::vector<std::int64_t>& rle, int width, int height) {
    const std::int64_t total = static_cast<std::int64_t>(width) * height;
    std::vector<bool> mask(static_cast<std::size_t>(total), false);
    std::int64_t pos = 0;
    bool value = false;  // runs start with background
    for (std::int64_t run : rle) {
        if (run < 0) throw std::runtime_error("rle runs must be non-negative");
        if (pos + run > total) throw std::runtime_error("rle length mismatch");
        if (value) {
            std::fill(mask.begin() + pos, mask.begin() + pos + run, true);
        }
        pos += run;
        value = !value;
    }
    if (pos != total) throw std::runtime_error("rle length mismatch");
    return mask;
}

std::vector<std::int64_t> encode_rle(const std::vector<bool>& mask) {
    std::vector<std::int64_t> rle;
    bool value = false;
    std::int64_t run = 0;
    for (bool bit : mask) {
        if (bit == value) {
            ++run;
        } else {
            rle.push_back(run);
            value = bit;
            run = 1;
        }
    }
    rle.push_back(run);
    return rle;
}

namespace {

int pnm_next_int(std::istream& in) {
    // skips whitespace and '#' comments per the netpbm grammar
    for (;;) {
        int c = in.peek();
        if (c == '#') {
            std::string line;
            std::getline(in, line);
        } else if (std::isspace(c)) {
            in.get();
        } else {
            break;
        }
    }
    int value = 0;
    if (!(in >> value)) throw std::runtime_error("malformed PGM header");
    return value;
}

DepthImage load_depth_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("depth not found: " + path);
    std::string magic(2, '\0');
    in.read(magic.data(), 2);
    if (magic != "P5") throw std::runtime_error("unsupported depth format (expected P5): " + path);
    DepthImage img;
    img.width = pnm_next_int(in);
    img.height = pnm_next_int(in);
    const int maxval = pnm_next_int(in);
    if (maxval != 65535) {
        throw std::runtime_error("unsupported PGM maxval (expected 65535): " + path);
    }
    in.get();  // single whitespace separating header and raster
    const std::size_t n = static_cast<std::size_t>(img.width) * img.height;
    std::vector<unsigned char> raw(n * 2);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<std::size_t>(in.gcount()) != raw.size()) {
        throw std::runtime_error("truncated PGM raster: " + path);
    }
    img.millimeters.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        // PGM 16-bit samples are big-endian
        img.millimeters[i] = static_cast<std::uint16_t>((raw[2 * i] << 8) | raw[2 * i + 1]);
    }
    return img;
}

struct PngReadCtx {
    png_structp png = nullptr;
    png_infop info = nullptr;
    FILE* fp = nullptr;
    ~PngReadCtx() {
        if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
        if (fp) std::fclose(fp);
    }
};

DepthImage load_depth_png(const std::string& path) {
    PngReadCtx ctx;
    ctx.fp = std::fopen(path.c_str(), "rb");
    if (!ctx.fp) throw std::runtime_error("depth not found: " + path);
    ctx.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!ctx.png) throw std::runtime_error("png init failed");
    ctx.info = png_create_info_struct(ctx.png);
    if (!ctx.info) throw std::runtime_error("png init failed");
    if (setjmp(png_jmpbuf(ctx.png))) {
        throw std::runtime_error("malformed PNG depth: " + path);
    }
    png_init_io(ctx.png, ctx.fp);
    png_read_info(ctx.png, ctx.info);
    if (png_get_color_type(ctx.png, ctx.info) != PNG_COLOR_TYPE_GRAY ||
        png_get_bit_depth(ctx.png, ctx.info) != 16) {
        throw std::runtime_error("unsupported depth format (expected 16-bit gray PNG): " + path);
    }
    DepthImage img;
    img.width = static_cast<int>(png_get_image_width(ctx.png, ctx.info));
    img.height = static_cast<int>(png_get_image_height(ctx.png, ctx.info));
    img.millimeters.resize(static_cast<std::size_t>(img.width) * img.height);
    std::vector<unsigned char> row(static_cast<std::size_t>(img.width) * 2);
    for (int v = 0; v < img.height; ++v) {
        png_read_row(ctx.png, row.data(), nullptr);
        for (int u = 0; u < img.width; ++u) {
            // PNG 16-bit samples are big-endian
            img.millimeters[static_cast<std::size_t>(v) * img.width + u] =
                static_cast<std::uint16_t>((row[2 * u] << 8) | row[2 * u + 1]);
        }
    }
    return img;
}

struct PngWriteCtx {
    png_structp png = nullptr;
    png_infop info = nullptr;
    FILE* fp = nullptr;
    ~PngWriteCtx() {
        if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
        if (fp) std::fclose(fp);
    }
};

}  // namespace

DepthImage load_depth(const std::string& path) {
    std::ifstream probe(path, std::ios::binary);
    if (!probe) throw std::runtime_error("depth not found: " + path);
    unsigned char magic[2] = {0, 0};
    probe.read(reinterpret_cast<char*>(magic), 2);
    probe.close();
    if (magic[0] == 'P' && magic[1] == '5') return load_depth_pgm(path);
    if (magic[0] == 0x89 && magic[1] == 'P') return load_depth_png(path);
    throw std::runtime_error("unsupported depth format: " + path);
}

void save_depth_pgm(const DepthImage& depth, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write file: " + path);
    out << "P5\n" << depth.width << " " << depth.height << "\n65535\n";
    std::vector<unsigned char> raw(depth.millimeters.size() * 2);
    for (std::size_t i = 0; i < depth.millimeters.size(); ++i) {
        raw[2 * i] = static_cast<unsigned char>(depth.millimeters[i] >> 8);
        raw[2 * i + 1] = static_cast<unsigned char>(depth.millimeters[i] & 0xff);
    }
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!out) throw std::runtime_error("write failed: " + path);
}

void save_depth_png(const DepthImage& depth, const std::string& path) {
    PngWriteCtx ctx;
    ctx.fp = std::fopen(path.c_str(), "wb");
    if (!ctx.fp) throw std::runtime_error("cannot write file: " + path);
    ctx.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!ctx.png) throw std::runtime_error("png init failed");
    ctx.info = png_create_info_struct(ctx.png);
    if (!ctx.info) throw std::runtime_error("png init failed");
    if (setjmp(png_jmpbuf(ctx.png))) {
        throw std::runtime_error("png write failed: " + path);
    }
    png_init_io(ctx.png, ctx.fp);
    png_set_IHDR(ctx.png, ctx.info, static_cast<png_uint_32>(depth.width),
                 static_cast<png_uint_32>(depth.height), 16, PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(ctx.png, ctx.info);
    std::vector<unsigned char> row(static_cast<std::size_t>(depth.width) * 2);
    for (int v = 0; v < depth.height; ++v) {
        for (int u = 0; u < depth.width; ++u) {
            const std::uint16_t mm = depth.at(u, v);
            row[2 * u] = static_cast<unsigned char>(mm >> 8);
            row[2 * u + 1] = static_cast<unsigned char>(mm & 0xff);
        }
        png_write_row(ctx.png, row.data());
    }
    png_write_end(ctx.png, ctx.info);
}

namespace {

double require_number(const json& obj, const char* field, const std::string& context) {
    if (!obj.contains(field) || !obj[field].is_number()) {
        throw std::runtime_error("frame schema: missing numeric field '" + std::string(field) +
                                 "' in " + context);
    }
    return obj[field].get<double>();
}

}  // namespace

FrameRecord load_frame(const std::string& path, double min_confidence) {
    json doc;
    try {
        doc = json::parse(read_text_file(path));
    } catch (const json::exception& e) {
        throw std::runtime_error("frame schema: invalid JSON in " + path + ": " + e.what());
    }
    FrameRecord frame;
    frame.frame_id = static_cast<int>(require_number(doc, "frame_id", path));
    if (!doc.contains("intrinsics") || !doc["intrinsics"].is_object()) {
        throw std::runtime_error("frame schema: missing object field 'intrinsics' in " + path);
    }
    const json& k = doc["intrinsics"];
    frame.fx = require_number(k, "fx", path);
    frame.fy = require_number(k, "fy", path);
    frame.cx = require_number(k, "cx", path);
    frame.cy = require_number(k, "cy", path);
    if (!doc.contains("pose") || !doc["pose"].is_array() || doc["pose"].size() != 16) {
        throw std::runtime_error("frame schema: field 'pose' must be 16 numbers in " + path);
    }
    for (int i = 0; i < 16; ++i) {
        frame.pose(i / 4, i % 4) = doc["pose"][static_cast<std::size_t>(i)].get<double>();
    }
    if (!doc.contains("depth") || !doc["depth"].is_string()) {
        throw std::runtime_error("frame schema: missing string field 'depth' in " + path);
    }
    const fs::path depth_rel = doc["depth"].get<std::string>();
    frame.depth_path = depth_rel.is_absolute()
                           ? depth_rel.string()
                           : (fs::path(path).parent_path() / depth_rel).string();
    if (!fs::exists(frame.depth_path)) {
        throw std::runtime_error("depth not found: " + frame.depth_path);
    }
    frame.width = static_cast<int>(require_number(doc, "width", path));
    frame.height = static_cast<int>(require_number(doc, "height", path));
    if (doc.contains("detections")) {
        if (!doc["detections"].is_array()) {
            throw std::runtime_error("frame schema: field 'detections' must be an array in " + path);
        }
        for (const json& jd : doc["detections"]) {
            Detection det;
            det.marker = static_cast<int>(require_number(jd, "marker", path));
            if (!jd.contains("label") || !jd["label"].is_string()) {
                throw std::runtime_error("frame schema: detection missing string 'label' in " + path);
            }
            det.label = jd["label"].get<std::string>();
            det.confidence = require_number(jd, "confidence", path);
            if (!jd.contains("rle") || !jd["rle"].is_array()) {
                throw std::runtime_error("frame schema: detection missing array 'rle' in " + path);
            }
            det.rle = jd["rle"].get<std::vector<std::int64_t>>();
            if (jd.contains("caption")) det.caption = jd["caption"].get<std::string>();
            decode_rle(det.rle, frame.width, frame.height);  // length check
            if (det.confidence < min_confidence) continue;
            frame.detections.push_back(std::move(det));
        }
    }
    frame.validate();
    return frame;
}

void save_frame(const FrameRecord& frame, const std::string& path) {
    frame.validate();
    json doc;
    doc["frame_id"] = frame.frame_id;
    doc["intrinsics"] = {{"fx", frame.fx}, {"fy", frame.fy}, {"cx", frame.cx}, {"cy", frame.cy}};
    json pose = json::array();
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) pose.push_back(frame.pose(r, c));
    doc["pose"] = std::move(pose);
    doc["depth"] = frame.depth_path;
    doc["width"] = frame.width;
    doc["height"] = frame.height;
    json dets = json::array();
    for (const Detection& d : frame.detections) {
        json jd{{"marker", d.marker},
                {"label", d.label},
                {"confidence", d.confidence},
                {"rle", d.rle}};
        if (d.caption) jd["caption"] = *d.caption;
        dets.push_back(std::move(jd));
    }
    doc["detections"] = std::move(dets);
    write_text_file(path, doc.dump(2) + "\n");
}

PointCloud backproject_mask(const FrameRecord& frame, const Detection& det,
                            const DepthImage& depth) {
    if (depth.width != frame.width || depth.height != frame.height) {
        throw std::runtime_error("depth dimensions do not match frame dimensions");
    }
    const std::vector<bool> mask = decode_rle(det.rle, frame.width, frame.height);
    PointCloud points;
    for (int v = 0; v < frame.height; ++v) {
        for (int u = 0; u < frame.width; ++u) {
            if (!mask[static_cast<std::size_t>(v) * frame.width + u]) continue;
            const std::uint16_t mm = depth.at(u, v);
            if (mm == 0) continue;  // invalid depth
            const double z = mm / 1000.0;
            const Eigen::Vector4d cam((u - frame.cx) * z / frame.fx,
                                      (v - frame.cy) * z / frame.fy, z, 1.0);
            points.push_back((frame.pose * cam).head<3>());
        }
    }
    return points;
}

std::optional<Eigen::Vector2d> project_point(const FrameRecord& frame, const Vec3& world) {
    Eigen::Vector4d w;
    w << world, 1.0;
    const Eigen::Vector4d cam = frame.pose.inverse() * w;
    if (cam.z() <= 0.0) return std::nullopt;
    return Eigen::Vector2d(frame.cx + frame.fx * cam.x() / cam.z(),
                           frame.cy + frame.fy * cam.y() / cam.z());
}

namespace {

json vec3_to_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

Vec3 vec3_from_json(const json& j) {
    if (!j.is_array() || j.size() != 3) throw std::runtime_error("expected 3-vector");
    return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

}  // namespace

std::string scene_graph_to_json(const SceneGraph3D& g, bool include_points) {
    g.validate();
    json doc;
    doc["header"] = {{"version", 1}, {"embedding_dim", g.embedding_dim}};
    json nodes = json::array();
    for (const auto& [id, obj] : g.nodes) {
        json jn;
        jn["id"] = id;
        jn["label"] = obj.label;
        jn["aabb"] = {{"min", vec3_to_json(obj.aabb.min)}, {"max", vec3_to_json(obj.aabb.max)}};
        json emb = json::array();
        for (Eigen::Index i = 0; i < obj.embedding.size(); ++i) emb.push_back(obj.embedding[i]);
        jn["embedding"] = std::move(emb);
        jn["num_observations"] = obj.num_observations;
        jn["captions"] = obj.captions;
        if (include_points && !obj.points.empty()) {
            json pts = json::array();
            for (const Vec3& p : obj.points) {
                pts.push_back(p.x());
                pts.push_back(p.y());
                pts.push_back(p.z());
            }
            jn["points"] = std::move(pts);
        }
        nodes.push_back(std::move(jn));
    }
    doc["nodes"] = std::move(nodes);
    json edges = json::array();
    for (const RelationEdge& e : g.edges) {
        edges.push_back({{"src", e.src_id},
                         {"dst", e.dst_id},
                         {"predicate", e.predicate},
                         {"count", e.count},
                         {"provenance", to_string(e.provenance)}});
    }
    doc["edges"] = std::move(edges);
    return doc.dump(2) + "\n";
}

SceneGraph3D scene_graph_from_json(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw std::runtime_error(std::string("scene graph: invalid JSON: ") + e.what());
    }
    if (!doc.contains("header") || !doc["header"].contains("version")) {
        throw std::runtime_error("scene graph: missing header.version");
    }
    if (doc["header"]["version"].get<int>() != 1) {
        throw std::runtime_error("unsupported version: " + doc["header"]["version"].dump());
    }
    SceneGraph3D g;
    g.embedding_dim = doc["header"].value("embedding_dim", 0);
    for (const json& jn : doc.value("nodes", json::array())) {
        ObjectInstance obj;
        obj.id = jn.at("id").get<int>();
        obj.label = jn.at("label").get<std::string>();
        obj.aabb.min = vec3_from_json(jn.at("aabb").at("min"));
        obj.aabb.max = vec3_from_json(jn.at("aabb").at("max"));
        const json& emb = jn.at("embedding");
        obj.embedding.resize(static_cast<Eigen::Index>(emb.size()));
        for (std::size_t i = 0; i < emb.size(); ++i) {
            obj.embedding[static_cast<Eigen::Index>(i)] = emb[i].get<double>();
        }
        if (obj.embedding.size() != g.embedding_dim) {
            throw std::runtime_error("scene graph: embedding dimension mismatch on node " +
                                     std::to_string(obj.id));
        }
        obj.num_observations = jn.value("num_observations", 1);
        if (jn.contains("captions")) obj.captions = jn["captions"].get<std::vector<std::string>>();
        if (jn.contains("points")) {
            const json& pts = jn["points"];
            if (pts.size() % 3 != 0) throw std::runtime_error("scene graph: points array not 3n");
            for (std::size_t i = 0; i + 2 < pts.size(); i += 3) {
                obj.points.emplace_back(pts[i].get<double>(), pts[i + 1].get<double>(),
                                        pts[i + 2].get<double>());
            }
        }
        if (!g.nodes.emplace(obj.id, std::move(obj)).second) {
            throw std::runtime_error("scene graph: duplicate node id");
        }
    }
    for (const json& je : doc.value("edges", json::array())) {
        RelationEdge e;
        e.src_id = je.at("src").get<int>();
        e.dst_id = je.at("dst").get<int>();
        e.predicate = je.at("predicate").get<std::string>();
        e.count = je.value("count", 1);
        e.provenance = provenance_from_string(je.at("provenance").get<std::string>());
        g.edges.push_back(std::move(e));
    }
    g.validate();
    return g;
}

void save_scene_graph(const SceneGraph3D& g, const std::string& path, bool include_points) {
    write_text_file(path, scene_graph_to_json(g, include_points));
}

SceneGraph3D load_scene_graph(const std::string& path) {
    return scene_graph_from_json(read_text_file(path));
}

}  // namespace graphground
