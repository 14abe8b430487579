#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "graphground/geometry.hpp"
#include "graphground/scene.hpp"

namespace graphground {

/// One detector output inside a frame. The mask is run-length encoded over
/// row-major pixels, alternating background/foreground and starting with the
/// background run (so a mask beginning at pixel 0 starts with a 0 run).
struct Detection {
    int marker = 0;  // unique within the frame, >= 1
    std::string label;
    double confidence = 1.0;
    std::vector<std::int64_t> rle;
    std::optional<std::string> caption;
};

/// A single posed RGB-D observation. Pose is camera-to-world, row-major,
/// right-handed with +Z forward (camera optical convention). Depth files are
/// 16-bit millimeters with 0 = invalid.
struct FrameRecord {
    int frame_id = 0;
    double fx = 0, fy = 0, cx = 0, cy = 0;
    Mat4 pose = Mat4::Identity();
    std::string depth_path;  // resolved against the frame file's directory
    int width = 0;
    int height = 0;
    std::vector<Detection> detections;

    void validate() const;
};

struct DepthImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint16_t> millimeters;  // row-major, 0 = invalid

    std::uint16_t at(int u, int v) const {
        return millimeters[static_cast<std::size_t>(v) * width + u];
    }
};

/// Decodes an alternating-run RLE into a row-major boolean mask.
/// Throws "rle length mismatch" if the runs do not cover width*height pixels.
std::vector<bool> decode_rle(const std::vector<std::int64_t>& rle, int width, int height);
std::vector<std::int64_t> encode_rle(const std::vector<bool>& mask);

DepthImage load_depth(const std::string& path);
void save_depth_pgm(const DepthImage& depth, const std::string& path);
void save_depth_png(const DepthImage& depth, const std::string& path);

/// Loads and validates a frame JSON file. Detections below min_confidence are
/// dropped. The stored depth path is resolved relative to the frame file.
FrameRecord load_frame(const std::string& path, double min_confidence = 0.2);
void save_frame(const FrameRecord& frame, const std::string& path);

/// Back-projects every valid-depth mask pixel into world coordinates:
/// z = d/1000, camera point ((u-cx)z/fx, (v-cy)z/fy, z), then pose transform.
PointCloud backproject_mask(const FrameRecord& frame, const Detection& det,
                            const DepthImage& depth);

/// Pinhole projection of a world point back into pixel coordinates; returns
/// nothing when the point lies behind the camera.
std::optional<Eigen::Vector2d> project_point(const FrameRecord& frame, const Vec3& world);

/// Persistent scene graph files: versioned header, nodes, edges; point clouds
/// stored as flat float arrays when include_points is set. Serialization is
/// byte-deterministic (sorted keys, shortest-round-trip numbers), so
/// save(load(save(g))) is byte-identical to save(g).
void save_scene_graph(const SceneGraph3D& g, const std::string& path,
                      bool include_points = true);
SceneGraph3D load_scene_graph(const std::string& path);

/// In-memory equivalents used by tests and the Python bindings.
std::string scene_graph_to_json(const SceneGraph3D& g, bool include_points = true);
SceneGraph3D scene_graph_from_json(const std::string& text);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace graphground
