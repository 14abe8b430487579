#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "graphground/ingest.hpp"
#include "graphground/scene.hpp"

namespace graphground {

struct Image {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> rgb;  // row-major, 3 bytes per pixel

    Image() = default;
    Image(int w, int h) : width(w), height(h), rgb(static_cast<std::size_t>(w) * h * 3, 0) {}

    void set(int x, int y, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
        if (x < 0 || y < 0 || x >= width || y >= height) return;
        const std::size_t i = (static_cast<std::size_t>(y) * width + x) * 3;
        rgb[i] = r;
        rgb[i + 1] = g;
        rgb[i + 2] = b;
    }
};

/// Deterministic per-object display color derived from the id.
void object_color(int object_id, std::uint8_t& r, std::uint8_t& g, std::uint8_t& b);

/// Camera that frames all listed objects: look-at their joint box center from
/// distance 2x the bounding radius along a fixed oblique direction, +Z-up
/// world. Returned as a FrameRecord so the ingest projection applies.
FrameRecord auto_camera(const SceneGraph3D& g, const std::vector<int>& ids, int width,
                        int height);

/// Perspective view of the scene: z-buffered 2 px point splats colored per
/// object, plus outlined boxes and numeric markers (1-based position in
/// candidate_ids) over the candidates. A point-free scene degrades to boxes
/// on a blank raster. The camera defaults to auto_camera over the candidates.
Image render_candidates(const SceneGraph3D& g, const std::vector<int>& candidate_ids,
                        int width = 640, int height = 480,
                        const std::optional<FrameRecord>& camera = std::nullopt);

void write_png_rgb(const Image& img, const std::string& path);
std::string encode_png_rgb(const Image& img);  // in-memory PNG payload

/// 5x7 bitmap digits, scaled 2x, drawn with a 1 px dark outline.
void draw_number(Image& img, int value, int x, int y, std::uint8_t r, std::uint8_t g,
                 std::uint8_t b);

}  // namespace graphground
