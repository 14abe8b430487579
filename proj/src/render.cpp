#include "graphground/render.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

#include <png.h>

#include "graphground/providers.hpp"

namespace graphground {

void object_color(int object_id, std::uint8_t& r, std::uint8_t& g, std::uint8_t& b) {
    const std::uint64_t h = fnv1a64("object-" + std::to_string(object_id));
    r = static_cast<std::uint8_t>(96 + (h & 0x7f));
    g = static_cast<std::uint8_t>(96 + ((h >> 8) & 0x7f));
    b = static_cast<std::uint8_t>(96 + ((h >> 16) & 0x7f));
}

FrameRecord auto_camera(const SceneGraph3D& g, const std::vector<int>& ids, int width,
                        int height) {
    if (ids.empty()) throw std::invalid_argument("auto_camera: no objects to frame");
    Aabb joint = g.at(ids.front()).aabb;
    for (int id : ids) joint = joint.merged(g.at(id).aabb);
    const Vec3 center = joint.center();
    double radius = 0.0;
    for (int id : ids) {
        const Aabb& box = g.at(id).aabb;
        for (int c = 0; c < 8; ++c) {
            const Vec3 corner(c & 1 ? box.max.x() : box.min.x(),
                              c & 2 ? box.max.y() : box.min.y(),
                              c & 4 ? box.max.z() : box.min.z());
            radius = std::max(radius, (corner - center).norm());
        }
    }
    const double dist = std::max(2.0 * radius, 1.0);
    const Vec3 eye = center + Vec3(1.0, -1.0, 1.0).normalized() * dist;

    const Vec3 forward = (center - eye).normalized();  // camera +Z
    const Vec3 up_world(0.0, 0.0, 1.0);
    const Vec3 right = forward.cross(up_world).normalized();  // camera +X
    const Vec3 down = forward.cross(right);                   // camera +Y (image v grows down)

    FrameRecord cam;
    cam.frame_id = -1;
    cam.width = width;
    cam.height = height;
    // 72 degree vertical-equivalent fov on the short raster side
    constexpr double kPi = 3.14159265358979323846;
    const double f = (std::min(width, height) / 2.0) / std::tan(36.0 * kPi / 180.0);
    cam.fx = cam.fy = f;
    cam.cx = (width - 1) / 2.0;
    cam.cy = (height - 1) / 2.0;
    cam.pose = Mat4::Identity();
    cam.pose.block<3, 1>(0, 0) = right;
    cam.pose.block<3, 1>(0, 1) = down;
    cam.pose.block<3, 1>(0, 2) = forward;
    cam.pose.block<3, 1>(0, 3) = eye;
    return cam;
}

namespace {

// 5x7 digit glyphs, one row per byte (low 5 bits)
constexpr std::uint8_t kDigits[10][7] = {
    {0x0e, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0e},  // 0
    {0x04, 0x0c, 0x04, 0x04, 0x04, 0x04, 0x0e},  // 1
    {0x0e, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1f},  // 2
    {0x1f, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0e},  // 3
    {0x02, 0x06, 0x0a, 0x12, 0x1f, 0x02, 0x02},  // 4
    {0x1f, 0x10, 0x1e, 0x01, 0x01, 0x11, 0x0e},  // 5
    {0x06, 0x08, 0x10, 0x1e, 0x11, 0x11, 0x0e},  // 6
    {0x1f, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08},  // 7
    {0x0e, 0x11, 0x11, 0x0e, 0x11, 0x11, 0x0e},  // 8
    {0x0e, 0x11, 0x11, 0x0f, 0x01, 0x02, 0x0c},  // 9
};

constexpr int kScale = 2;

void draw_digit(Image& img, int digit, int x, int y, std::uint8_t r, std::uint8_t g,
                std::uint8_t b) {
    for (int row = 0; row < 7; ++row) {
        for (int col = 0; col < 5; ++col) {
            if (!(kDigits[digit][row] & (1 << (4 - col)))) continue;
            for (int sy = 0; sy < kScale; ++sy) {
                for (int sx = 0; sx < kScale; ++sx) {
                    img.set(x + col * kScale + sx, y + row * kScale + sy, r, g, b);
                }
            }
        }
    }
}

void draw_rect(Image& img, int x0, int y0, int x1, int y1, std::uint8_t r, std::uint8_t g,
               std::uint8_t b) {
    for (int t = 0; t < 2; ++t) {  // 2 px outline
        for (int x = x0; x <= x1; ++x) {
            img.set(x, y0 + t, r, g, b);
            img.set(x, y1 - t, r, g, b);
        }
        for (int y = y0; y <= y1; ++y) {
            img.set(x0 + t, y, r, g, b);
            img.set(x1 - t, y, r, g, b);
        }
    }
}

}  // namespace

void draw_number(Image& img, int value, int x, int y, std::uint8_t r, std::uint8_t g,
                 std::uint8_t b) {
    const std::string digits = std::to_string(value);
    // dark backdrop one pixel around each glyph for legibility
    for (std::size_t i = 0; i < digits.size(); ++i) {
        const int gx = x + static_cast<int>(i) * (5 * kScale + 2);
        for (int yy = -1; yy <= 7 * kScale; ++yy) {
            for (int xx = -1; xx <= 5 * kScale; ++xx) {
                img.set(gx + xx, y + yy, 16, 16, 16);
            }
        }
        draw_digit(img, digits[i] - '0', gx, y, r, g, b);
    }
}

Image render_candidates(const SceneGraph3D& g, const std::vector<int>& candidate_ids,
                        int width, int height, const std::optional<FrameRecord>& camera) {
    if (candidate_ids.empty()) throw std::invalid_argument("render_candidates: no candidates");
    const FrameRecord cam = camera ? *camera : auto_camera(g, candidate_ids, width, height);

    Image img(width, height);
    std::vector<double> zbuf(static_cast<std::size_t>(width) * height,
                             std::numeric_limits<double>::infinity());

    const Eigen::Matrix4d world_to_cam = cam.pose.inverse();
    for (const auto& [id, obj] : g.nodes) {
        std::uint8_t r, gg, b;
        object_color(id, r, gg, b);
        for (const Vec3& p : obj.points) {
            Eigen::Vector4d w;
            w << p, 1.0;
            const Eigen::Vector4d c = world_to_cam * w;
            if (c.z() <= 0.0) continue;  // behind the camera
            const int u = static_cast<int>(std::lround(cam.cx + cam.fx * c.x() / c.z()));
            const int v = static_cast<int>(std::lround(cam.cy + cam.fy * c.y() / c.z()));
            for (int dy = -2; dy <= 2; ++dy) {
                for (int dx = -2; dx <= 2; ++dx) {
                    if (dx * dx + dy * dy > 4) continue;  // round splat
                    const int x = u + dx;
                    const int y = v + dy;
                    if (x < 0 || y < 0 || x >= width || y >= height) continue;
                    const std::size_t i = static_cast<std::size_t>(y) * width + x;
                    if (c.z() >= zbuf[i]) continue;
                    zbuf[i] = c.z();
                    img.set(x, y, r, gg, b);
                }
            }
        }
    }

    for (std::size_t i = 0; i < candidate_ids.size(); ++i) {
        const ObjectInstance& obj = g.at(candidate_ids[i]);
        double x0 = width, y0 = height, x1 = -1, y1 = -1;
        for (int c = 0; c < 8; ++c) {
            const Vec3 corner(c & 1 ? obj.aabb.max.x() : obj.aabb.min.x(),
                              c & 2 ? obj.aabb.max.y() : obj.aabb.min.y(),
                              c & 4 ? obj.aabb.max.z() : obj.aabb.min.z());
            const auto px = project_point(cam, corner);
            if (!px) continue;
            x0 = std::min(x0, px->x());
            y0 = std::min(y0, px->y());
            x1 = std::max(x1, px->x());
            y1 = std::max(y1, px->y());
        }
        if (x1 < x0 || y1 < y0) continue;  // fully behind the camera
        const int ix0 = std::clamp(static_cast<int>(std::floor(x0)), 0, width - 1);
        const int iy0 = std::clamp(static_cast<int>(std::floor(y0)), 0, height - 1);
        const int ix1 = std::clamp(static_cast<int>(std::ceil(x1)), 0, width - 1);
        const int iy1 = std::clamp(static_cast<int>(std::ceil(y1)), 0, height - 1);
        draw_rect(img, ix0, iy0, ix1, iy1, 255, 255, 255);
        draw_number(img, static_cast<int>(i) + 1, ix0 + 4, iy0 + 4, 255, 255, 255);
    }
    return img;
}

namespace {

struct PngWriteCtx {
    png_structp png = nullptr;
    png_infop info = nullptr;
    FILE* fp = nullptr;
    ~PngWriteCtx() {
        if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
        if (fp) std::fclose(fp);
    }
};

void png_buffer_writer(png_structp png, png_bytep data, png_size_t length) {
    auto* out = static_cast<std::string*>(png_get_io_ptr(png));
    out->append(reinterpret_cast<const char*>(data), length);
}

void write_rows(png_structp png, png_infop info, const Image& img) {
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width),
                 static_cast<png_uint_32>(img.height), 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < img.height; ++y) {
        png_write_row(png, const_cast<png_bytep>(reinterpret_cast<const png_byte*>(
                               img.rgb.data() + static_cast<std::size_t>(y) * img.width * 3)));
    }
    png_write_end(png, info);
}

}  // namespace

void write_png_rgb(const Image& img, const std::string& path) {
    PngWriteCtx ctx;
    ctx.fp = std::fopen(path.c_str(), "wb");
    if (!ctx.fp) throw std::runtime_error("cannot write file: " + path);
    ctx.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!ctx.png) throw std::runtime_error("png init failed");
    ctx.info = png_create_info_struct(ctx.png);
    if (!ctx.info) throw std::runtime_error("png init failed");
    if (setjmp(png_jmpbuf(ctx.png))) throw std::runtime_error("png write failed: " + path);
    png_init_io(ctx.png, ctx.fp);
    write_rows(ctx.png, ctx.info, img);
}

std::string encode_png_rgb(const Image& img) {
    PngWriteCtx ctx;
    ctx.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!ctx.png) throw std::runtime_error("png init failed");
    ctx.info = png_create_info_struct(ctx.png);
    if (!ctx.info) throw std::runtime_error("png init failed");
    std::string out;
    if (setjmp(png_jmpbuf(ctx.png))) throw std::runtime_error("png encode failed");
    png_set_write_fn(ctx.png, &out, png_buffer_writer, nullptr);
    write_rows(ctx.png, ctx.info, img);
    return out;
}

}  // namespace graphground
