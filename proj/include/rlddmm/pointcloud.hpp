// Point-cloud data model, ASCII OBJ/PLY/XYZ I/O and joint normalization.
#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <vector>

#include "rlddmm/core.hpp"

namespace rlddmm {

struct PointCloud {
    Mat3X points;                             // 3 x n, column = one point
    std::vector<std::array<int, 3>> faces;    // optional triangles
    std::vector<int> labels;                  // optional correspondence ids

    int size() const { return static_cast<int>(points.cols()); }
    bool has_faces() const { return !faces.empty(); }
    bool has_labels() const { return !labels.empty(); }

    // Throws EmptyCloud / DegenerateInput / ParseError when an invariant fails.
    void validate() const;
};

enum class CloudFormat { Obj, Ply, Xyz };

// Deduced from the file extension; throws ParseError on unknown extensions.
CloudFormat format_from_path(const std::filesystem::path& path);

struct LoadOptions {
    bool dedup = false;  // silently drop duplicate vertices instead of failing
};

PointCloud load_pointcloud(const std::filesystem::path& path, CloudFormat format,
                           const LoadOptions& opts = {});
PointCloud load_pointcloud(const std::filesystem::path& path,
                           const LoadOptions& opts = {});

void save_pointcloud(const PointCloud& cloud, const std::filesystem::path& path,
                     CloudFormat format);
void save_pointcloud(const PointCloud& cloud, const std::filesystem::path& path);

// Shared similarity transform: y = scale * (x - center).
struct NormalizationRecord {
    Vec3 center = Vec3::Zero();
    double scale = 1.0;

    Vec3 apply(const Vec3& x) const { return scale * (x - center); }
    Vec3 invert(const Vec3& y) const { return y / scale + center; }
    Mat3X apply(const Mat3X& x) const {
        return scale * (x.colwise() - center);
    }
    Mat3X invert(const Mat3X& y) const {
        return (y / scale).colwise() + center;
    }
};

// Moves the joint centroid to the origin and rescales so the joint
// bounding-box diagonal is 1. Both clouds get the same transform.
NormalizationRecord normalize(PointCloud& source, PointCloud& target);

}  // namespace rlddmm
