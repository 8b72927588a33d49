#include "rlddmm/pointcloud.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>

namespace rlddmm {

namespace {

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    return s;
}

struct PointKey {
    double x, y, z;
    bool operator<(const PointKey& o) const {
        if (x != o.x) return x < o.x;
        if (y != o.y) return y < o.y;
        return z < o.z;
    }
};

PointCloud finalize(std::vector<Vec3>& verts,
                    std::vector<std::array<int, 3>>& faces,
                    std::vector<int>& labels, const LoadOptions& opts) {
    if (verts.empty()) throw EmptyCloud("file contains no vertices");

    // duplicate detection, preserving first-occurrence order
    std::map<PointKey, int> seen;
    std::vector<int> remap(verts.size());
    std::vector<Vec3> kept;
    std::vector<int> kept_labels;
    bool dup = false;
    for (size_t i = 0; i < verts.size(); ++i) {
        PointKey key{verts[i].x(), verts[i].y(), verts[i].z()};
        auto it = seen.find(key);
        if (it == seen.end()) {
            seen.emplace(key, static_cast<int>(kept.size()));
            remap[i] = static_cast<int>(kept.size());
            kept.push_back(verts[i]);
            if (!labels.empty()) kept_labels.push_back(labels[i]);
        } else {
            dup = true;
            remap[i] = it->second;
        }
    }
    if (dup && !opts.dedup)
        throw DegenerateInput("duplicate vertices (enable dedup to drop them)");

    PointCloud cloud;
    cloud.points.resize(3, static_cast<Eigen::Index>(kept.size()));
    for (size_t i = 0; i < kept.size(); ++i) cloud.points.col(i) = kept[i];
    cloud.labels = std::move(kept_labels);
    for (auto& f : faces) {
        for (int& idx : f) {
            if (idx < 0 || idx >= static_cast<int>(verts.size()))
                throw ParseError("face index out of range: " + std::to_string(idx));
            idx = remap[idx];
        }
        cloud.faces.push_back(f);
    }
    cloud.validate();
    return cloud;
}

double parse_double(const std::string& tok, const char* what) {
    size_t pos = 0;
    double v;
    try {
        v = std::stod(tok, &pos);
    } catch (const std::exception&) {
        throw ParseError(std::string("bad ") + what + ": '" + tok + "'");
    }
    if (pos != tok.size())
        throw ParseError(std::string("bad ") + what + ": '" + tok + "'");
    if (!std::isfinite(v))
        throw ParseError(std::string("non-finite ") + what + ": '" + tok + "'");
    return v;
}

PointCloud load_obj(std::istream& in, const LoadOptions& opts) {
    std::vector<Vec3> verts;
    std::vector<std::array<int, 3>> faces;
    std::vector<int> labels;
    std::string line;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string tag;
        if (!(ls >> tag) || tag[0] == '#') continue;
        if (tag == "v") {
            std::string xs, ys, zs;
            if (!(ls >> xs >> ys >> zs)) throw ParseError("short vertex record");
            verts.emplace_back(parse_double(xs, "coordinate"),
                               parse_double(ys, "coordinate"),
                               parse_double(zs, "coordinate"));
        } else if (tag == "f") {
            std::array<int, 3> f;
            for (int k = 0; k < 3; ++k) {
                std::string tok;
                if (!(ls >> tok)) throw ParseError("short face record");
                // accept v, v/vt, v//vn forms; only the vertex index is kept
                const size_t slash = tok.find('/');
                const std::string head = tok.substr(0, slash);
                try {
                    f[k] = std::stoi(head) - 1;  // OBJ is 1-based
                } catch (const std::exception&) {
                    throw ParseError("bad face index: '" + tok + "'");
                }
            }
            std::string extra;
            if (ls >> extra)
                throw ParseError("only triangle faces are supported");
            faces.push_back(f);
        }
        // other record types (vn, vt, o, g, s, usemtl...) are ignored
    }
    return finalize(verts, faces, labels, opts);
}

PointCloud load_xyz(std::istream& in, const LoadOptions& opts) {
    std::vector<Vec3> verts;
    std::vector<std::array<int, 3>> faces;
    std::vector<int> labels;
    std::string line;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string xs;
        if (!(ls >> xs) || xs[0] == '#') continue;
        std::string ys, zs;
        if (!(ls >> ys >> zs)) throw ParseError("short xyz record: '" + line + "'");
        verts.emplace_back(parse_double(xs, "coordinate"),
                           parse_double(ys, "coordinate"),
                           parse_double(zs, "coordinate"));
    }
    return finalize(verts, faces, labels, opts);
}

PointCloud load_ply(std::istream& in, const LoadOptions& opts) {
    std::string line;
    if (!std::getline(in, line) || lower(line).substr(0, 3) != "ply")
        throw ParseError("missing ply magic");
    long n_verts = -1, n_faces = 0;
    bool ascii = false;
    std::string current_element;
    std::vector<std::string> vertex_props;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string tag;
        ls >> tag;
        if (tag == "format") {
            std::string fmt;
            ls >> fmt;
            if (fmt != "ascii")
                throw ParseError("binary PLY is not supported");
            ascii = true;
        } else if (tag == "element") {
            std::string name;
            long count;
            ls >> name >> count;
            current_element = name;
            if (name == "vertex") n_verts = count;
            else if (name == "face") n_faces = count;
        } else if (tag == "property" && current_element == "vertex") {
            std::string type, name;
            ls >> type;
            if (type == "list") ls >> name >> name;  // skip list types
            ls >> name;
            vertex_props.push_back(name);
        } else if (tag == "end_header") {
            break;
        }
    }
    if (!ascii) throw ParseError("missing PLY format line");
    if (n_verts < 0) throw ParseError("missing vertex element");
    auto prop_index = [&](const std::string& name) {
        auto it = std::find(vertex_props.begin(), vertex_props.end(), name);
        if (it == vertex_props.end())
            throw ParseError("vertex property '" + name + "' missing");
        return static_cast<int>(it - vertex_props.begin());
    };
    const int ix = prop_index("x"), iy = prop_index("y"), iz = prop_index("z");

    std::vector<Vec3> verts;
    std::vector<std::array<int, 3>> faces;
    std::vector<int> labels;
    for (long i = 0; i < n_verts; ++i) {
        if (!std::getline(in, line)) throw ParseError("truncated vertex list");
        std::istringstream ls(line);
        std::vector<std::string> toks;
        std::string tok;
        while (ls >> tok) toks.push_back(tok);
        if (static_cast<int>(toks.size()) < static_cast<int>(vertex_props.size()))
            throw ParseError("short vertex record");
        verts.emplace_back(parse_double(toks[ix], "coordinate"),
                           parse_double(toks[iy], "coordinate"),
                           parse_double(toks[iz], "coordinate"));
    }
    for (long i = 0; i < n_faces; ++i) {
        if (!std::getline(in, line)) throw ParseError("truncated face list");
        std::istringstream ls(line);
        int count;
        if (!(ls >> count)) throw ParseError("bad face record");
        if (count != 3) throw ParseError("only triangle faces are supported");
        std::array<int, 3> f;
        if (!(ls >> f[0] >> f[1] >> f[2])) throw ParseError("short face record");
        faces.push_back(f);
    }
    return finalize(verts, faces, labels, opts);
}

}  // namespace

void PointCloud::validate() const {
    const int n = size();
    if (n < 1) throw EmptyCloud("empty point cloud");
    if (!points.allFinite()) throw DegenerateInput("non-finite coordinate");
    for (const auto& f : faces)
        for (int idx : f)
            if (idx < 0 || idx >= n)
                throw ParseError("face index out of range: " + std::to_string(idx));
    if (!labels.empty() && static_cast<int>(labels.size()) != n)
        throw DegenerateInput("label count does not match point count");
    std::map<PointKey, int> seen;
    for (int i = 0; i < n; ++i) {
        PointKey key{points(0, i), points(1, i), points(2, i)};
        if (!seen.emplace(key, i).second)
            throw DegenerateInput("duplicate points at indices " +
                                  std::to_string(seen[key]) + " and " +
                                  std::to_string(i));
    }
}

CloudFormat format_from_path(const std::filesystem::path& path) {
    const std::string ext = lower(path.extension().string());
    if (ext == ".obj") return CloudFormat::Obj;
    if (ext == ".ply") return CloudFormat::Ply;
    if (ext == ".xyz" || ext == ".txt") return CloudFormat::Xyz;
    throw ParseError("unknown point-cloud extension: '" + ext + "'");
}

PointCloud load_pointcloud(const std::filesystem::path& path, CloudFormat format,
                           const LoadOptions& opts) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    switch (format) {
        case CloudFormat::Obj: return load_obj(in, opts);
        case CloudFormat::Ply: return load_ply(in, opts);
        case CloudFormat::Xyz: return load_xyz(in, opts);
    }
    throw InvalidConfig("unreachable format");
}

PointCloud load_pointcloud(const std::filesystem::path& path,
                           const LoadOptions& opts) {
    return load_pointcloud(path, format_from_path(path), opts);
}

void save_pointcloud(const PointCloud& cloud, const std::filesystem::path& path,
                     CloudFormat format) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out.precision(17);
    const int n = cloud.size();
    switch (format) {
        case CloudFormat::Obj:
            for (int i = 0; i < n; ++i)
                out << "v " << cloud.points(0, i) << ' ' << cloud.points(1, i)
                    << ' ' << cloud.points(2, i) << '\n';
            for (const auto& f : cloud.faces)
                out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1
                    << '\n';
            break;
        case CloudFormat::Ply:
            out << "ply\nformat ascii 1.0\n";
            out << "element vertex " << n << '\n';
            out << "property float x\nproperty float y\nproperty float z\n";
            if (cloud.has_faces()) {
                out << "element face " << cloud.faces.size() << '\n';
                out << "property list uchar int vertex_indices\n";
            }
            out << "end_header\n";
            for (int i = 0; i < n; ++i)
                out << cloud.points(0, i) << ' ' << cloud.points(1, i) << ' '
                    << cloud.points(2, i) << '\n';
            for (const auto& f : cloud.faces)
                out << "3 " << f[0] << ' ' << f[1] << ' ' << f[2] << '\n';
            break;
        case CloudFormat::Xyz:
            for (int i = 0; i < n; ++i)
                out << cloud.points(0, i) << ' ' << cloud.points(1, i) << ' '
                    << cloud.points(2, i) << '\n';
            break;
    }
    if (!out) throw IoError("write failed on '" + path.string() + "'");
}

void save_pointcloud(const PointCloud& cloud, const std::filesystem::path& path) {
    save_pointcloud(cloud, path, format_from_path(path));
}

NormalizationRecord normalize(PointCloud& source, PointCloud& target) {
    if (source.size() == 0 || target.size() == 0)
        throw EmptyCloud("normalize needs nonempty clouds");
    const double n_total = source.size() + target.size();
    Vec3 centroid = (source.points.rowwise().sum() + target.points.rowwise().sum()) / n_total;
    Vec3 lo = source.points.rowwise().minCoeff().cwiseMin(
        target.points.rowwise().minCoeff());
    Vec3 hi = source.points.rowwise().maxCoeff().cwiseMax(
        target.points.rowwise().maxCoeff());
    const double diag = (hi - lo).norm();
    if (diag <= 0.0)
        throw DegenerateInput("all points coincide, no scale defined");
    NormalizationRecord rec{centroid, 1.0 / diag};
    source.points = rec.apply(source.points);
    target.points = rec.apply(target.points);
    return rec;
}

}  // namespace rlddmm
