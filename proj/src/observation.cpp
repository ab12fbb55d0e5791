#include "egomem/observation.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "egomem/checkpoint.hpp"

namespace egomem {

namespace {

// Distance to the first obstacle cell along a ray (Amanatides & Woo grid
// traversal). Returns max_dist + 1 if no wall within range.
double wall_distance(const EnvironmentSpec& env, double x, double z, double dx, double dz,
                     double max_dist) {
    const double res = env.grid_resolution;
    int col = static_cast<int>(std::floor(x / res));
    int row = static_cast<int>(std::floor(z / res));
    if (env.obstacle(col, row)) return 0.0;

    const int step_c = dx > 0 ? 1 : -1;
    const int step_r = dz > 0 ? 1 : -1;
    const double inv_dx = dx != 0 ? 1.0 / dx : 0.0;
    const double inv_dz = dz != 0 ? 1.0 / dz : 0.0;
    double t_max_x = std::numeric_limits<double>::max();
    double t_max_z = std::numeric_limits<double>::max();
    double t_delta_x = std::numeric_limits<double>::max();
    double t_delta_z = std::numeric_limits<double>::max();
    if (dx != 0) {
        const double next = (dx > 0 ? (col + 1) * res : col * res);
        t_max_x = (next - x) * inv_dx;
        t_delta_x = res * std::abs(inv_dx);
    }
    if (dz != 0) {
        const double next = (dz > 0 ? (row + 1) * res : row * res);
        t_max_z = (next - z) * inv_dz;
        t_delta_z = res * std::abs(inv_dz);
    }
    while (true) {
        double t;
        if (t_max_x < t_max_z) {
            t = t_max_x;
            t_max_x += t_delta_x;
            col += step_c;
        } else {
            t = t_max_z;
            t_max_z += t_delta_z;
            row += step_r;
        }
        if (t > max_dist) return max_dist + 1.0;
        if (env.obstacle(col, row)) return t;
    }
}

// First intersection parameter of a unit-direction ray with a circle;
// negative if none in (0, max_dist]. Rays starting inside return negative.
double circle_distance(double ox, double oz, double dx, double dz, double cx, double cz, double r,
                       double max_dist) {
    const double fx = ox - cx, fz = oz - cz;
    const double c = fx * fx + fz * fz - r * r;
    if (c <= 0) return -1.0;  // origin inside: transparent
    const double b = fx * dx + fz * dz;
    const double disc = b * b - c;
    if (disc < 0) return -1.0;
    const double t = -b - std::sqrt(disc);
    if (t <= 0 || t > max_dist) return -1.0;
    return t;
}

}  // namespace

RayHit cast_ray(const EnvironmentSpec& env, double x, double z, double dir_x, double dir_z,
                double max_dist) {
    RayHit hit;
    const double wall_t = wall_distance(env, x, z, dir_x, dir_z, max_dist);
    double best = (wall_t <= max_dist) ? wall_t : std::numeric_limits<double>::max();
    if (wall_t <= max_dist) {
        hit.kind = HitKind::wall;
        hit.distance = wall_t;
    }
    for (std::size_t i = 0; i < env.objects.size(); ++i) {
        const auto& o = env.objects[i];
        const double t =
            circle_distance(x, z, dir_x, dir_z, o.x, o.z, o.footprint_radius, max_dist);
        if (t > 0 && t < best) {
            best = t;
            hit.kind = HitKind::object;
            hit.distance = t;
            hit.object_index = static_cast<int>(i);
        }
    }
    return hit;
}

FrameFeature egocentric_features(const EnvironmentSpec& env, const Pose& pose, int rays) {
    FrameFeature f;
    f.rays = rays;
    f.num_classes = static_cast<int>(env.object_taxonomy.size());
    f.values.assign(static_cast<std::size_t>(f.size()), 0.0);
    const int block = f.block();
    for (int i = 0; i < rays; ++i) {
        const double angle = pose.theta() - kFov / 2.0 + (i + 0.5) * kFov / rays;
        const RayHit hit =
            cast_ray(env, pose.x, pose.z, std::sin(angle), std::cos(angle), kMaxRayDepth);
        double* slot = f.values.data() + static_cast<std::size_t>(i) * block;
        switch (hit.kind) {
            case HitKind::none:
                slot[block - 1] = 1.0;
                break;
            case HitKind::wall:
                slot[0] = std::max(hit.distance / kMaxRayDepth, 1e-3);
                break;
            case HitKind::object:
                slot[1 + env.objects[hit.object_index].class_id] =
                    std::max(hit.distance / kMaxRayDepth, 1e-3);
                break;
        }
    }
    return f;
}

namespace {

// Open segment test: clear iff no wall cell and no foreign footprint is hit
// strictly before the endpoint.
bool segment_clear(const EnvironmentSpec& env, double x0, double z0, double x1, double z1,
                   int skip_object) {
    const double dx = x1 - x0, dz = z1 - z0;
    const double len = std::hypot(dx, dz);
    if (len < 1e-12) return true;
    const double ux = dx / len, uz = dz / len;
    const double eps = 1e-9;
    if (wall_distance(env, x0, z0, ux, uz, len - eps) <= len - eps) return false;
    for (std::size_t i = 0; i < env.objects.size(); ++i) {
        if (static_cast<int>(i) == skip_object) continue;
        const auto& o = env.objects[i];
        const double t = circle_distance(x0, z0, ux, uz, o.x, o.z, o.footprint_radius, len - eps);
        if (t > 0) return false;
    }
    return true;
}

}  // namespace

bool is_visible_any_angle(const EnvironmentSpec& env, double x, double z, int object_index) {
    const auto& o = env.objects[object_index];
    if (segment_clear(env, x, z, o.x, o.z, object_index)) return true;
    for (int k = 0; k < 8; ++k) {
        const double a = k * std::numbers::pi / 4.0;
        const double px = o.x + o.footprint_radius * std::cos(a);
        const double pz = o.z + o.footprint_radius * std::sin(a);
        if (segment_clear(env, x, z, px, pz, object_index)) return true;
    }
    return false;
}

double seen_fraction(const EnvironmentSpec& env, const Pose& pose, int object_index, int rays) {
    int hits = 0;
    for (int i = 0; i < rays; ++i) {
        const double angle = pose.theta() - kFov / 2.0 + (i + 0.5) * kFov / rays;
        const RayHit hit =
            cast_ray(env, pose.x, pose.z, std::sin(angle), std::cos(angle), kMaxRayDepth);
        if (hit.kind == HitKind::object && hit.object_index == object_index) ++hits;
    }
    return static_cast<double>(hits) / rays;
}

bool is_visited_object(const EnvironmentSpec& env, double x, double z, int object_index) {
    const auto& o = env.objects[object_index];
    return std::hypot(o.x - x, o.z - z) < kVisitDistance;
}

bool is_visited_room(const EnvironmentSpec& env, double x, double z, int room_label) {
    const auto label = room_at(env, x, z);
    return label && *label == room_label;
}

FeatureCache::FeatureCache(int rays, int num_classes, std::size_t n_walkthroughs, std::size_t T)
    : rays_(rays), num_classes_(num_classes), n_walkthroughs_(n_walkthroughs), T_(T) {
    data_.assign(n_walkthroughs * T * static_cast<std::size_t>(feature_dim(rays, num_classes)),
                 0.0f);
}

void FeatureCache::set_row(std::size_t walkthrough, std::size_t step, const FrameFeature& f) {
    const std::size_t dim = feature_dim(rays_, num_classes_);
    float* dst = data_.data() + (walkthrough * T_ + step) * dim;
    for (std::size_t i = 0; i < dim; ++i) dst[i] = static_cast<float>(f.values[i]);
}

FrameFeature FeatureCache::row(std::size_t walkthrough, std::size_t step) const {
    if (walkthrough >= n_walkthroughs_ || step >= T_)
        throw std::out_of_range("FeatureCache::row: index out of range");
    const std::size_t dim = feature_dim(rays_, num_classes_);
    FrameFeature f;
    f.rays = rays_;
    f.num_classes = num_classes_;
    f.values.resize(dim);
    const float* src = data_.data() + (walkthrough * T_ + step) * dim;
    for (std::size_t i = 0; i < dim; ++i) f.values[i] = src[i];
    return f;
}

void FeatureCache::save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("feature cache: cannot open for writing: " + path);
    os.write("EGFC", 4);
    const std::uint32_t header[5] = {1u, static_cast<std::uint32_t>(rays_),
                                     static_cast<std::uint32_t>(num_classes_),
                                     static_cast<std::uint32_t>(n_walkthroughs_),
                                     static_cast<std::uint32_t>(T_)};
    os.write(reinterpret_cast<const char*>(header), sizeof(header));
    os.write(reinterpret_cast<const char*>(data_.data()),
             static_cast<std::streamsize>(data_.size() * sizeof(float)));
    if (!os) throw IoError("feature cache: write failed: " + path);
}

FeatureCache FeatureCache::load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("feature cache: cannot open: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "EGFC", 4) != 0) throw IoError("feature cache: bad magic");
    std::uint32_t header[5];
    is.read(reinterpret_cast<char*>(header), sizeof(header));
    if (!is || header[0] != 1) throw IoError("feature cache: unsupported version");
    FeatureCache fc(static_cast<int>(header[1]), static_cast<int>(header[2]), header[3], header[4]);
    is.read(reinterpret_cast<char*>(fc.data_.data()),
            static_cast<std::streamsize>(fc.data_.size() * sizeof(float)));
    if (!is) throw IoError("feature cache: truncated data");
    return fc;
}

}  // namespace egomem
