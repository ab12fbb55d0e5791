#include "egomem/localstate.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include <json.hpp>

#include "egomem/observation.hpp"

namespace egomem {

double relative_angle(const Pose& pose, double target_x, double target_z) {
    const double dx = target_x - pose.x;
    const double dz = target_z - pose.z;
    if (std::hypot(dx, dz) < 1e-12)
        throw std::invalid_argument("relative_angle: target coincides with pose");
    double a = std::atan2(dx, dz) - pose.theta();
    a = std::fmod(a, 2.0 * std::numbers::pi);
    if (a < 0) a += 2.0 * std::numbers::pi;
    return a;
}

int discretize_direction(double angle) {
    const double two_pi = 2.0 * std::numbers::pi;
    double a = std::fmod(angle, two_pi);
    if (a < 0) a += two_pi;
    // rotate so bin boundaries land on multiples of pi/2
    const double shifted = std::fmod(a + std::numbers::pi / 4.0, two_pi);
    const int idx = std::min(3, static_cast<int>(shifted / (std::numbers::pi / 2.0)));
    return idx + 1;  // 1 forward, 2 right, 3 behind, 4 left
}

LocalStateLabel local_state_label(const EnvironmentSpec& env, const Pose& pose,
                                  const DirectionParams& params) {
    const std::size_t n_classes = env.object_taxonomy.size();
    LocalStateLabel y(n_classes, 0);
    for (std::size_t c = 0; c < n_classes; ++c) {
        int nearest = -1;
        double nearest_d = std::numeric_limits<double>::max();
        for (std::size_t i = 0; i < env.objects.size(); ++i) {
            const auto& o = env.objects[i];
            if (o.class_id != static_cast<int>(c)) continue;
            const double d = std::hypot(o.x - pose.x, o.z - pose.z);
            if (d < nearest_d) {
                nearest_d = d;
                nearest = static_cast<int>(i);
            }
        }
        if (nearest < 0 || nearest_d >= params.delta) continue;
        if (!is_visible_any_angle(env, pose.x, pose.z, nearest)) continue;
        const auto& o = env.objects[nearest];
        y[c] = static_cast<std::uint8_t>(discretize_direction(relative_angle(pose, o.x, o.z)));
    }
    return y;
}

namespace {

// Brute-force sight line: march the open segment in 0.5mm steps and test each
// sample against the occupancy grid and every other object footprint.
// Deliberately shares no geometry code with the production predicates.
bool oracle_segment_clear(const EnvironmentSpec& env, double x0, double z0, double x1, double z1,
                          int skip_object) {
    const double len = std::sqrt((x1 - x0) * (x1 - x0) + (z1 - z0) * (z1 - z0));
    const long steps = std::lround(std::ceil(len / 0.0005));
    // footprints containing the viewpoint are transparent, matching cast_ray
    std::vector<bool> transparent(env.objects.size(), false);
    for (std::size_t j = 0; j < env.objects.size(); ++j) {
        const double ddx = x0 - env.objects[j].x;
        const double ddz = z0 - env.objects[j].z;
        const double r = env.objects[j].footprint_radius;
        transparent[j] = ddx * ddx + ddz * ddz <= r * r;
    }
    for (long k = 1; k < steps; ++k) {
        const double t = static_cast<double>(k) / static_cast<double>(steps);
        const double px = x0 + t * (x1 - x0);
        const double pz = z0 + t * (z1 - z0);
        const int col = static_cast<int>(std::floor(px / env.grid_resolution));
        const int row = static_cast<int>(std::floor(pz / env.grid_resolution));
        if (col < 0 || row < 0 || col >= static_cast<int>(env.width) ||
            row >= static_cast<int>(env.height))
            return false;
        if (env.occupancy[static_cast<std::size_t>(row) * env.width + col]) return false;
        for (std::size_t j = 0; j < env.objects.size(); ++j) {
            if (static_cast<int>(j) == skip_object || transparent[j]) continue;
            const double ddx = px - env.objects[j].x;
            const double ddz = pz - env.objects[j].z;
            const double r = env.objects[j].footprint_radius;
            if (ddx * ddx + ddz * ddz < r * r) return false;
        }
    }
    return true;
}

bool oracle_visible(const EnvironmentSpec& env, double x, double z, int object_index) {
    const auto& o = env.objects[object_index];
    if (oracle_segment_clear(env, x, z, o.x, o.z, object_index)) return true;
    for (int k = 0; k < 8; ++k) {
        const double a = k * (std::numbers::pi / 4.0);
        const double px = o.x + o.footprint_radius * std::cos(a);
        const double pz = o.z + o.footprint_radius * std::sin(a);
        if (oracle_segment_clear(env, x, z, px, pz, object_index)) return true;
    }
    return false;
}

int oracle_direction(const Pose& pose, double tx, double tz) {
    double a = std::atan2(tx - pose.x, tz - pose.z) - pose.heading * (std::numbers::pi / 6.0);
    while (a < 0) a += 2.0 * std::numbers::pi;
    while (a >= 2.0 * std::numbers::pi) a -= 2.0 * std::numbers::pi;
    const double deg = a * 180.0 / std::numbers::pi;
    if (deg < 45.0 || deg >= 315.0) return 1;
    if (deg < 135.0) return 2;
    if (deg < 225.0) return 3;
    return 4;
}

}  // namespace

LocalStateLabel oracle_local_state(const EnvironmentSpec& env, const Pose& pose,
                                   const DirectionParams& params) {
    LocalStateLabel y(env.object_taxonomy.size(), 0);
    for (std::size_t c = 0; c < env.object_taxonomy.size(); ++c) {
        // exhaustive scan, keeping the first instance at the minimum distance
        int best = -1;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < env.objects.size(); ++i) {
            if (env.objects[i].class_id != static_cast<int>(c)) continue;
            const double dx = env.objects[i].x - pose.x;
            const double dz = env.objects[i].z - pose.z;
            const double d = std::sqrt(dx * dx + dz * dz);
            if (d < best_d) {
                best_d = d;
                best = static_cast<int>(i);
            }
        }
        if (best < 0) continue;
        if (!(best_d < params.delta)) continue;
        if (!oracle_visible(env, pose.x, pose.z, best)) continue;
        y[c] = static_cast<std::uint8_t>(
            oracle_direction(pose, env.objects[best].x, env.objects[best].z));
    }
    return y;
}

std::string label_to_jsonl(const LabeledStep& row) {
    nlohmann::json j;
    j["walkthrough_id"] = row.walkthrough_id;
    j["step"] = row.step;
    auto y = nlohmann::json::array();
    for (auto v : row.y) y.push_back(static_cast<int>(v));
    j["y"] = std::move(y);
    return j.dump();
}

LabeledStep label_from_jsonl(const std::string& line) {
    nlohmann::json j = nlohmann::json::parse(line);
    LabeledStep row;
    row.walkthrough_id = j["walkthrough_id"].get<std::string>();
    row.step = j["step"].get<std::size_t>();
    for (const auto& v : j["y"]) row.y.push_back(static_cast<std::uint8_t>(v.get<int>()));
    return row;
}

}  // namespace egomem
