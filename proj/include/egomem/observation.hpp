#pragma once

#include <string>
#include <vector>

#include "egomem/agent.hpp"
#include "egomem/worldgen.hpp"

namespace egomem {

inline constexpr int kDefaultRays = 24;
inline constexpr double kFov = std::numbers::pi / 2.0;  // 90 degrees
inline constexpr double kMaxRayDepth = 5.0;             // meters
inline constexpr double kSeenThreshold = 0.05;          // fraction of FOV rays
inline constexpr double kVisitDistance = 1.0;           // meters

// Per ray one block of |O|+2 slots: [wall, class 0..|O|-1, nothing].
// Exactly one slot per block is nonzero and holds the normalized depth
// (d / d_max, floored at 1e-3); the "nothing" slot holds 1.0.
struct FrameFeature {
    int rays = kDefaultRays;
    int num_classes = 0;
    std::vector<double> values;  // length rays * (num_classes + 2)

    int block() const { return num_classes + 2; }
    int size() const { return rays * block(); }
};

inline int feature_dim(int rays, int num_classes) { return rays * (num_classes + 2); }

enum class HitKind { none = 0, wall = 1, object = 2 };

struct RayHit {
    HitKind kind = HitKind::none;
    double distance = 0;  // meters, valid unless kind == none
    int object_index = -1;
};

// Exact first-hit query against the occupancy grid (grid DDA) and object
// footprints (analytic ray-circle). Circles containing the origin are
// transparent. (dir_x, dir_z) must be unit length.
RayHit cast_ray(const EnvironmentSpec& env, double x, double z, double dir_x, double dir_z,
                double max_dist);

// R rays spread evenly over the FOV centered on the pose heading
// (bin centers, leftmost first). Pure function of (env, pose).
FrameFeature egocentric_features(const EnvironmentSpec& env, const Pose& pose, int rays = kDefaultRays);

// True iff an unobstructed open segment exists from the position to the
// footprint center or one of 8 boundary samples of the object.
bool is_visible_any_angle(const EnvironmentSpec& env, double x, double z, int object_index);

// Fraction of FOV rays whose first hit is this object instance.
double seen_fraction(const EnvironmentSpec& env, const Pose& pose, int object_index,
                     int rays = kDefaultRays);

// Objects: euclidean distance < 1.0m regardless of visibility.
bool is_visited_object(const EnvironmentSpec& env, double x, double z, int object_index);
// Rooms: the position maps to this room label.
bool is_visited_room(const EnvironmentSpec& env, double x, double z, int room_label);

// Binary feature cache: header (magic "EGFC", version, R, |O|, F,
// n_walkthroughs, T), then f32 rows in (walkthrough, step) order.
class FeatureCache {
public:
    FeatureCache() = default;
    FeatureCache(int rays, int num_classes, std::size_t n_walkthroughs, std::size_t T);

    void set_row(std::size_t walkthrough, std::size_t step, const FrameFeature& f);
    FrameFeature row(std::size_t walkthrough, std::size_t step) const;

    int rays() const { return rays_; }
    int num_classes() const { return num_classes_; }
    std::size_t n_walkthroughs() const { return n_walkthroughs_; }
    std::size_t T() const { return T_; }

    void save(const std::string& path) const;
    static FeatureCache load(const std::string& path);

private:
    int rays_ = 0, num_classes_ = 0;
    std::size_t n_walkthroughs_ = 0, T_ = 0;
    std::vector<float> data_;
};

}  // namespace egomem
