#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "egomem/worldgen.hpp"

namespace egomem {

struct PlanningError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class Action : std::uint8_t { forward = 0, turn_left = 1, turn_right = 2 };

inline constexpr double kForwardStep = 0.25;  // meters
inline constexpr int kHeadingBins = 12;       // 30 degree increments, clockwise from +z

// Agent pose: metric position plus a discrete heading bin.
// theta = heading * pi/6, measured clockwise from +z (top-down view).
struct Pose {
    double x = 0, z = 0;
    int heading = 0;  // 0..11

    double theta() const;
    // unit heading direction (sin theta, cos theta)
    double dir_x() const;
    double dir_z() const;
};

struct Walkthrough {
    std::string env_id;
    std::uint64_t seed = 0;
    std::vector<Pose> poses;      // length T
    std::vector<Action> actions;  // length T-1
    std::size_t T() const { return poses.size(); }
};

// Applies one action. A blocked forward is a silent no-op.
Pose step(const EnvironmentSpec& env, const Pose& pose, Action action);

// BFS over (cell, heading) states; ties broken by the fixed action order
// forward < turn_left < turn_right. Goal is reached at any heading.
std::vector<Action> plan_shortest_path(const EnvironmentSpec& env, const Pose& start,
                                       GridCell goal);

// Independent distance-only BFS used as a test oracle for plan lengths.
int bfs_plan_distance(const EnvironmentSpec& env, const Pose& start, GridCell goal);

Walkthrough generate_walkthrough(const EnvironmentSpec& env, std::uint64_t seed, std::size_t T);

std::vector<Pose> replay_actions(const EnvironmentSpec& env, const Pose& start,
                                 const std::vector<Action>& actions);

// k-means over navigable cell centers (k-means++ seeding, fixed 20 iterations).
std::vector<std::pair<double, double>> cluster_navigable(const EnvironmentSpec& env,
                                                         std::size_t k, std::uint64_t seed);

std::string walkthrough_to_jsonl(const Walkthrough& w);
Walkthrough walkthrough_from_jsonl(const std::string& line);

}  // namespace egomem
