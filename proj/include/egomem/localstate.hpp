#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "egomem/agent.hpp"
#include "egomem/worldgen.hpp"

namespace egomem {

// Direction codes: 0 = absent, 1 = forward, 2 = right, 3 = behind, 4 = left.
using LocalStateLabel = std::vector<std::uint8_t>;

struct DirectionParams {
    double delta = 3.0;  // meters; strict d < delta
};

// Clockwise angle in [0, 2pi) from the pose heading to the pose->target ray.
double relative_angle(const Pose& pose, double target_x, double target_z);

// Half-open 90-degree bins centered on the cardinal directions:
// [-45,45) -> 1 forward, [45,135) -> 2 right, [135,225) -> 3, [225,315) -> 4.
int discretize_direction(double angle);

// Per class: nearest instance (ties broken by lowest instance index); its
// direction if it is strictly within delta and visible from any angle, else 0.
LocalStateLabel local_state_label(const EnvironmentSpec& env, const Pose& pose,
                                  const DirectionParams& params = {});

// Independent exhaustive reimplementation (separate distance scan and
// brute-force sight-line marching); shares no code with local_state_label.
LocalStateLabel oracle_local_state(const EnvironmentSpec& env, const Pose& pose,
                                   const DirectionParams& params = {});

struct LabeledStep {
    std::string walkthrough_id;
    std::size_t step = 0;
    LocalStateLabel y;
};

std::string label_to_jsonl(const LabeledStep& row);
LabeledStep label_from_jsonl(const std::string& line);

}  // namespace egomem
