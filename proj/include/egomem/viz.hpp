#pragma once

#include <string>
#include <vector>

#include "egomem/agent.hpp"
#include "egomem/envmemory.hpp"
#include "egomem/worldgen.hpp"

namespace egomem {

// Deterministic SVG document. The world-to-pixel transform (uniform scale,
// y = z) is recorded in the <metadata> element.
struct SceneRender {
    std::string svg;
};

struct RenderOptions {
    double px_per_m = 40.0;
    bool draw_rooms = true;
    bool draw_objects = true;
    long query_step = -1;  // >= 0: mark this pose
};

// Top-down map: obstacles dark, free space light, room fills labeled,
// class-colored object markers, trajectory as a white-to-blue gradient.
SceneRender render_topdown(const EnvironmentSpec& env, const Walkthrough& walkthrough,
                           const RenderOptions& options = {});

struct AttendedPose {
    std::size_t step = 0;
    double weight = 0;
};

// Top-down map plus the top-k attended memory poses for the query step, each
// annotated with its cross-attention weight (last decoder layer). The exact
// weight is carried in a data-weight attribute; the visible label is rounded
// to 2 decimals.
SceneRender render_attention(const EnvironmentSpec& env, const Walkthrough& walkthrough,
                             const EnvMemoryModel& model, std::size_t query_step,
                             std::size_t k = 3, const RenderOptions& options = {});

// The attended poses used by render_attention, for tests and tooling.
std::vector<AttendedPose> top_attended(const EnvMemoryModel& model,
                                       const Walkthrough& walkthrough,
                                       const EnvironmentSpec& env, std::size_t query_step,
                                       std::size_t k);

}  // namespace egomem
