#include "egomem/viz.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "egomem/observation.hpp"
#include "egomem/util.hpp"

namespace egomem {

namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

std::string fmt_exact(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

const char* kRoomFill[] = {"#fde8d0", "#d0e8fd", "#d8f5d8", "#f5d8ec", "#fdf6c8", "#e2d8f5"};
const char* kObjectFill[] = {"#d62728", "#1f77b4", "#2ca02c", "#9467bd",
                             "#8c564b", "#e377c2", "#ff7f0e", "#17becf"};

struct Canvas {
    std::ostringstream os;
    double scale = 40.0;

    double px(double m) const { return m * scale; }
};

void open_svg(Canvas& c, const EnvironmentSpec& env) {
    const double w = c.px(env.width_m()), h = c.px(env.height_m());
    c.os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(w) << "\" height=\""
         << fmt(h) << "\" viewBox=\"0 0 " << fmt(w) << " " << fmt(h) << "\">\n";
    c.os << "<metadata>transform: px = " << fmt(c.scale)
         << " * meters; x right, z down; env " << env.id << "</metadata>\n";
    c.os << "<rect width=\"" << fmt(w) << "\" height=\"" << fmt(h) << "\" fill=\"#f8f8f8\"/>\n";
}

void draw_rooms(Canvas& c, const EnvironmentSpec& env) {
    for (const Room& room : env.rooms) {
        const double x = c.px(room.bounds.x0), z = c.px(room.bounds.z0);
        const double w = c.px(room.bounds.x1 - room.bounds.x0);
        const double h = c.px(room.bounds.z1 - room.bounds.z0);
        const char* fill = kRoomFill[room.label % 6];
        c.os << "<rect x=\"" << fmt(x) << "\" y=\"" << fmt(z) << "\" width=\"" << fmt(w)
             << "\" height=\"" << fmt(h) << "\" fill=\"" << fill << "\"/>\n";
        c.os << "<text x=\"" << fmt(x + 4) << "\" y=\"" << fmt(z + 14)
             << "\" font-size=\"11\" fill=\"#555\">" << env.room_taxonomy[room.label]
             << "</text>\n";
    }
}

void draw_occupancy(Canvas& c, const EnvironmentSpec& env) {
    const double res = env.grid_resolution;
    for (int row = 0; row < env.height; ++row) {
        int run_start = -1;
        for (int col = 0; col <= env.width; ++col) {
            const bool solid = col < env.width && env.obstacle(col, row);
            if (solid && run_start < 0) run_start = col;
            if (!solid && run_start >= 0) {
                c.os << "<rect x=\"" << fmt(c.px(run_start * res)) << "\" y=\""
                     << fmt(c.px(row * res)) << "\" width=\"" << fmt(c.px((col - run_start) * res))
                     << "\" height=\"" << fmt(c.px(res)) << "\" fill=\"#333333\"/>\n";
                run_start = -1;
            }
        }
    }
}

void draw_objects(Canvas& c, const EnvironmentSpec& env) {
    for (const ObjectInstance& o : env.objects) {
        c.os << "<circle cx=\"" << fmt(c.px(o.x)) << "\" cy=\"" << fmt(c.px(o.z)) << "\" r=\""
             << fmt(c.px(o.footprint_radius)) << "\" fill=\"" << kObjectFill[o.class_id % 8]
             << "\" stroke=\"#222\" stroke-width=\"1\"/>\n";
    }
}

void draw_trajectory(Canvas& c, const Walkthrough& w) {
    const std::size_t n = w.poses.size();
    for (std::size_t i = 0; i + 1 < n; ++i) {
        const double t = n > 2 ? static_cast<double>(i) / static_cast<double>(n - 2) : 1.0;
        const int r = static_cast<int>(255 * (1.0 - t));
        const int g = static_cast<int>(255 * (1.0 - t) + 80 * t);
        c.os << "<line x1=\"" << fmt(c.px(w.poses[i].x)) << "\" y1=\"" << fmt(c.px(w.poses[i].z))
             << "\" x2=\"" << fmt(c.px(w.poses[i + 1].x)) << "\" y2=\""
             << fmt(c.px(w.poses[i + 1].z)) << "\" stroke=\"rgb(" << r << "," << g
             << ",255)\" stroke-width=\"2\"/>\n";
    }
}

void draw_pose_marker(Canvas& c, const Pose& p, const char* fill, const char* label) {
    c.os << "<circle cx=\"" << fmt(c.px(p.x)) << "\" cy=\"" << fmt(c.px(p.z))
         << "\" r=\"5\" fill=\"" << fill << "\" stroke=\"#000\" stroke-width=\"1\"/>\n";
    c.os << "<line x1=\"" << fmt(c.px(p.x)) << "\" y1=\"" << fmt(c.px(p.z)) << "\" x2=\""
         << fmt(c.px(p.x + 0.3 * p.dir_x())) << "\" y2=\"" << fmt(c.px(p.z + 0.3 * p.dir_z()))
         << "\" stroke=\"#000\" stroke-width=\"2\"/>\n";
    if (label && *label)
        c.os << "<text x=\"" << fmt(c.px(p.x) + 7) << "\" y=\"" << fmt(c.px(p.z) - 7)
             << "\" font-size=\"11\" fill=\"#000\">" << label << "</text>\n";
}

void check_match(const EnvironmentSpec& env, const Walkthrough& w) {
    if (w.env_id != env.id)
        throw std::invalid_argument("render: walkthrough env_id '" + w.env_id +
                                    "' does not match environment '" + env.id + "'");
}

}  // namespace

SceneRender render_topdown(const EnvironmentSpec& env, const Walkthrough& walkthrough,
                           const RenderOptions& options) {
    check_match(env, walkthrough);
    Canvas c;
    c.scale = options.px_per_m;
    open_svg(c, env);
    if (options.draw_rooms) draw_rooms(c, env);
    draw_occupancy(c, env);
    if (options.draw_objects) draw_objects(c, env);
    draw_trajectory(c, walkthrough);
    if (options.query_step >= 0 &&
        options.query_step < static_cast<long>(walkthrough.poses.size()))
        draw_pose_marker(c, walkthrough.poses[options.query_step], "#ffd700", "query");
    c.os << "</svg>\n";
    return {c.os.str()};
}

std::vector<AttendedPose> top_attended(const EnvMemoryModel& model,
                                       const Walkthrough& walkthrough,
                                       const EnvironmentSpec& env, std::size_t query_step,
                                       std::size_t k) {
    std::vector<FrameFeature> features;
    features.reserve(walkthrough.poses.size());
    for (const Pose& p : walkthrough.poses)
        features.push_back(egocentric_features(env, p, static_cast<int>(model.config.rays)));

    Rng rng(0);  // inference-mode sampling draws nothing
    const EnvFeatureResult result =
        environment_feature(model, features, walkthrough.poses, query_step, model.config.K,
                            SampleMode::inference, rng);
    const std::vector<double>& attn = result.cross_attention.back();

    std::vector<std::size_t> order(attn.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return attn[a] > attn[b]; });

    std::vector<AttendedPose> top;
    for (std::size_t i = 0; i < std::min(k, order.size()); ++i)
        top.push_back({result.memory_steps[order[i]], attn[order[i]]});
    return top;
}

SceneRender render_attention(const EnvironmentSpec& env, const Walkthrough& walkthrough,
                             const EnvMemoryModel& model, std::size_t query_step, std::size_t k,
                             const RenderOptions& options) {
    check_match(env, walkthrough);
    if (query_step >= walkthrough.poses.size())
        throw std::out_of_range("render_attention: query step out of range");
    const std::vector<AttendedPose> top =
        top_attended(model, walkthrough, env, query_step, std::min(k, model.config.K));

    RenderOptions opts = options;
    opts.query_step = static_cast<long>(query_step);
    SceneRender base = render_topdown(env, walkthrough, opts);

    Canvas c;
    c.scale = opts.px_per_m;
    for (std::size_t i = 0; i < top.size(); ++i) {
        const Pose& p = walkthrough.poses[top[i].step];
        char label[32];
        std::snprintf(label, sizeof(label), "%.2f", top[i].weight);
        c.os << "<g class=\"attended\" data-step=\"" << top[i].step << "\" data-weight=\""
             << fmt_exact(top[i].weight) << "\">\n";
        c.os << "<rect x=\"" << fmt(c.px(p.x) - 6) << "\" y=\"" << fmt(c.px(p.z) - 6)
             << "\" width=\"12\" height=\"12\" fill=\"none\" stroke=\"#e11\" stroke-width=\"2\"/>\n";
        c.os << "<text x=\"" << fmt(c.px(p.x) + 8) << "\" y=\"" << fmt(c.px(p.z) + 4)
             << "\" font-size=\"11\" fill=\"#e11\">" << label << "</text>\n";
        c.os << "</g>\n";
    }
    c.os << "</svg>\n";

    // splice the overlay before the closing tag of the base document
    std::string svg = base.svg;
    const std::size_t pos = svg.rfind("</svg>");
    svg.replace(pos, std::string::npos, c.os.str());
    return {svg};
}

}  // namespace egomem
