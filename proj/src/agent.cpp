#include "egomem/agent.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numbers>

#include <json.hpp>

#include "egomem/util.hpp"

namespace egomem {

namespace {
constexpr double kBinAngle = std::numbers::pi / 6.0;
}

double Pose::theta() const { return heading * kBinAngle; }
double Pose::dir_x() const { return std::sin(theta()); }
double Pose::dir_z() const { return std::cos(theta()); }

Pose step(const EnvironmentSpec& env, const Pose& pose, Action action) {
    switch (action) {
        case Action::turn_left: {
            Pose p = pose;
            p.heading = (p.heading + kHeadingBins - 1) % kHeadingBins;
            return p;
        }
        case Action::turn_right: {
            Pose p = pose;
            p.heading = (p.heading + 1) % kHeadingBins;
            return p;
        }
        case Action::forward: {
            const double nx = pose.x + kForwardStep * pose.dir_x();
            const double nz = pose.z + kForwardStep * pose.dir_z();
            const GridCell dest = env.cell_of(nx, nz);
            if (!is_navigable(env, dest.col, dest.row)) return pose;
            // sweep the segment for safety (intermediate cells must be free)
            for (int k = 1; k <= 4; ++k) {
                const double t = k / 4.0;
                if (env.obstacle_at(pose.x + t * (nx - pose.x), pose.z + t * (nz - pose.z)))
                    return pose;
            }
            Pose p = pose;
            p.x = nx;
            p.z = nz;
            return p;
        }
    }
    return pose;
}

namespace {

struct SearchNode {
    Pose pose;
    int parent = -1;
    Action action = Action::forward;
};

std::size_t state_key(const EnvironmentSpec& env, const Pose& p) {
    const GridCell c = env.cell_of(p.x, p.z);
    return (static_cast<std::size_t>(c.row) * env.width + c.col) * kHeadingBins + p.heading;
}

}  // namespace

std::vector<Action> plan_shortest_path(const EnvironmentSpec& env, const Pose& start,
                                       GridCell goal) {
    if (!is_navigable(env, goal.col, goal.row))
        throw PlanningError("plan_shortest_path: goal cell is not navigable");
    const GridCell start_cell = env.cell_of(start.x, start.z);
    if (start_cell == goal) return {};

    std::vector<std::uint8_t> visited(
        static_cast<std::size_t>(env.width) * env.height * kHeadingBins, 0);
    std::vector<SearchNode> nodes;
    nodes.push_back({start, -1, Action::forward});
    visited[state_key(env, start)] = 1;
    std::deque<int> queue = {0};

    const Action order[] = {Action::forward, Action::turn_left, Action::turn_right};
    while (!queue.empty()) {
        const int cur = queue.front();
        queue.pop_front();
        for (Action a : order) {
            const Pose next = step(env, nodes[cur].pose, a);
            const std::size_t key = state_key(env, next);
            if (visited[key]) continue;
            visited[key] = 1;
            nodes.push_back({next, cur, a});
            const int idx = static_cast<int>(nodes.size()) - 1;
            if (env.cell_of(next.x, next.z) == goal) {
                std::vector<Action> plan;
                for (int n = idx; n > 0; n = nodes[n].parent) plan.push_back(nodes[n].action);
                std::reverse(plan.begin(), plan.end());
                return plan;
            }
            queue.push_back(idx);
        }
    }
    throw PlanningError("plan_shortest_path: goal unreachable from start");
}

int bfs_plan_distance(const EnvironmentSpec& env, const Pose& start, GridCell goal) {
    if (env.cell_of(start.x, start.z) == goal) return 0;
    std::vector<int> dist(static_cast<std::size_t>(env.width) * env.height * kHeadingBins, -1);
    std::deque<Pose> frontier = {start};
    dist[state_key(env, start)] = 0;
    while (!frontier.empty()) {
        const Pose cur = frontier.front();
        frontier.pop_front();
        const int d = dist[state_key(env, cur)];
        for (Action a : {Action::forward, Action::turn_left, Action::turn_right}) {
            const Pose next = step(env, cur, a);
            const std::size_t key = state_key(env, next);
            if (dist[key] >= 0) continue;
            dist[key] = d + 1;
            if (env.cell_of(next.x, next.z) == goal) return d + 1;
            frontier.push_back(next);
        }
    }
    return -1;
}

std::vector<std::pair<double, double>> cluster_navigable(const EnvironmentSpec& env,
                                                         std::size_t k, std::uint64_t seed) {
    const auto cells = navigable_cells(env);
    if (cells.empty()) throw PlanningError("cluster_navigable: no navigable cells");
    k = std::min(k, cells.size());
    std::vector<std::pair<double, double>> points;
    points.reserve(cells.size());
    for (const auto& c : cells)
        points.emplace_back(env.cell_center_x(c.col), env.cell_center_z(c.row));

    Rng rng(derive_seed(seed, 0x6b6d65616e73ULL));  // kmeans stream
    auto dist2 = [](const std::pair<double, double>& a, const std::pair<double, double>& b) {
        const double dx = a.first - b.first, dz = a.second - b.second;
        return dx * dx + dz * dz;
    };

    // k-means++ seeding
    std::vector<std::pair<double, double>> centroids;
    centroids.push_back(points[rng.uniform_int(points.size())]);
    std::vector<double> d2(points.size());
    while (centroids.size() < k) {
        double total = 0;
        for (std::size_t i = 0; i < points.size(); ++i) {
            double best = std::numeric_limits<double>::max();
            for (const auto& c : centroids) best = std::min(best, dist2(points[i], c));
            d2[i] = best;
            total += best;
        }
        double u = rng.uniform() * total;
        std::size_t pick = points.size() - 1;
        for (std::size_t i = 0; i < points.size(); ++i) {
            u -= d2[i];
            if (u < 0) {
                pick = i;
                break;
            }
        }
        centroids.push_back(points[pick]);
    }

    // Lloyd iterations, fixed count
    std::vector<std::size_t> assign(points.size());
    for (int iter = 0; iter < 20; ++iter) {
        for (std::size_t i = 0; i < points.size(); ++i) {
            double best = std::numeric_limits<double>::max();
            std::size_t bi = 0;
            for (std::size_t c = 0; c < centroids.size(); ++c) {
                const double d = dist2(points[i], centroids[c]);
                if (d < best) {
                    best = d;
                    bi = c;
                }
            }
            assign[i] = bi;
        }
        std::vector<double> sx(centroids.size(), 0), sz(centroids.size(), 0);
        std::vector<std::size_t> n(centroids.size(), 0);
        for (std::size_t i = 0; i < points.size(); ++i) {
            sx[assign[i]] += points[i].first;
            sz[assign[i]] += points[i].second;
            ++n[assign[i]];
        }
        for (std::size_t c = 0; c < centroids.size(); ++c)
            if (n[c] > 0) centroids[c] = {sx[c] / n[c], sz[c] / n[c]};
    }
    return centroids;
}

namespace {

GridCell snap_to_navigable(const EnvironmentSpec& env, double x, double z,
                           const std::vector<GridCell>& nav) {
    GridCell best = nav.front();
    double best_d = std::numeric_limits<double>::max();
    for (const auto& c : nav) {
        const double dx = env.cell_center_x(c.col) - x, dz = env.cell_center_z(c.row) - z;
        const double d = dx * dx + dz * dz;
        if (d < best_d) {
            best_d = d;
            best = c;
        }
    }
    return best;
}

}  // namespace

Walkthrough generate_walkthrough(const EnvironmentSpec& env, std::uint64_t seed, std::size_t T) {
    if (T < 1) throw std::invalid_argument("generate_walkthrough: T must be >= 1");
    const auto nav = navigable_cells(env);
    if (nav.empty()) throw PlanningError("generate_walkthrough: environment has no navigable space");

    // cluster count scales with free area, 4..64
    const double free_area =
        static_cast<double>(nav.size()) * env.grid_resolution * env.grid_resolution;
    const std::size_t C =
        std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(free_area / 4.0)), 4, 64);
    const auto centroids = cluster_navigable(env, C, derive_seed(seed, env.seed));

    Rng rng(derive_seed(seed, env.seed, 0x77616c6bULL));  // walk stream

    const std::size_t start_idx = rng.uniform_int(centroids.size());
    const GridCell start_cell =
        snap_to_navigable(env, centroids[start_idx].first, centroids[start_idx].second, nav);
    Pose pose{env.cell_center_x(start_cell.col), env.cell_center_z(start_cell.row),
              static_cast<int>(rng.uniform_int(kHeadingBins))};

    Walkthrough w;
    w.env_id = env.id;
    w.seed = seed;
    w.poses.push_back(pose);

    while (w.actions.size() < T - 1) {
        // 8-16 goals nearest to the current position, shuffled (allows re-visits)
        const std::size_t n_goals = 8 + rng.uniform_int(9);
        std::vector<std::size_t> order(centroids.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            const double da = std::hypot(centroids[a].first - pose.x, centroids[a].second - pose.z);
            const double db = std::hypot(centroids[b].first - pose.x, centroids[b].second - pose.z);
            return da < db;
        });
        std::vector<std::size_t> goals(order.begin(),
                                       order.begin() + std::min(n_goals, order.size()));
        for (std::size_t i = goals.size(); i > 1; --i)
            std::swap(goals[i - 1], goals[rng.uniform_int(i)]);

        for (std::size_t g : goals) {
            const GridCell goal =
                snap_to_navigable(env, centroids[g].first, centroids[g].second, nav);
            std::vector<Action> plan;
            try {
                plan = plan_shortest_path(env, pose, goal);
            } catch (const PlanningError&) {
                continue;  // skip unreachable goals
            }
            for (Action a : plan) {
                pose = step(env, pose, a);
                w.actions.push_back(a);
                w.poses.push_back(pose);
                if (w.actions.size() == T - 1) return w;
            }
        }
    }
    return w;
}

std::vector<Pose> replay_actions(const EnvironmentSpec& env, const Pose& start,
                                 const std::vector<Action>& actions) {
    std::vector<Pose> poses = {start};
    Pose cur = start;
    for (Action a : actions) {
        cur = step(env, cur, a);
        poses.push_back(cur);
    }
    return poses;
}

std::string walkthrough_to_jsonl(const Walkthrough& w) {
    nlohmann::json j;
    j["env_id"] = w.env_id;
    j["seed"] = w.seed;
    auto poses = nlohmann::json::array();
    for (const auto& p : w.poses) poses.push_back({p.x, p.z, p.theta()});
    j["poses"] = std::move(poses);
    auto actions = nlohmann::json::array();
    for (Action a : w.actions) actions.push_back(static_cast<int>(a));
    j["actions"] = std::move(actions);
    return j.dump();
}

Walkthrough walkthrough_from_jsonl(const std::string& line) {
    nlohmann::json j = nlohmann::json::parse(line);
    Walkthrough w;
    w.env_id = j["env_id"].get<std::string>();
    w.seed = j["seed"].get<std::uint64_t>();
    for (const auto& pj : j["poses"]) {
        Pose p;
        p.x = pj[0].get<double>();
        p.z = pj[1].get<double>();
        p.heading = static_cast<int>(std::lround(pj[2].get<double>() / kBinAngle)) % kHeadingBins;
        w.poses.push_back(p);
    }
    for (const auto& aj : j["actions"]) w.actions.push_back(static_cast<Action>(aj.get<int>()));
    if (!w.poses.empty() && w.actions.size() + 1 != w.poses.size())
        throw std::invalid_argument("walkthrough: action/pose length mismatch");
    return w;
}

}  // namespace egomem
