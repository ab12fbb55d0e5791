#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <deque>
#include <set>

#include "egomem/agent.hpp"
#include "egomem/util.hpp"
#include "egomem/worldgen.hpp"
#include "support.hpp"

using namespace egomem;

namespace {

// Independent flood fill over free cells (4-connectivity).
std::size_t flood_free_count(const EnvironmentSpec& env) {
    std::vector<std::uint8_t> seen(env.occupancy.size(), 0);
    std::deque<GridCell> frontier;
    for (int r = 0; r < env.height && frontier.empty(); ++r)
        for (int c = 0; c < env.width && frontier.empty(); ++c)
            if (!env.obstacle(c, r)) {
                frontier.push_back({c, r});
                seen[static_cast<std::size_t>(r) * env.width + c] = 1;
            }
    std::size_t count = 0;
    while (!frontier.empty()) {
        const GridCell cur = frontier.front();
        frontier.pop_front();
        ++count;
        const int dc[] = {1, -1, 0, 0}, dr[] = {0, 0, 1, -1};
        for (int k = 0; k < 4; ++k) {
            const int c = cur.col + dc[k], r = cur.row + dr[k];
            if (c < 0 || r < 0 || c >= env.width || r >= env.height) continue;
            const std::size_t idx = static_cast<std::size_t>(r) * env.width + c;
            if (seen[idx] || env.obstacle(c, r)) continue;
            seen[idx] = 1;
            frontier.push_back({c, r});
        }
    }
    return count;
}

std::size_t free_count(const EnvironmentSpec& env) {
    std::size_t n = 0;
    for (std::uint8_t o : env.occupancy) n += o == 0 ? 1 : 0;
    return n;
}

}  // namespace

TEST_CASE("generate_environment: same seed gives byte-identical serialization") {
    const std::string a = environment_to_json(generate_environment(7));
    const std::string b = environment_to_json(generate_environment(7));
    CHECK(a == b);
    CHECK(fnv1a_hex(a) == fnv1a_hex(b));
}

TEST_CASE("generate_environment: two rooms, connected free space") {
    WorldgenParams params;
    params.n_rooms = 2;
    const EnvironmentSpec env = generate_environment(3, params);
    CHECK(env.rooms.size() == 2);
    CHECK(flood_free_count(env) == free_count(env));
    CHECK(check_environment(env).empty());
}

TEST_CASE("generate_environment: invariants hold over 100 seeds") {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const EnvironmentSpec env = generate_environment(seed);
        const auto violations = check_environment(env);
        INFO("seed ", seed, violations.empty() ? "" : (": " + violations.front()));
        CHECK(violations.empty());
        CHECK(flood_free_count(env) == free_count(env));
    }
}

TEST_CASE("generate_environment: infeasible parameters rejected") {
    WorldgenParams params;
    params.n_rooms = 200;
    params.grid_size_x = 8.0;
    params.grid_size_z = 8.0;
    CHECK_THROWS_AS(generate_environment(1, params), GenerationError);
}

TEST_CASE("navigable_cells: open 10x10 grid has an 8x8 navigable interior") {
    EnvironmentSpec env;
    env.width = env.height = 10;
    env.grid_resolution = 0.125;
    env.occupancy.assign(100, 0);
    const auto cells = navigable_cells(env);
    CHECK(cells.size() == 64);
    for (const GridCell& c : cells) {
        CHECK(c.col >= 1);
        CHECK(c.col <= 8);
        CHECK(c.row >= 1);
        CHECK(c.row <= 8);
    }
    CHECK_FALSE(is_navigable(env, 0, 5));  // hugs the boundary
}

TEST_CASE("navigable_cells: cell adjacent to a wall is not navigable") {
    EnvironmentSpec env = testsupport::box_env(4.0);
    CHECK_FALSE(is_navigable(env, 1, 5));   // next to the left border wall
    CHECK(is_navigable(env, 5, 5));
}

TEST_CASE("navigable_cells matches a brute-force neighborhood scan") {
    const EnvironmentSpec env = generate_environment(42);
    const auto cells = navigable_cells(env);
    std::set<GridCell> fast(cells.begin(), cells.end());
    std::set<GridCell> slow;
    for (int r = 0; r < env.height; ++r)
        for (int c = 0; c < env.width; ++c) {
            bool ok = !env.obstacle(c, r);
            for (int dr = -1; dr <= 1 && ok; ++dr)
                for (int dc = -1; dc <= 1 && ok; ++dc) ok = !env.obstacle(c + dc, r + dr);
            if (ok) slow.insert({c, r});
        }
    CHECK(fast == slow);
}

TEST_CASE("room_at: centroid, doorway, and brute-force rectangle oracle") {
    const EnvironmentSpec env = generate_environment(11);
    for (const Room& room : env.rooms) {
        const double cx = (room.bounds.x0 + room.bounds.x1) / 2;
        const double cz = (room.bounds.z0 + room.bounds.z1) / 2;
        const auto label = room_at(env, cx, cz);
        REQUIRE(label.has_value());
        CHECK(*label == room.label);
    }
    // a free cell outside every room rectangle is a doorway
    bool found_door = false;
    for (int r = 0; r < env.height && !found_door; ++r)
        for (int c = 0; c < env.width && !found_door; ++c) {
            if (env.obstacle(c, r)) continue;
            const double x = env.cell_center_x(c), z = env.cell_center_z(r);
            const bool inside_any = std::any_of(env.rooms.begin(), env.rooms.end(),
                                                [&](const Room& rm) { return rm.bounds.contains(x, z); });
            if (!inside_any) {
                CHECK_FALSE(room_at(env, x, z).has_value());
                found_door = true;
            }
        }
    CHECK(found_door);

    Rng rng(99);
    for (int i = 0; i < 1000; ++i) {
        const double x = rng.uniform(0.0, env.width_m() - 1e-9);
        const double z = rng.uniform(0.0, env.height_m() - 1e-9);
        std::optional<int> oracle;
        for (const Room& room : env.rooms)
            if (room.bounds.contains(x, z)) oracle = room.label;
        CHECK(room_at(env, x, z) == oracle);
    }
    CHECK_THROWS(room_at(env, -1.0, 2.0));
}

TEST_CASE("environment JSON round trip") {
    const EnvironmentSpec env = generate_environment(23);
    const EnvironmentSpec back = environment_from_json(environment_to_json(env));
    CHECK(environment_to_json(back) == environment_to_json(env));
}

// --- agent -------------------------------------------------------------------

TEST_CASE("pose heading conventions") {
    Pose p;
    p.heading = 0;
    CHECK(p.dir_x() == doctest::Approx(0).epsilon(1e-12));
    CHECK(p.dir_z() == doctest::Approx(1).epsilon(1e-12));
    p.heading = 3;  // 90 degrees clockwise from +z
    CHECK(p.dir_x() == doctest::Approx(1).epsilon(1e-12));
    CHECK(std::abs(p.dir_z()) < 1e-12);
}

TEST_CASE("step: inverse turns and full rotation") {
    const EnvironmentSpec env = testsupport::box_env();
    Pose p{4.0, 4.0, 2};
    const Pose back = step(env, step(env, p, Action::turn_left), Action::turn_right);
    CHECK(back.heading == p.heading);
    CHECK(back.x == p.x);
    Pose q = p;
    for (int i = 0; i < 12; ++i) q = step(env, q, Action::turn_left);
    CHECK(q.heading == p.heading);
}

TEST_CASE("step: forward into a wall is a no-op") {
    const EnvironmentSpec env = testsupport::box_env();
    // facing the left border wall, 0.1m away from its inner face
    Pose p{0.225, 4.0, 9};
    const Pose q = step(env, p, Action::forward);
    CHECK(q.x == p.x);
    CHECK(q.z == p.z);
    CHECK(q.heading == p.heading);
}

TEST_CASE("plan_shortest_path: trivial and straight-line cases") {
    const EnvironmentSpec env = testsupport::box_env();
    const Pose start{env.cell_center_x(32), env.cell_center_z(32), 0};
    CHECK(plan_shortest_path(env, start, {32, 32}).empty());

    const auto plan = plan_shortest_path(env, start, {32, 40});  // 1.0m straight ahead
    REQUIRE(plan.size() == 4);
    for (Action a : plan) CHECK(a == Action::forward);
}

TEST_CASE("plan_shortest_path: unreachable goal errors") {
    const EnvironmentSpec env = testsupport::box_env();
    const Pose start{4.0, 4.0, 0};
    CHECK_THROWS_AS(plan_shortest_path(env, start, {0, 0}), PlanningError);
}

TEST_CASE("plan length equals the BFS-distance oracle on 50 random pairs") {
    const EnvironmentSpec env = generate_environment(17);
    const auto cells = navigable_cells(env);
    REQUIRE(cells.size() > 1);
    Rng rng(1234);
    for (int i = 0; i < 50; ++i) {
        const GridCell from = cells[rng.uniform_int(cells.size())];
        const GridCell goal = cells[rng.uniform_int(cells.size())];
        const Pose start{env.cell_center_x(from.col), env.cell_center_z(from.row),
                         static_cast<int>(rng.uniform_int(std::uint64_t{12}))};
        const auto plan = plan_shortest_path(env, start, goal);
        CHECK(static_cast<int>(plan.size()) == bfs_plan_distance(env, start, goal));
        // replaying the plan actually reaches the goal cell
        const auto poses = replay_actions(env, start, plan);
        CHECK(env.cell_of(poses.back().x, poses.back().z) == goal);
    }
}

TEST_CASE("generate_walkthrough: determinism, navigability, replay") {
    const EnvironmentSpec env = generate_environment(31);
    const Walkthrough a = generate_walkthrough(env, 5, 128);
    const Walkthrough b = generate_walkthrough(env, 5, 128);
    CHECK(walkthrough_to_jsonl(a) == walkthrough_to_jsonl(b));
    CHECK(a.T() == 128);
    CHECK(a.actions.size() == 127);

    for (const Pose& p : a.poses) {
        const GridCell c = env.cell_of(p.x, p.z);
        CHECK(is_navigable(env, c.col, c.row));
        CHECK(p.heading >= 0);
        CHECK(p.heading < 12);
    }

    const auto replayed = replay_actions(env, a.poses.front(), a.actions);
    REQUIRE(replayed.size() == a.poses.size());
    for (std::size_t t = 0; t < replayed.size(); ++t) {
        CHECK(replayed[t].x == doctest::Approx(a.poses[t].x).epsilon(1e-12));
        CHECK(replayed[t].z == doctest::Approx(a.poses[t].z).epsilon(1e-12));
        CHECK(replayed[t].heading == a.poses[t].heading);
    }
}

TEST_CASE("walkthrough JSONL round trip") {
    const EnvironmentSpec env = generate_environment(31);
    const Walkthrough w = generate_walkthrough(env, 9, 64);
    const Walkthrough back = walkthrough_from_jsonl(walkthrough_to_jsonl(w));
    CHECK(walkthrough_to_jsonl(back) == walkthrough_to_jsonl(w));
    CHECK(back.env_id == env.id);
}

TEST_CASE("cluster_navigable is deterministic and in free space") {
    const EnvironmentSpec env = generate_environment(13);
    const auto a = cluster_navigable(env, 8, 77);
    const auto b = cluster_navigable(env, 8, 77);
    CHECK(a == b);
    CHECK(a.size() == 8);
}
