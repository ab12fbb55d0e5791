#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>

#include "egomem/localstate.hpp"
#include "egomem/observation.hpp"
#include "egomem/util.hpp"
#include "support.hpp"

using namespace egomem;
using testsupport::add_object;
using testsupport::add_wall_column;
using testsupport::box_env;

namespace {

// Brute-force 0.5mm ray march used as the independent first-hit oracle.
RayHit march_ray(const EnvironmentSpec& env, double x, double z, double dx, double dz,
                 double max_dist) {
    std::vector<bool> excluded(env.objects.size());
    for (std::size_t i = 0; i < env.objects.size(); ++i) {
        const double ox = x - env.objects[i].x, oz = z - env.objects[i].z;
        excluded[i] = ox * ox + oz * oz <= env.objects[i].footprint_radius *
                                               env.objects[i].footprint_radius;
    }
    const double step = 5e-4;
    for (double t = step; t <= max_dist; t += step) {
        const double px = x + t * dx, pz = z + t * dz;
        for (std::size_t i = 0; i < env.objects.size(); ++i) {
            if (excluded[i]) continue;
            const double ox = px - env.objects[i].x, oz = pz - env.objects[i].z;
            if (ox * ox + oz * oz <= env.objects[i].footprint_radius *
                                         env.objects[i].footprint_radius)
                return {HitKind::object, t, static_cast<int>(i)};
        }
        if (px < 0 || pz < 0 || px >= env.width_m() || pz >= env.height_m())
            return {HitKind::wall, t, -1};
        if (env.obstacle_at(px, pz)) return {HitKind::wall, t, -1};
    }
    return {HitKind::none, 0, -1};
}

// Rotate a square environment by 90 degrees: (x, z) -> (L - z, x).
EnvironmentSpec rotate_env(const EnvironmentSpec& env) {
    REQUIRE(env.width == env.height);
    EnvironmentSpec out = env;
    for (int r = 0; r < env.height; ++r)
        for (int c = 0; c < env.width; ++c) {
            const int nc = env.height - 1 - r, nr = c;
            out.occupancy[static_cast<std::size_t>(nr) * env.width + nc] =
                env.occupancy[static_cast<std::size_t>(r) * env.width + c];
        }
    const double L = env.width_m();
    for (std::size_t i = 0; i < env.objects.size(); ++i) {
        out.objects[i].x = L - env.objects[i].z;
        out.objects[i].z = env.objects[i].x;
    }
    return out;
}

Pose rotate_pose(const Pose& p, double L) { return {L - p.z, p.x, (p.heading + 9) % 12}; }

}  // namespace

TEST_CASE("egocentric_features: wall one meter ahead") {
    const EnvironmentSpec env = box_env();
    const Pose pose{4.0, 1.125, 6};  // facing the top wall (inner face at z = 0.125)
    const FrameFeature single = egocentric_features(env, pose, 1);
    REQUIRE(single.values.size() == 10);
    CHECK(single.values[0] == doctest::Approx(0.2).epsilon(1e-9));  // wall slot, depth 1m / 5m
    for (int s = 1; s < 10; ++s) CHECK(single.values[s] == 0);

    const FrameFeature f = egocentric_features(env, pose);
    for (int i = 11; i <= 12; ++i) {  // the two center rays of 24
        const double* block = f.values.data() + static_cast<std::size_t>(i) * f.block();
        CHECK(block[0] == doctest::Approx(0.2).epsilon(2e-3));
        CHECK(block[9] == 0.0);
    }
}

TEST_CASE("egocentric_features: open space beyond 5m reads nothing") {
    const EnvironmentSpec env = box_env(14.0);
    const FrameFeature f = egocentric_features(env, {7.0, 7.0, 0});
    for (int r = 0; r < f.rays; ++r) {
        const double* block = f.values.data() + static_cast<std::size_t>(r) * f.block();
        CHECK(block[f.block() - 1] == 1.0);  // nothing slot
        for (int s = 0; s + 1 < f.block(); ++s) CHECK(block[s] == 0.0);
    }
}

TEST_CASE("feature blocks always have exactly one active slot") {
    const EnvironmentSpec env = generate_environment(19);
    const auto cells = navigable_cells(env);
    Rng rng(5);
    for (int i = 0; i < 50; ++i) {
        const GridCell c = cells[rng.uniform_int(cells.size())];
        const Pose pose{env.cell_center_x(c.col), env.cell_center_z(c.row),
                        static_cast<int>(rng.uniform_int(std::uint64_t{12}))};
        const FrameFeature f = egocentric_features(env, pose);
        for (int r = 0; r < f.rays; ++r) {
            const double* block = f.values.data() + static_cast<std::size_t>(r) * f.block();
            int active = 0;
            for (int s = 0; s < f.block(); ++s) {
                if (block[s] != 0) ++active;
                CHECK(block[s] >= 0.0);
                CHECK(block[s] <= 1.0);
            }
            CHECK(active == 1);
        }
    }
}

TEST_CASE("cast_ray agrees with a fine-step ray-march oracle") {
    const EnvironmentSpec env = generate_environment(29);
    const auto cells = navigable_cells(env);
    Rng rng(7);
    const double fov = std::numbers::pi / 2;
    std::size_t checked = 0;
    for (int i = 0; i < 200; ++i) {
        const GridCell c = cells[rng.uniform_int(cells.size())];
        const Pose pose{env.cell_center_x(c.col), env.cell_center_z(c.row),
                        static_cast<int>(rng.uniform_int(std::uint64_t{12}))};
        for (int r = 0; r < kDefaultRays; ++r) {
            const double a = pose.theta() - fov / 2 + (r + 0.5) * fov / kDefaultRays;
            const RayHit fast =
                cast_ray(env, pose.x, pose.z, std::sin(a), std::cos(a), kMaxRayDepth);
            const RayHit slow = march_ray(env, pose.x, pose.z, std::sin(a), std::cos(a),
                                          kMaxRayDepth);
            INFO("pose ", pose.x, ",", pose.z, " heading ", pose.heading, " ray ", r);
            CHECK(fast.kind == slow.kind);
            if (fast.kind != HitKind::none) {
                CHECK(std::abs(fast.distance - slow.distance) < 1.5e-3);
                if (fast.kind == HitKind::object)
                    CHECK(env.objects[fast.object_index].class_id ==
                          env.objects[slow.object_index].class_id);
            }
            ++checked;
        }
    }
    CHECK(checked == 200 * kDefaultRays);
}

TEST_CASE("egocentric_features is rotation consistent") {
    EnvironmentSpec env = box_env();
    add_wall_column(env, 34, 1, 40);
    add_object(env, 0, 2.0, 3.0);
    add_object(env, 3, 6.0, 5.5);
    add_object(env, 5, 4.8, 1.7);
    const EnvironmentSpec rotated = rotate_env(env);
    Rng rng(13);
    for (int i = 0; i < 40; ++i) {
        const Pose pose{rng.uniform(1.0, 3.5), rng.uniform(1.0, 7.0),
                        static_cast<int>(rng.uniform_int(std::uint64_t{12}))};
        if (env.obstacle_at(pose.x, pose.z)) continue;
        const FrameFeature a = egocentric_features(env, pose);
        const FrameFeature b = egocentric_features(rotated, rotate_pose(pose, env.width_m()));
        REQUIRE(a.values.size() == b.values.size());
        for (std::size_t k = 0; k < a.values.size(); ++k)
            CHECK(a.values[k] == doctest::Approx(b.values[k]).epsilon(1e-9));
    }
}

TEST_CASE("is_visible_any_angle: open room, wall occlusion, and segment oracle") {
    EnvironmentSpec env = box_env();
    add_object(env, 0, 6.0, 4.0);
    CHECK(is_visible_any_angle(env, 2.0, 4.0, 0));

    add_wall_column(env, 34, 1, 62);  // full-height dividing wall at x ~ 4.3
    CHECK_FALSE(is_visible_any_angle(env, 2.0, 4.0, 0));
}

TEST_CASE("is_visible_any_angle agrees with independent segment marching") {
    const EnvironmentSpec env = generate_environment(37);
    REQUIRE(!env.objects.empty());
    const auto cells = navigable_cells(env);
    Rng rng(21);
    // Walls and foreign object footprints both occlude; endpoints excluded.
    auto segment_clear = [&](double x0, double z0, double x1, double z1, int skip) {
        const double len = std::hypot(x1 - x0, z1 - z0);
        const int n = std::max(1, static_cast<int>(len / 2.5e-4));
        for (int k = 1; k < n; ++k) {
            const double t = static_cast<double>(k) / n;
            const double px = x0 + t * (x1 - x0), pz = z0 + t * (z1 - z0);
            if (env.obstacle_at(px, pz)) return false;
            for (std::size_t i = 0; i < env.objects.size(); ++i) {
                if (static_cast<int>(i) == skip) continue;
                const double r = env.objects[i].footprint_radius;
                const double sx = x0 - env.objects[i].x, sz = z0 - env.objects[i].z;
                if (sx * sx + sz * sz <= r * r) continue;  // contains the viewpoint
                const double ox = px - env.objects[i].x, oz = pz - env.objects[i].z;
                if (ox * ox + oz * oz <= r * r) return false;
            }
        }
        return true;
    };
    for (int i = 0; i < 500; ++i) {
        const GridCell c = cells[rng.uniform_int(cells.size())];
        const double x = env.cell_center_x(c.col), z = env.cell_center_z(c.row);
        const int obj = static_cast<int>(rng.uniform_int(env.objects.size()));
        bool oracle = segment_clear(x, z, env.objects[obj].x, env.objects[obj].z, obj);
        for (int s = 0; s < 8 && !oracle; ++s) {
            const double a = s * std::numbers::pi / 4;
            oracle = segment_clear(
                x, z, env.objects[obj].x + env.objects[obj].footprint_radius * std::sin(a),
                env.objects[obj].z + env.objects[obj].footprint_radius * std::cos(a), obj);
        }
        INFO("pair ", i, " object ", obj);
        CHECK(is_visible_any_angle(env, x, z, obj) == oracle);
    }
}

TEST_CASE("seen_fraction: behind the agent, and implies visibility") {
    EnvironmentSpec env = box_env();
    add_object(env, 2, 4.0, 2.0);
    const Pose facing_away{4.0, 4.0, 0};  // object is behind (towards -z)
    CHECK(seen_fraction(env, facing_away, 0) == 0.0);
    const Pose facing{4.0, 4.0, 6};
    CHECK(seen_fraction(env, facing, 0) > 0.0);

    const EnvironmentSpec gen = generate_environment(41);
    const auto cells = navigable_cells(gen);
    Rng rng(31);
    for (int i = 0; i < 200; ++i) {
        const GridCell c = cells[rng.uniform_int(cells.size())];
        const Pose pose{gen.cell_center_x(c.col), gen.cell_center_z(c.row),
                        static_cast<int>(rng.uniform_int(std::uint64_t{12}))};
        const int obj = static_cast<int>(rng.uniform_int(gen.objects.size()));
        if (seen_fraction(gen, pose, obj) > 0)
            CHECK(is_visible_any_angle(gen, pose.x, pose.z, obj));
    }
}

TEST_CASE("seen_fraction equals matching-ray count over R") {
    const EnvironmentSpec env = generate_environment(43);
    const auto cells = navigable_cells(env);
    Rng rng(33);
    const double fov = std::numbers::pi / 2;
    for (int i = 0; i < 30; ++i) {
        const GridCell c = cells[rng.uniform_int(cells.size())];
        const Pose pose{env.cell_center_x(c.col), env.cell_center_z(c.row),
                        static_cast<int>(rng.uniform_int(std::uint64_t{12}))};
        const int obj = static_cast<int>(rng.uniform_int(env.objects.size()));
        int hits = 0;
        for (int r = 0; r < kDefaultRays; ++r) {
            const double a = pose.theta() - fov / 2 + (r + 0.5) * fov / kDefaultRays;
            const RayHit h = cast_ray(env, pose.x, pose.z, std::sin(a), std::cos(a),
                                      kMaxRayDepth);
            hits += h.kind == HitKind::object && h.object_index == obj ? 1 : 0;
        }
        CHECK(seen_fraction(env, pose, obj) ==
              doctest::Approx(static_cast<double>(hits) / kDefaultRays).epsilon(1e-12));
    }
}

TEST_CASE("is_visited: threshold boundary and wall independence") {
    EnvironmentSpec env = box_env();
    add_object(env, 1, 4.0, 4.0);
    CHECK(is_visited_object(env, 4.0, 4.99, 0));
    CHECK_FALSE(is_visited_object(env, 4.0, 5.01, 0));

    EnvironmentSpec walled = box_env();
    add_object(walled, 1, 4.5, 4.0);
    add_wall_column(walled, 34, 1, 62);
    CHECK(is_visited_object(walled, 4.0, 4.0, 0));        // 0.5m away through a wall
    CHECK_FALSE(is_visible_any_angle(walled, 4.0, 4.0, 0));

    CHECK(is_visited_room(env, 4.0, 4.0, env.rooms[0].label));
    CHECK_FALSE(is_visited_room(env, 4.0, 4.0, env.rooms[0].label + 1));
}

TEST_CASE("feature cache round trips through disk at f32 precision") {
    const EnvironmentSpec env = generate_environment(47);
    const Pose pose{env.cell_center_x(env.width / 2), env.cell_center_z(env.height / 2), 3};
    FeatureCache cache(kDefaultRays, 8, 2, 3);
    const FrameFeature f = egocentric_features(env, pose);
    cache.set_row(1, 2, f);
    const std::string path =
        (std::filesystem::temp_directory_path() / "features_test.egfc").string();
    cache.save(path);
    const FeatureCache loaded = FeatureCache::load(path);
    CHECK(loaded.rays() == kDefaultRays);
    CHECK(loaded.num_classes() == 8);
    CHECK(loaded.n_walkthroughs() == 2);
    CHECK(loaded.T() == 3);
    const FrameFeature back = loaded.row(1, 2);
    REQUIRE(back.values.size() == f.values.size());
    for (std::size_t i = 0; i < f.values.size(); ++i)
        CHECK(back.values[i] == static_cast<double>(static_cast<float>(f.values[i])));
    std::filesystem::remove(path);
}

// --- localstate ---------------------------------------------------------------

TEST_CASE("relative_angle conventions") {
    const Pose p{4.0, 4.0, 0};  // facing +z
    CHECK(relative_angle(p, 4.0, 6.0) == doctest::Approx(0).epsilon(1e-12));
    CHECK(relative_angle(p, 6.0, 4.0) ==
          doctest::Approx(std::numbers::pi / 2).epsilon(1e-12));
    CHECK(relative_angle(p, 4.0, 2.0) == doctest::Approx(std::numbers::pi).epsilon(1e-12));
    CHECK_THROWS(relative_angle(p, 4.0, 4.0));
}

TEST_CASE("discretize_direction bins") {
    const double deg = std::numbers::pi / 180;
    CHECK(discretize_direction(0) == 1);
    CHECK(discretize_direction(45 * deg) == 2);  // half-open boundary
    CHECK(discretize_direction(200 * deg) == 3);
    CHECK(discretize_direction(135 * deg) == 3);
    CHECK(discretize_direction(225 * deg) == 4);
    CHECK(discretize_direction(315 * deg) == 1);
    CHECK(discretize_direction(350 * deg) == 1);
}

TEST_CASE("local_state_label: empty environment and single object ahead") {
    const EnvironmentSpec empty = box_env();
    const LocalStateLabel none = local_state_label(empty, {4.0, 4.0, 0});
    CHECK(none == LocalStateLabel(8, 0));
    CHECK(oracle_local_state(empty, {4.0, 4.0, 0}) == none);

    EnvironmentSpec env = box_env();
    add_object(env, 0, 4.0, 5.0);  // chair 1m dead ahead
    const LocalStateLabel y = local_state_label(env, {4.0, 4.0, 0});
    CHECK(y[0] == 1);
    for (std::size_t c = 1; c < y.size(); ++c) CHECK(y[c] == 0);
}

TEST_CASE("local_state_label: distance threshold is strict") {
    EnvironmentSpec env = box_env(10.0);
    add_object(env, 0, 5.0, 8.0);  // exactly 3.0m ahead of the pose
    const LocalStateLabel at = local_state_label(env, {5.0, 5.0, 0});
    CHECK(at[0] == 0);
    CHECK(oracle_local_state(env, {5.0, 5.0, 0})[0] == 0);
    const LocalStateLabel inside = local_state_label(env, {5.0, 5.01, 0});
    CHECK(inside[0] == 1);
}

TEST_CASE("local_state_label: equidistant tie broken by lowest instance index") {
    EnvironmentSpec env = box_env();
    add_object(env, 2, 4.0, 6.0);  // forward
    add_object(env, 2, 4.0, 2.0);  // behind, same distance
    const Pose pose{4.0, 4.0, 0};
    CHECK(local_state_label(env, pose)[2] == 1);
    CHECK(oracle_local_state(env, pose)[2] == 1);
}

TEST_CASE("local_state_label matches the oracle on random poses") {
    Rng rng(55);
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
        const EnvironmentSpec env = generate_environment(900 + seed);
        const auto cells = navigable_cells(env);
        for (int i = 0; i < 50; ++i) {
            const GridCell c = cells[rng.uniform_int(cells.size())];
            const Pose pose{env.cell_center_x(c.col), env.cell_center_z(c.row),
                            static_cast<int>(rng.uniform_int(std::uint64_t{12}))};
            INFO("env ", env.id, " pose ", pose.x, ",", pose.z, " h ", pose.heading);
            CHECK(local_state_label(env, pose) == oracle_local_state(env, pose));
        }
    }
}

TEST_CASE("turning right by 90 degrees permutes label directions 1>4, 2>1, 3>2, 4>3") {
    Rng rng(66);
    const EnvironmentSpec env = generate_environment(71);
    const auto cells = navigable_cells(env);
    const std::uint8_t perm[5] = {0, 4, 1, 2, 3};
    for (int i = 0; i < 100; ++i) {
        const GridCell c = cells[rng.uniform_int(cells.size())];
        Pose pose{env.cell_center_x(c.col), env.cell_center_z(c.row),
                  static_cast<int>(rng.uniform_int(std::uint64_t{12}))};
        const LocalStateLabel before = local_state_label(env, pose);
        pose.heading = (pose.heading + 3) % 12;
        const LocalStateLabel after = local_state_label(env, pose);
        for (std::size_t k = 0; k < before.size(); ++k) CHECK(after[k] == perm[before[k]]);
    }
}

TEST_CASE("label JSONL round trip") {
    LabeledStep row;
    row.walkthrough_id = "env-9#3";
    row.step = 17;
    row.y = {0, 1, 4, 0, 2, 3, 0, 0};
    const LabeledStep back = label_from_jsonl(label_to_jsonl(row));
    CHECK(back.walkthrough_id == row.walkthrough_id);
    CHECK(back.step == row.step);
    CHECK(back.y == row.y);
}
