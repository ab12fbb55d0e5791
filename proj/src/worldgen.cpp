#include "egomem/worldgen.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <map>

#include <json.hpp>

#include "egomem/util.hpp"

namespace egomem {

namespace {

constexpr int kMinRoomSide = 16;  // cells (2.0m at default resolution)
constexpr int kDoorWidth = 8;     // cells (1.0m)
constexpr double kExtraDoorProb = 0.3;
constexpr double kObjectMargin = 0.3;  // meters from room walls

// Cell-space rectangle, half-open.
struct RectC {
    int x0, z0, x1, z1;
    int w() const { return x1 - x0; }
    int h() const { return z1 - z0; }
    long area() const { return static_cast<long>(w()) * h(); }
};

// Per room label: sampling weights over the 8 object classes.
// chair table couch bed sink toilet tv plant
const double kPlacementPrior[6][8] = {
    /* kitchen     */ {2, 3, 0, 0, 4, 0, 0, 1},
    /* bedroom     */ {1, 1, 0, 4, 0, 0, 1, 1},
    /* bathroom    */ {0, 0, 0, 0, 3, 4, 0, 0},
    /* living room */ {1, 2, 4, 0, 0, 0, 2, 1},
    /* hallway     */ {1, 1, 0, 0, 0, 0, 0, 3},
    /* office      */ {3, 3, 0, 0, 0, 0, 1, 1},
};

int sample_weighted(Rng& rng, const double* weights, int n) {
    double total = 0;
    for (int i = 0; i < n; ++i) total += weights[i];
    double u = rng.uniform() * total;
    for (int i = 0; i < n; ++i) {
        u -= weights[i];
        if (u < 0) return i;
    }
    return n - 1;
}

struct WallEdge {
    int a, b;        // room indices
    bool vertical;   // wall is a column of cells
    int line;        // col (vertical) or row (horizontal) of the wall cells
    int lo, hi;      // shared overlap range along the wall, half-open
};

}  // namespace

const std::vector<std::string>& default_object_taxonomy() {
    static const std::vector<std::string> t = {"chair", "table",  "couch", "bed",
                                               "sink",  "toilet", "tv",    "plant"};
    return t;
}

const std::vector<std::string>& default_room_taxonomy() {
    static const std::vector<std::string> t = {"kitchen",     "bedroom", "bathroom",
                                               "living room", "hallway", "office"};
    return t;
}

EnvironmentSpec generate_environment(std::uint64_t seed, const WorldgenParams& params) {
    if (params.n_rooms < 2) throw GenerationError("generate_environment: n_rooms must be >= 2");
    if (params.grid_size_x < 8.0 || params.grid_size_z < 8.0)
        throw GenerationError("generate_environment: grid must be at least 8m x 8m");

    EnvironmentSpec env;
    env.seed = seed;
    env.id = "env-" + std::to_string(seed);
    env.grid_resolution = params.grid_resolution;
    env.width = static_cast<int>(std::lround(params.grid_size_x / params.grid_resolution));
    env.height = static_cast<int>(std::lround(params.grid_size_z / params.grid_resolution));
    env.object_taxonomy = default_object_taxonomy();
    env.room_taxonomy = default_room_taxonomy();

    Rng rng(derive_seed(seed, 0x574f524cULL));  // worldgen stream

    // Everything solid; the BSP carves free room interiors out of it.
    env.occupancy.assign(static_cast<std::size_t>(env.width) * env.height, 1);

    std::vector<RectC> regions = {{1, 1, env.width - 1, env.height - 1}};
    while (static_cast<int>(regions.size()) < params.n_rooms) {
        // largest splittable region
        int best = -1;
        for (int i = 0; i < static_cast<int>(regions.size()); ++i) {
            const RectC& r = regions[i];
            if (std::max(r.w(), r.h()) < 2 * kMinRoomSide + 1) continue;
            if (best < 0 || r.area() > regions[best].area()) best = i;
        }
        if (best < 0)
            throw GenerationError("generate_environment: cannot fit " +
                                  std::to_string(params.n_rooms) + " rooms into grid");
        RectC r = regions[best];
        const bool split_x = r.w() >= r.h();
        if (split_x) {
            const int c = r.x0 + kMinRoomSide +
                          static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(
                              r.w() - 2 * kMinRoomSide)));
            regions[best] = {r.x0, r.z0, c, r.z1};
            regions.push_back({c + 1, r.z0, r.x1, r.z1});
        } else {
            const int c = r.z0 + kMinRoomSide +
                          static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(
                              r.h() - 2 * kMinRoomSide)));
            regions[best] = {r.x0, r.z0, r.x1, c};
            regions.push_back({r.x0, c + 1, r.x1, r.z1});
        }
    }

    // carve free interiors
    for (const RectC& r : regions)
        for (int z = r.z0; z < r.z1; ++z)
            for (int x = r.x0; x < r.x1; ++x)
                env.occupancy[static_cast<std::size_t>(z) * env.width + x] = 0;

    // rooms in metric coordinates
    const double res = env.grid_resolution;
    for (const RectC& r : regions) {
        Room room;
        room.label = static_cast<int>(rng.uniform_int(env.room_taxonomy.size()));
        room.bounds = {r.x0 * res, r.z0 * res, r.x1 * res, r.z1 * res};
        env.rooms.push_back(room);
    }

    // adjacency edges with enough shared wall for a door
    std::vector<WallEdge> edges;
    for (int i = 0; i < static_cast<int>(regions.size()); ++i)
        for (int j = i + 1; j < static_cast<int>(regions.size()); ++j) {
            const RectC& a = regions[i];
            const RectC& b = regions[j];
            if (a.x1 + 1 == b.x0 || b.x1 + 1 == a.x0) {
                const int line = (a.x1 + 1 == b.x0) ? a.x1 : b.x1;
                const int lo = std::max(a.z0, b.z0), hi = std::min(a.z1, b.z1);
                if (hi - lo >= kDoorWidth) edges.push_back({i, j, true, line, lo, hi});
            } else if (a.z1 + 1 == b.z0 || b.z1 + 1 == a.z0) {
                const int line = (a.z1 + 1 == b.z0) ? a.z1 : b.z1;
                const int lo = std::max(a.x0, b.x0), hi = std::min(a.x1, b.x1);
                if (hi - lo >= kDoorWidth) edges.push_back({i, j, false, line, lo, hi});
            }
        }

    // spanning tree over rooms (union-find), then extra doors with prob 0.3
    std::vector<int> parent(regions.size());
    for (std::size_t i = 0; i < parent.size(); ++i) parent[i] = static_cast<int>(i);
    std::function<int(int)> find = [&](int x) { return parent[x] == x ? x : parent[x] = find(parent[x]); };

    auto carve_door = [&](const WallEdge& e) {
        const int start = e.lo + static_cast<int>(rng.uniform_int(
                                     static_cast<std::uint64_t>(e.hi - e.lo - kDoorWidth + 1)));
        for (int k = 0; k < kDoorWidth; ++k) {
            const int x = e.vertical ? e.line : start + k;
            const int z = e.vertical ? start + k : e.line;
            env.occupancy[static_cast<std::size_t>(z) * env.width + x] = 0;
        }
    };

    for (const WallEdge& e : edges) {
        if (find(e.a) != find(e.b)) {
            parent[find(e.a)] = find(e.b);
            carve_door(e);
        } else if (rng.uniform() < kExtraDoorProb) {
            carve_door(e);
        }
    }
    for (std::size_t i = 1; i < regions.size(); ++i)
        if (find(static_cast<int>(i)) != find(0))
            throw GenerationError("generate_environment: room graph not connected");

    // objects sampled from the per-room-label placement prior
    for (std::size_t ri = 0; ri < env.rooms.size(); ++ri) {
        const Room& room = env.rooms[ri];
        const int count = 1 + static_cast<int>(rng.uniform_int(
                                  static_cast<std::uint64_t>(params.objects_per_room)));
        for (int n = 0; n < count; ++n) {
            ObjectInstance obj;
            obj.class_id = sample_weighted(rng, kPlacementPrior[room.label],
                                           static_cast<int>(env.object_taxonomy.size()));
            const RectM& b = room.bounds;
            // keep a margin so footprints stay inside the room
            double best_x = 0, best_z = 0;
            for (int attempt = 0; attempt < 20; ++attempt) {
                best_x = rng.uniform(b.x0 + kObjectMargin, b.x1 - kObjectMargin);
                best_z = rng.uniform(b.z0 + kObjectMargin, b.z1 - kObjectMargin);
                bool clear = true;
                for (const auto& other : env.objects) {
                    const double dx = other.x - best_x, dz = other.z - best_z;
                    if (dx * dx + dz * dz < 0.5 * 0.5) clear = false;
                }
                if (clear) break;
            }
            obj.x = best_x;
            obj.z = best_z;
            env.objects.push_back(obj);
        }
    }

    return env;
}

bool is_navigable(const EnvironmentSpec& env, int col, int row) {
    for (int dz = -1; dz <= 1; ++dz)
        for (int dx = -1; dx <= 1; ++dx)
            if (env.obstacle(col + dx, row + dz)) return false;
    return true;
}

std::vector<GridCell> navigable_cells(const EnvironmentSpec& env) {
    std::vector<GridCell> out;
    for (int z = 0; z < env.height; ++z)
        for (int x = 0; x < env.width; ++x)
            if (is_navigable(env, x, z)) out.push_back({x, z});
    return out;
}

namespace {
std::optional<int> room_index_at(const EnvironmentSpec& env, double x, double z) {
    for (std::size_t i = 0; i < env.rooms.size(); ++i)
        if (env.rooms[i].bounds.contains(x, z)) return static_cast<int>(i);
    return std::nullopt;
}
}  // namespace

std::optional<int> room_at(const EnvironmentSpec& env, double x, double z) {
    if (x < 0 || z < 0 || x >= env.width_m() || z >= env.height_m())
        throw std::out_of_range("room_at: position outside grid bounds");
    auto idx = room_index_at(env, x, z);
    if (!idx) return std::nullopt;
    return env.rooms[*idx].label;
}

std::vector<std::string> check_environment(const EnvironmentSpec& env) {
    std::vector<std::string> problems;

    // rooms disjoint with positive area
    for (std::size_t i = 0; i < env.rooms.size(); ++i) {
        const RectM& a = env.rooms[i].bounds;
        if (a.area() <= 0) problems.push_back("room " + std::to_string(i) + " has no area");
        if (env.rooms[i].label < 0 ||
            env.rooms[i].label >= static_cast<int>(env.room_taxonomy.size()))
            problems.push_back("room " + std::to_string(i) + " has invalid label");
        for (std::size_t j = i + 1; j < env.rooms.size(); ++j) {
            const RectM& b = env.rooms[j].bounds;
            const double ox = std::min(a.x1, b.x1) - std::max(a.x0, b.x0);
            const double oz = std::min(a.z1, b.z1) - std::max(a.z0, b.z0);
            if (ox > 0 && oz > 0)
                problems.push_back("rooms " + std::to_string(i) + " and " + std::to_string(j) +
                                   " overlap");
        }
    }

    // objects in free space inside exactly one room
    for (std::size_t i = 0; i < env.objects.size(); ++i) {
        const auto& o = env.objects[i];
        if (o.class_id < 0 || o.class_id >= static_cast<int>(env.object_taxonomy.size()))
            problems.push_back("object " + std::to_string(i) + " has invalid class");
        if (env.obstacle_at(o.x, o.z))
            problems.push_back("object " + std::to_string(i) + " not in free space");
        int containing = 0;
        for (const auto& r : env.rooms)
            if (r.bounds.contains(o.x, o.z)) ++containing;
        if (containing != 1)
            problems.push_back("object " + std::to_string(i) + " inside " +
                               std::to_string(containing) + " rooms");
    }

    // free space one connected component
    std::vector<std::uint8_t> seen(env.occupancy.size(), 0);
    std::size_t total_free = 0, start = env.occupancy.size();
    for (std::size_t i = 0; i < env.occupancy.size(); ++i)
        if (!env.occupancy[i]) {
            ++total_free;
            if (start == env.occupancy.size()) start = i;
        }
    if (total_free == 0) {
        problems.push_back("no free space");
    } else {
        std::deque<std::size_t> queue = {start};
        seen[start] = 1;
        std::size_t reached = 0;
        while (!queue.empty()) {
            const std::size_t cur = queue.front();
            queue.pop_front();
            ++reached;
            const int x = static_cast<int>(cur % env.width), z = static_cast<int>(cur / env.width);
            const int dx[] = {1, -1, 0, 0}, dz[] = {0, 0, 1, -1};
            for (int k = 0; k < 4; ++k) {
                const int nx = x + dx[k], nz = z + dz[k];
                if (env.obstacle(nx, nz)) continue;
                const std::size_t ni = static_cast<std::size_t>(nz) * env.width + nx;
                if (!seen[ni]) {
                    seen[ni] = 1;
                    queue.push_back(ni);
                }
            }
        }
        if (reached != total_free)
            problems.push_back("free space disconnected: reached " + std::to_string(reached) +
                               " of " + std::to_string(total_free));
    }

    // door cells: free, outside all rooms, adjacent to exactly two rooms
    for (int z = 0; z < env.height; ++z)
        for (int x = 0; x < env.width; ++x) {
            if (env.obstacle(x, z)) continue;
            const double cx = env.cell_center_x(x), cz = env.cell_center_z(z);
            if (room_index_at(env, cx, cz)) continue;  // interior cell
            std::set<int> neighbors;
            const int dx[] = {1, -1, 0, 0}, dz[] = {0, 0, 1, -1};
            for (int k = 0; k < 4; ++k) {
                if (env.obstacle(x + dx[k], z + dz[k])) continue;
                auto idx = room_index_at(env, env.cell_center_x(x + dx[k]),
                                         env.cell_center_z(z + dz[k]));
                if (idx) neighbors.insert(*idx);
            }
            if (neighbors.size() != 2)
                problems.push_back("door cell (" + std::to_string(x) + "," + std::to_string(z) +
                                   ") adjacent to " + std::to_string(neighbors.size()) + " rooms");
        }

    return problems;
}

std::string environment_to_json(const EnvironmentSpec& env) {
    nlohmann::json j;
    j["schema_version"] = 1;
    j["id"] = env.id;
    j["seed"] = env.seed;
    j["grid_resolution"] = env.grid_resolution;
    j["width"] = env.width;
    j["height"] = env.height;
    // row-major bitset, packed LSB-first
    std::vector<std::uint8_t> bits((env.occupancy.size() + 7) / 8, 0);
    for (std::size_t i = 0; i < env.occupancy.size(); ++i)
        if (env.occupancy[i]) bits[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
    j["occupancy_b64"] = base64_encode(bits);
    j["rooms"] = nlohmann::json::array();
    for (const auto& r : env.rooms)
        j["rooms"].push_back({{"label", r.label},
                              {"bounds", {r.bounds.x0, r.bounds.z0, r.bounds.x1, r.bounds.z1}}});
    j["objects"] = nlohmann::json::array();
    for (const auto& o : env.objects)
        j["objects"].push_back({{"class_id", o.class_id},
                                {"position", {o.x, o.z}},
                                {"footprint_radius", o.footprint_radius}});
    j["object_taxonomy"] = env.object_taxonomy;
    j["room_taxonomy"] = env.room_taxonomy;
    return j.dump();
}

EnvironmentSpec environment_from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    if (!j.contains("schema_version") || j["schema_version"].get<int>() != 1)
        throw std::invalid_argument("environment: unsupported schema_version");
    EnvironmentSpec env;
    env.id = j["id"].get<std::string>();
    env.seed = j["seed"].get<std::uint64_t>();
    env.grid_resolution = j["grid_resolution"].get<double>();
    env.width = j["width"].get<int>();
    env.height = j["height"].get<int>();
    const auto bits = base64_decode(j["occupancy_b64"].get<std::string>());
    env.occupancy.assign(static_cast<std::size_t>(env.width) * env.height, 0);
    for (std::size_t i = 0; i < env.occupancy.size(); ++i)
        env.occupancy[i] = (bits[i / 8] >> (i % 8)) & 1;
    for (const auto& rj : j["rooms"]) {
        Room r;
        r.label = rj["label"].get<int>();
        const auto& b = rj["bounds"];
        r.bounds = {b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()};
        env.rooms.push_back(r);
    }
    for (const auto& oj : j["objects"]) {
        ObjectInstance o;
        o.class_id = oj["class_id"].get<int>();
        o.x = oj["position"][0].get<double>();
        o.z = oj["position"][1].get<double>();
        o.footprint_radius = oj["footprint_radius"].get<double>();
        env.objects.push_back(o);
    }
    env.object_taxonomy = j["object_taxonomy"].get<std::vector<std::string>>();
    env.room_taxonomy = j["room_taxonomy"].get<std::vector<std::string>>();
    return env;
}

}  // namespace egomem
