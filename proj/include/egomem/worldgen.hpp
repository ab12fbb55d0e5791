#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace egomem {

struct GenerationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Axis-aligned rectangle in meters, half-open on the max edges.
struct RectM {
    double x0 = 0, z0 = 0, x1 = 0, z1 = 0;
    bool contains(double x, double z) const { return x >= x0 && x < x1 && z >= z0 && z < z1; }
    double area() const { return (x1 - x0) * (z1 - z0); }
};

struct Room {
    int label = 0;  // index into room_taxonomy
    RectM bounds;
};

struct ObjectInstance {
    int class_id = 0;  // index into object_taxonomy
    double x = 0, z = 0;
    double footprint_radius = 0.2;
};

struct GridCell {
    int col = 0, row = 0;
    auto operator<=>(const GridCell&) const = default;
};

// Ground-truth world: occupancy grid, labeled rooms and placed objects.
// Immutable after generation.
struct EnvironmentSpec {
    std::string id;
    std::uint64_t seed = 0;
    double grid_resolution = 0.125;  // meters per cell
    int width = 0, height = 0;       // cells
    std::vector<std::uint8_t> occupancy;  // row-major, 1 = obstacle
    std::vector<Room> rooms;
    std::vector<ObjectInstance> objects;
    std::vector<std::string> object_taxonomy;
    std::vector<std::string> room_taxonomy;

    bool obstacle(int col, int row) const {
        if (col < 0 || row < 0 || col >= width || row >= height) return true;
        return occupancy[static_cast<std::size_t>(row) * width + col] != 0;
    }
    bool obstacle_at(double x, double z) const {
        return obstacle(static_cast<int>(x / grid_resolution), static_cast<int>(z / grid_resolution));
    }
    GridCell cell_of(double x, double z) const {
        return {static_cast<int>(x / grid_resolution), static_cast<int>(z / grid_resolution)};
    }
    double cell_center_x(int col) const { return (col + 0.5) * grid_resolution; }
    double cell_center_z(int row) const { return (row + 0.5) * grid_resolution; }
    double width_m() const { return width * grid_resolution; }
    double height_m() const { return height * grid_resolution; }
};

const std::vector<std::string>& default_object_taxonomy();  // 8 classes
const std::vector<std::string>& default_room_taxonomy();    // 6 classes

struct WorldgenParams {
    int n_rooms = 5;
    double grid_size_x = 14.0;  // meters
    double grid_size_z = 14.0;
    int objects_per_room = 3;   // 1..objects_per_room placed per room
    double grid_resolution = 0.125;
};

EnvironmentSpec generate_environment(std::uint64_t seed, const WorldgenParams& params = {});

// Free cells whose full 8-neighborhood is free (agent clearance).
std::vector<GridCell> navigable_cells(const EnvironmentSpec& env);
bool is_navigable(const EnvironmentSpec& env, int col, int row);

// Room label at a metric position; nullopt for door cells / walls.
// Out-of-bounds positions are an error.
std::optional<int> room_at(const EnvironmentSpec& env, double x, double z);

// Checks all EnvironmentSpec invariants; returns a list of violations
// (empty = valid).
std::vector<std::string> check_environment(const EnvironmentSpec& env);

std::string environment_to_json(const EnvironmentSpec& env);
EnvironmentSpec environment_from_json(const std::string& text);

}  // namespace egomem
