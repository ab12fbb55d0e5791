#pragma once

// Shared fixtures and oracles for the test binaries.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "egomem/agent.hpp"
#include "egomem/envmemory.hpp"
#include "egomem/localstate.hpp"
#include "egomem/observation.hpp"
#include "egomem/pretrain.hpp"
#include "egomem/tensor.hpp"
#include "egomem/worldgen.hpp"

namespace testsupport {

using namespace egomem;

// Empty square room with solid border walls and a single room label covering
// the interior; objects added by the caller.
inline EnvironmentSpec box_env(double size_m = 8.0, double res = 0.125) {
    EnvironmentSpec env;
    env.id = "test-box";
    env.seed = 0;
    env.grid_resolution = res;
    env.width = static_cast<int>(size_m / res);
    env.height = env.width;
    env.occupancy.assign(static_cast<std::size_t>(env.width) * env.height, 0);
    for (int c = 0; c < env.width; ++c) {
        env.occupancy[c] = 1;
        env.occupancy[static_cast<std::size_t>(env.height - 1) * env.width + c] = 1;
    }
    for (int r = 0; r < env.height; ++r) {
        env.occupancy[static_cast<std::size_t>(r) * env.width] = 1;
        env.occupancy[static_cast<std::size_t>(r) * env.width + env.width - 1] = 1;
    }
    env.object_taxonomy = default_object_taxonomy();
    env.room_taxonomy = default_room_taxonomy();
    Room room;
    room.label = 0;
    room.bounds = {res, res, size_m - res, size_m - res};
    env.rooms.push_back(room);
    return env;
}

inline void add_object(EnvironmentSpec& env, int class_id, double x, double z,
                       double radius = 0.2) {
    env.objects.push_back({class_id, x, z, radius});
}

// Fills a vertical wall column (in cells) between two row bounds.
inline void add_wall_column(EnvironmentSpec& env, int col, int row0, int row1) {
    for (int r = row0; r <= row1; ++r)
        env.occupancy[static_cast<std::size_t>(r) * env.width + col] = 1;
}

// Small generated dataset with features and labels, mirroring the CLI loader.
inline Dataset make_dataset(std::size_t n_train_envs, std::size_t n_val_envs,
                            std::size_t walks_per_env, std::size_t T, std::uint64_t seed,
                            int rays = kDefaultRays) {
    Dataset dataset;
    const std::size_t total = n_train_envs + n_val_envs;
    for (std::size_t e = 0; e < total; ++e) {
        const bool from_val = e >= n_train_envs;
        const std::size_t env_index = dataset.envs.size();
        dataset.envs.push_back(generate_environment(derive_seed(seed, 0xe000 + e)));
        const EnvironmentSpec& env = dataset.envs.back();
        for (std::size_t w = 0; w < walks_per_env; ++w) {
            Walkthrough walk = generate_walkthrough(env, derive_seed(seed, 0xa000 + e, w), T);
            DatasetItem item;
            item.env_index = env_index;
            item.walkthrough_id = env.id + "#" + std::to_string(w);
            item.poses = std::move(walk.poses);
            for (const Pose& p : item.poses) {
                item.features.push_back(egocentric_features(env, p, rays));
                item.labels.push_back(local_state_label(env, p));
            }
            (from_val ? dataset.val : dataset.train).push_back(std::move(item));
        }
    }
    return dataset;
}

// Central finite-difference check of a tensor function. The loss is a fixed
// deterministic weighted sum of the outputs; returns the max relative error
// over every element of every input marked requires_grad.
inline double fd_max_rel_err(
    const std::function<Tensor(Tape&, const std::vector<Tensor>&)>& f,
    std::vector<Tensor>& inputs, double h = 1e-5) {
    auto loss_of = [&](Tape& tape) {
        const Tensor out = f(tape, inputs);
        std::vector<double> w(out.size());
        for (std::size_t i = 0; i < w.size(); ++i)
            w[i] = 0.5 + 0.25 * std::sin(1.7 * static_cast<double>(i + 1));
        const Tensor weights = Tensor::from_values(out.rows(), out.cols(), std::move(w));
        return sum_all(tape, mul(tape, out, weights));
    };

    Tape tape;
    const Tensor loss = loss_of(tape);
    tape.backward(loss);

    double max_err = 0;
    for (Tensor& in : inputs) {
        if (!in.requires_grad()) continue;
        const std::vector<double> analytic = in.grad();
        for (std::size_t i = 0; i < in.size(); ++i) {
            const double keep = in[i];
            in[i] = keep + h;
            Tape tp;
            const double up = loss_of(tp).item();
            in[i] = keep - h;
            Tape tm;
            const double down = loss_of(tm).item();
            in[i] = keep;
            const double fd = (up - down) / (2 * h);
            const double err = std::abs(analytic[i] - fd) /
                               std::max({1.0, std::abs(analytic[i]), std::abs(fd)});
            max_err = std::max(max_err, err);
        }
    }
    return max_err;
}

inline Tensor random_tensor(std::size_t rows, std::size_t cols, std::uint64_t seed,
                            bool requires_grad = true) {
    Rng rng(seed);
    std::vector<double> v(rows * cols);
    for (double& x : v) x = rng.uniform(-1.0, 1.0);
    return Tensor::from_values(rows, cols, std::move(v), requires_grad);
}

}  // namespace testsupport
