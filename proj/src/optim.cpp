#include "egomem/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace egomem {

void AdamState::step(const std::vector<NamedParam>& params) {
    ++t_;
    const double bc1 = 1.0 - std::pow(hyper_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(hyper_.beta2, static_cast<double>(t_));
    for (const auto& p : params) {
        Tensor tensor = p.tensor;
        if (!tensor.requires_grad())
            throw std::runtime_error("adam_step: parameter '" + p.name + "' has no grad");
        auto& moments = moments_[p.name];
        if (moments.m.empty()) {
            moments.m.assign(tensor.size(), 0.0);
            moments.v.assign(tensor.size(), 0.0);
        } else if (moments.m.size() != tensor.size()) {
            throw std::runtime_error("adam_step: moment shape mismatch for '" + p.name + "'");
        }
        const auto& g = tensor.grad();
        auto& vals = tensor.values();
        for (std::size_t i = 0; i < vals.size(); ++i) {
            vals[i] -= hyper_.lr * hyper_.weight_decay * vals[i];  // decoupled decay
            moments.m[i] = hyper_.beta1 * moments.m[i] + (1.0 - hyper_.beta1) * g[i];
            moments.v[i] = hyper_.beta2 * moments.v[i] + (1.0 - hyper_.beta2) * g[i] * g[i];
            const double mhat = moments.m[i] / bc1;
            const double vhat = moments.v[i] / bc2;
            vals[i] -= hyper_.lr * mhat / (std::sqrt(vhat) + hyper_.eps);
        }
        tensor.zero_grad();
    }
}

void adam_step(const std::vector<NamedParam>& params, AdamState& state) { state.step(params); }

}  // namespace egomem
