#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "egomem/tensor.hpp"

namespace egomem {

struct NamedParam {
    std::string name;
    Tensor tensor;
};

struct AdamHyper {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 2e-5;
};

// Adam with bias correction and decoupled weight decay.
class AdamState {
public:
    using Hyper = AdamHyper;

    explicit AdamState(Hyper hyper = Hyper()) : hyper_(hyper) {}

    const Hyper& hyper() const { return hyper_; }
    Hyper& hyper() { return hyper_; }
    long step_count() const { return t_; }

    // Applies one update to every parameter, consuming its populated grad
    // (grads are zeroed afterwards). Missing grads are an error.
    void step(const std::vector<NamedParam>& params);

private:
    struct Moments {
        std::vector<double> m, v;
    };
    Hyper hyper_;
    long t_ = 0;
    std::unordered_map<std::string, Moments> moments_;
};

void adam_step(const std::vector<NamedParam>& params, AdamState& state);

}  // namespace egomem
