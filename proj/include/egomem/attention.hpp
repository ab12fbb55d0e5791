#pragma once

#include <vector>

#include "egomem/optim.hpp"
#include "egomem/tensor.hpp"

namespace egomem {

// Projection weights for one multi-head attention block.
struct AttentionParams {
    Tensor wq, bq;  // d x d, 1 x d
    Tensor wk, bk;
    Tensor wv, bv;
    Tensor wo, bo;

    static AttentionParams init(std::size_t d, std::mt19937_64& rng);
    void collect(const std::string& prefix, std::vector<NamedParam>& out) const;
};

struct AttentionResult {
    Tensor output;                     // Lq x d
    std::vector<double> attn_weights;  // Lq x Lk row-major, averaged over heads
    std::size_t attn_rows = 0, attn_cols = 0;
};

// Scaled dot-product attention over `heads` heads (scale 1/sqrt(d/heads)),
// heads concatenated then projected by wo. The returned weights are detached
// from the tape; they exist for inspection and visualization.
AttentionResult multi_head_attention(Tape& tape, const Tensor& query, const Tensor& key,
                                     const Tensor& value, const AttentionParams& params,
                                     std::size_t heads);

}  // namespace egomem
