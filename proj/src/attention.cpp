#include "egomem/attention.hpp"

#include <cmath>
#include <stdexcept>

namespace egomem {

AttentionParams AttentionParams::init(std::size_t d, std::mt19937_64& rng) {
    AttentionParams p;
    p.wq = Tensor::param(d, d, d, rng);
    p.bq = Tensor::zeros(1, d, true);
    p.wk = Tensor::param(d, d, d, rng);
    p.bk = Tensor::zeros(1, d, true);
    p.wv = Tensor::param(d, d, d, rng);
    p.bv = Tensor::zeros(1, d, true);
    p.wo = Tensor::param(d, d, d, rng);
    p.bo = Tensor::zeros(1, d, true);
    return p;
}

void AttentionParams::collect(const std::string& prefix, std::vector<NamedParam>& out) const {
    out.push_back({prefix + ".wq", wq});
    out.push_back({prefix + ".bq", bq});
    out.push_back({prefix + ".wk", wk});
    out.push_back({prefix + ".bk", bk});
    out.push_back({prefix + ".wv", wv});
    out.push_back({prefix + ".bv", bv});
    out.push_back({prefix + ".wo", wo});
    out.push_back({prefix + ".bo", bo});
}

AttentionResult multi_head_attention(Tape& tape, const Tensor& query, const Tensor& key,
                                     const Tensor& value, const AttentionParams& params,
                                     std::size_t heads) {
    const std::size_t d = params.wq.rows();
    if (heads == 0 || d % heads != 0)
        throw std::invalid_argument("multi_head_attention: model dim " + std::to_string(d) +
                                    " not divisible by " + std::to_string(heads) + " heads");
    if (query.cols() != d || key.cols() != d || value.cols() != d)
        throw std::invalid_argument("multi_head_attention: input dim mismatch");
    if (key.rows() != value.rows())
        throw std::invalid_argument("multi_head_attention: key/value length mismatch");

    const std::size_t dh = d / heads;
    const double scl = 1.0 / std::sqrt(static_cast<double>(dh));

    Tensor q = add_row(tape, matmul(tape, query, params.wq), params.bq);
    Tensor k = add_row(tape, matmul(tape, key, params.wk), params.bk);
    Tensor v = add_row(tape, matmul(tape, value, params.wv), params.bv);

    AttentionResult res;
    res.attn_rows = query.rows();
    res.attn_cols = key.rows();
    res.attn_weights.assign(res.attn_rows * res.attn_cols, 0.0);

    std::vector<Tensor> head_outputs;
    head_outputs.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
        Tensor qh = slice_cols(tape, q, h * dh, dh);
        Tensor kh = slice_cols(tape, k, h * dh, dh);
        Tensor vh = slice_cols(tape, v, h * dh, dh);
        Tensor scores = scale(tape, matmul(tape, qh, transpose(tape, kh)), scl);
        Tensor attn = softmax(tape, scores, 1);
        for (std::size_t i = 0; i < attn.size(); ++i)
            res.attn_weights[i] += attn[i] / static_cast<double>(heads);
        head_outputs.push_back(matmul(tape, attn, vh));
    }
    Tensor concat = concat_cols(tape, head_outputs);
    res.output = add_row(tape, matmul(tape, concat, params.wo), params.bo);
    return res;
}

}  // namespace egomem
