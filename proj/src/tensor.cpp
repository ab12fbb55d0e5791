#include "egomem/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace egomem {

Tensor::Tensor(std::size_t rows, std::size_t cols, bool requires_grad) {
    d_ = std::make_shared<Data>();
    d_->rows = rows;
    d_->cols = cols;
    d_->values.assign(rows * cols, 0.0);
    d_->requires_grad = requires_grad;
    if (requires_grad) d_->grad.assign(rows * cols, 0.0);
}

Tensor Tensor::zeros(std::size_t rows, std::size_t cols, bool requires_grad) {
    return Tensor(rows, cols, requires_grad);
}

Tensor Tensor::full(std::size_t rows, std::size_t cols, double value, bool requires_grad) {
    Tensor t(rows, cols, requires_grad);
    std::fill(t.values().begin(), t.values().end(), value);
    return t;
}

Tensor Tensor::from_values(std::size_t rows, std::size_t cols, std::vector<double> values,
                           bool requires_grad) {
    if (values.size() != rows * cols)
        throw std::invalid_argument("from_values: got " + std::to_string(values.size()) +
                                    " values for shape " + std::to_string(rows) + "x" +
                                    std::to_string(cols));
    Tensor t(rows, cols, requires_grad);
    t.values() = std::move(values);
    return t;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    Tensor t(1, 1, requires_grad);
    t[0] = value;
    return t;
}

Tensor Tensor::param(std::size_t rows, std::size_t cols, std::size_t fan_in, std::mt19937_64& rng) {
    Tensor t(rows, cols, true);
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (auto& v : t.values()) {
        const double u = static_cast<double>(rng() >> 11) * 0x1p-53;  // [0,1)
        v = -bound + 2.0 * bound * u;
    }
    return t;
}

double Tensor::item() const {
    if (size() != 1) throw std::invalid_argument("item: tensor is not scalar, shape " + shape_str(*this));
    return d_->values[0];
}

std::vector<double>& Tensor::grad() const {
    if (!d_->requires_grad) throw std::runtime_error("grad: tensor does not require grad");
    return d_->grad;
}

void Tensor::zero_grad() {
    if (d_->requires_grad) std::fill(d_->grad.begin(), d_->grad.end(), 0.0);
}

Tensor Tensor::clone() const {
    Tensor t(rows(), cols(), requires_grad());
    t.values() = values();
    return t;
}

std::string shape_str(const Tensor& t) {
    if (!t.defined()) return "<undefined>";
    return std::to_string(t.rows()) + "x" + std::to_string(t.cols());
}

void Tape::backward(const Tensor& loss) {
    if (loss.size() != 1)
        throw std::invalid_argument("backward: loss must be scalar, got " + shape_str(loss));
    if (consumed_)
        throw std::runtime_error("backward: tape already consumed; call reset() first");
    if (!loss.requires_grad())
        throw std::runtime_error("backward: loss does not require grad");
    loss.grad()[0] += 1.0;
    for (auto it = rules_.rbegin(); it != rules_.rend(); ++it) (*it)();
    consumed_ = true;
}

void Tape::reset() {
    rules_.clear();
    consumed_ = false;
}

namespace {

bool needs_grad(const Tensor& a) { return a.requires_grad(); }
bool needs_grad(const Tensor& a, const Tensor& b) { return a.requires_grad() || b.requires_grad(); }

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " +
                                    shape_str(b));
}

}  // namespace

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
    check_same_shape("add", a, b);
    Tensor out(a.rows(), a.cols(), needs_grad(a, b));
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
    if (out.requires_grad()) {
        tape.record([a, b, out]() mutable {
            for (std::size_t i = 0; i < out.size(); ++i) {
                if (a.requires_grad()) a.grad()[i] += out.grad()[i];
                if (b.requires_grad()) b.grad()[i] += out.grad()[i];
            }
        });
    }
    return out;
}

Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
    check_same_shape("sub", a, b);
    Tensor out(a.rows(), a.cols(), needs_grad(a, b));
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
    if (out.requires_grad()) {
        tape.record([a, b, out]() mutable {
            for (std::size_t i = 0; i < out.size(); ++i) {
                if (a.requires_grad()) a.grad()[i] += out.grad()[i];
                if (b.requires_grad()) b.grad()[i] -= out.grad()[i];
            }
        });
    }
    return out;
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
    check_same_shape("mul", a, b);
    Tensor out(a.rows(), a.cols(), needs_grad(a, b));
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
    if (out.requires_grad()) {
        tape.record([a, b, out]() mutable {
            for (std::size_t i = 0; i < out.size(); ++i) {
                if (a.requires_grad()) a.grad()[i] += out.grad()[i] * b[i];
                if (b.requires_grad()) b.grad()[i] += out.grad()[i] * a[i];
            }
        });
    }
    return out;
}

Tensor scale(Tape& tape, const Tensor& a, double c) {
    Tensor out(a.rows(), a.cols(), needs_grad(a));
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * c;
    if (out.requires_grad()) {
        tape.record([a, out, c]() mutable {
            for (std::size_t i = 0; i < out.size(); ++i) a.grad()[i] += out.grad()[i] * c;
        });
    }
    return out;
}

Tensor add_row(Tape& tape, const Tensor& a, const Tensor& row) {
    if (row.rows() != 1 || row.cols() != a.cols())
        throw std::invalid_argument("add_row: bias " + shape_str(row) + " does not broadcast over " +
                                    shape_str(a));
    Tensor out(a.rows(), a.cols(), needs_grad(a, row));
    for (std::size_t r = 0; r < a.rows(); ++r)
        for (std::size_t c = 0; c < a.cols(); ++c) out.at(r, c) = a.at(r, c) + row[c];
    if (out.requires_grad()) {
        tape.record([a, row, out]() mutable {
            for (std::size_t r = 0; r < out.rows(); ++r)
                for (std::size_t c = 0; c < out.cols(); ++c) {
                    if (a.requires_grad()) a.grad()[r * out.cols() + c] += out.grad()[r * out.cols() + c];
                    if (row.requires_grad()) row.grad()[c] += out.grad()[r * out.cols() + c];
                }
        });
    }
    return out;
}

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows())
        throw std::invalid_argument("matmul: inner dimensions disagree, " + shape_str(a) + " x " +
                                    shape_str(b));
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    Tensor out(m, n, needs_grad(a, b));
    const double* A = a.values().data();
    const double* B = b.values().data();
    double* C = out.values().data();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
            const double av = A[i * k + p];
            if (av == 0.0) continue;
            const double* brow = B + p * n;
            double* crow = C + i * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    if (out.requires_grad()) {
        tape.record([a, b, out, m, k, n]() mutable {
            const double* G = out.grad().data();
            if (a.requires_grad()) {  // dA = dC * B^T
                double* dA = a.grad().data();
                const double* B = b.values().data();
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t p = 0; p < k; ++p) {
                        double acc = 0.0;
                        for (std::size_t j = 0; j < n; ++j) acc += G[i * n + j] * B[p * n + j];
                        dA[i * k + p] += acc;
                    }
            }
            if (b.requires_grad()) {  // dB = A^T * dC
                double* dB = b.grad().data();
                const double* A = a.values().data();
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t p = 0; p < k; ++p) {
                        const double av = A[i * k + p];
                        if (av == 0.0) continue;
                        for (std::size_t j = 0; j < n; ++j) dB[p * n + j] += av * G[i * n + j];
                    }
            }
        });
    }
    return out;
}

Tensor max_rows(Tape& tape, const Tensor& a) {
    if (a.rows() == 0) throw std::invalid_argument("max_rows: empty tensor");
    Tensor out(1, a.cols(), needs_grad(a));
    std::vector<std::size_t> argmax(a.cols(), 0);
    for (std::size_t c = 0; c < a.cols(); ++c) {
        double best = a.at(0, c);
        for (std::size_t r = 1; r < a.rows(); ++r) {
            if (a.at(r, c) > best) {
                best = a.at(r, c);
                argmax[c] = r;
            }
        }
        out[c] = best;
    }
    if (out.requires_grad()) {
        tape.record([a, out, argmax]() mutable {
            for (std::size_t c = 0; c < out.cols(); ++c)
                a.grad()[argmax[c] * a.cols() + c] += out.grad()[c];
        });
    }
    return out;
}

Tensor reshape(Tape& tape, const Tensor& a, std::size_t rows, std::size_t cols) {
    if (rows * cols != a.size())
        throw std::invalid_argument("reshape: element count mismatch, " + shape_str(a) + " to " +
                                    std::to_string(rows) + "x" + std::to_string(cols));
    Tensor out(rows, cols, needs_grad(a));
    out.values() = a.values();
    if (out.requires_grad()) {
        tape.record([a, out]() mutable {
            for (std::size_t i = 0; i < out.size(); ++i) a.grad()[i] += out.grad()[i];
        });
    }
    return out;
}

Tensor transpose(Tape& tape, const Tensor& a) {
    Tensor out(a.cols(), a.rows(), needs_grad(a));
    for (std::size_t r = 0; r < a.rows(); ++r)
        for (std::size_t c = 0; c < a.cols(); ++c) out.at(c, r) = a.at(r, c);
    if (out.requires_grad()) {
        tape.record([a, out]() mutable {
            for (std::size_t r = 0; r < out.rows(); ++r)
                for (std::size_t c = 0; c < out.cols(); ++c)
                    a.grad()[c * a.cols() + r] += out.grad()[r * out.cols() + c];
        });
    }
    return out;
}

Tensor slice_cols(Tape& tape, const Tensor& a, std::size_t start, std::size_t count) {
    if (start + count > a.cols())
        throw std::invalid_argument("slice_cols: [" + std::to_string(start) + "," +
                                    std::to_string(start + count) + ") out of range for " + shape_str(a));
    Tensor out(a.rows(), count, needs_grad(a));
    for (std::size_t r = 0; r < a.rows(); ++r)
        for (std::size_t c = 0; c < count; ++c) out.at(r, c) = a.at(r, start + c);
    if (out.requires_grad()) {
        tape.record([a, out, start, count]() mutable {
            for (std::size_t r = 0; r < out.rows(); ++r)
                for (std::size_t c = 0; c < count; ++c)
                    a.grad()[r * a.cols() + start + c] += out.grad()[r * count + c];
        });
    }
    return out;
}

Tensor slice_rows(Tape& tape, const Tensor& a, std::size_t start, std::size_t count) {
    if (start + count > a.rows())
        throw std::invalid_argument("slice_rows: [" + std::to_string(start) + "," +
                                    std::to_string(start + count) + ") out of range for " + shape_str(a));
    Tensor out(count, a.cols(), needs_grad(a));
    for (std::size_t r = 0; r < count; ++r)
        for (std::size_t c = 0; c < a.cols(); ++c) out.at(r, c) = a.at(start + r, c);
    if (out.requires_grad()) {
        tape.record([a, out, start, count]() mutable {
            for (std::size_t r = 0; r < count; ++r)
                for (std::size_t c = 0; c < a.cols(); ++c)
                    a.grad()[(start + r) * a.cols() + c] += out.grad()[r * a.cols() + c];
        });
    }
    return out;
}

Tensor concat_cols(Tape& tape, const std::vector<Tensor>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
    std::size_t rows = parts[0].rows(), cols = 0;
    bool rg = false;
    for (const auto& p : parts) {
        if (p.rows() != rows) throw std::invalid_argument("concat_cols: row mismatch");
        cols += p.cols();
        rg = rg || p.requires_grad();
    }
    Tensor out(rows, cols, rg);
    std::size_t off = 0;
    for (const auto& p : parts) {
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < p.cols(); ++c) out.at(r, off + c) = p.at(r, c);
        off += p.cols();
    }
    if (rg) {
        tape.record([parts, out, rows, cols]() mutable {
            std::size_t off = 0;
            for (auto& p : parts) {
                if (p.requires_grad())
                    for (std::size_t r = 0; r < rows; ++r)
                        for (std::size_t c = 0; c < p.cols(); ++c)
                            p.grad()[r * p.cols() + c] += out.grad()[r * cols + off + c];
                off += p.cols();
            }
        });
    }
    return out;
}

Tensor concat_rows(Tape& tape, const std::vector<Tensor>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
    std::size_t cols = parts[0].cols(), rows = 0;
    bool rg = false;
    for (const auto& p : parts) {
        if (p.cols() != cols) throw std::invalid_argument("concat_rows: column mismatch");
        rows += p.rows();
        rg = rg || p.requires_grad();
    }
    Tensor out(rows, cols, rg);
    std::size_t off = 0;
    for (const auto& p : parts) {
        for (std::size_t i = 0; i < p.size(); ++i) out[off + i] = p[i];
        off += p.size();
    }
    if (rg) {
        tape.record([parts, out]() mutable {
            std::size_t off = 0;
            for (auto& p : parts) {
                if (p.requires_grad())
                    for (std::size_t i = 0; i < p.size(); ++i) p.grad()[i] += out.grad()[off + i];
                off += p.size();
            }
        });
    }
    return out;
}

Tensor gelu(Tape& tape, const Tensor& a) {
    Tensor out(a.rows(), a.cols(), needs_grad(a));
    constexpr double inv_sqrt2 = 0.7071067811865475244;
    for (std::size_t i = 0; i < a.size(); ++i)
        out[i] = 0.5 * a[i] * (1.0 + std::erf(a[i] * inv_sqrt2));
    if (out.requires_grad()) {
        tape.record([a, out]() mutable {
            constexpr double inv_sqrt2pi = 0.3989422804014326779;
            for (std::size_t i = 0; i < a.size(); ++i) {
                const double x = a[i];
                const double cdf = 0.5 * (1.0 + std::erf(x * inv_sqrt2));
                const double pdf = inv_sqrt2pi * std::exp(-0.5 * x * x);
                a.grad()[i] += out.grad()[i] * (cdf + x * pdf);
            }
        });
    }
    return out;
}

Tensor sigmoid(Tape& tape, const Tensor& a) {
    Tensor out(a.rows(), a.cols(), needs_grad(a));
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-a[i]));
    if (out.requires_grad()) {
        tape.record([a, out]() mutable {
            for (std::size_t i = 0; i < a.size(); ++i)
                a.grad()[i] += out.grad()[i] * out[i] * (1.0 - out[i]);
        });
    }
    return out;
}

namespace {

// softmax over one contiguous-with-stride lane, max-subtracted
void softmax_lane(const double* in, double* out, std::size_t n, std::size_t stride) {
    double mx = in[0];
    for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, in[i * stride]);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        out[i * stride] = std::exp(in[i * stride] - mx);
        sum += out[i * stride];
    }
    for (std::size_t i = 0; i < n; ++i) out[i * stride] /= sum;
}

}  // namespace

Tensor softmax(Tape& tape, const Tensor& a, int axis) {
    if (axis != 0 && axis != 1) throw std::invalid_argument("softmax: axis must be 0 or 1");
    for (double v : a.values())
        if (std::isnan(v)) throw std::invalid_argument("softmax: NaN input");
    Tensor out(a.rows(), a.cols(), needs_grad(a));
    if (axis == 1) {
        for (std::size_t r = 0; r < a.rows(); ++r)
            softmax_lane(a.values().data() + r * a.cols(), out.values().data() + r * a.cols(),
                         a.cols(), 1);
    } else {
        for (std::size_t c = 0; c < a.cols(); ++c)
            softmax_lane(a.values().data() + c, out.values().data() + c, a.rows(), a.cols());
    }
    if (out.requires_grad()) {
        tape.record([a, out, axis]() mutable {
            const std::size_t lanes = (axis == 1) ? a.rows() : a.cols();
            const std::size_t n = (axis == 1) ? a.cols() : a.rows();
            const std::size_t stride = (axis == 1) ? 1 : a.cols();
            for (std::size_t l = 0; l < lanes; ++l) {
                const std::size_t base = (axis == 1) ? l * a.cols() : l;
                double dot = 0.0;
                for (std::size_t i = 0; i < n; ++i)
                    dot += out.grad()[base + i * stride] * out[base + i * stride];
                for (std::size_t i = 0; i < n; ++i)
                    a.grad()[base + i * stride] +=
                        out[base + i * stride] * (out.grad()[base + i * stride] - dot);
            }
        });
    }
    return out;
}

Tensor layer_norm(Tape& tape, const Tensor& a, const Tensor& gain, const Tensor& bias, double eps) {
    if (gain.size() != a.cols() || bias.size() != a.cols())
        throw std::invalid_argument("layer_norm: gain/bias must match last axis size " +
                                    std::to_string(a.cols()));
    const std::size_t n = a.cols();
    Tensor out(a.rows(), n, a.requires_grad() || gain.requires_grad() || bias.requires_grad());
    std::vector<double> means(a.rows()), istds(a.rows());
    for (std::size_t r = 0; r < a.rows(); ++r) {
        double mean = 0.0;
        for (std::size_t c = 0; c < n; ++c) mean += a.at(r, c);
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t c = 0; c < n; ++c) {
            const double d = a.at(r, c) - mean;
            var += d * d;
        }
        var /= static_cast<double>(n);
        const double istd = 1.0 / std::sqrt(var + eps);
        means[r] = mean;
        istds[r] = istd;
        for (std::size_t c = 0; c < n; ++c)
            out.at(r, c) = (a.at(r, c) - mean) * istd * gain[c] + bias[c];
    }
    if (out.requires_grad()) {
        tape.record([a, gain, bias, out, means, istds, n]() mutable {
            for (std::size_t r = 0; r < a.rows(); ++r) {
                const double mean = means[r], istd = istds[r];
                // xhat and the two row sums needed for d_xhat -> dx
                double sum_dg = 0.0, sum_dgx = 0.0;
                for (std::size_t c = 0; c < n; ++c) {
                    const double xhat = (a.at(r, c) - mean) * istd;
                    const double go = out.grad()[r * n + c];
                    if (gain.requires_grad()) gain.grad()[c] += go * xhat;
                    if (bias.requires_grad()) bias.grad()[c] += go;
                    const double dxhat = go * gain[c];
                    sum_dg += dxhat;
                    sum_dgx += dxhat * xhat;
                }
                if (a.requires_grad()) {
                    const double inv_n = 1.0 / static_cast<double>(n);
                    for (std::size_t c = 0; c < n; ++c) {
                        const double xhat = (a.at(r, c) - mean) * istd;
                        const double dxhat = out.grad()[r * n + c] * gain[c];
                        a.grad()[r * n + c] +=
                            istd * (dxhat - inv_n * sum_dg - xhat * inv_n * sum_dgx);
                    }
                }
            }
        });
    }
    return out;
}

Tensor sum_all(Tape& tape, const Tensor& a) {
    Tensor out(1, 1, needs_grad(a));
    double acc = 0.0;
    for (double v : a.values()) acc += v;
    out[0] = acc;
    if (out.requires_grad()) {
        tape.record([a, out]() mutable {
            for (std::size_t i = 0; i < a.size(); ++i) a.grad()[i] += out.grad()[0];
        });
    }
    return out;
}

Tensor mean_all(Tape& tape, const Tensor& a) {
    Tensor s = sum_all(tape, a);
    return scale(tape, s, 1.0 / static_cast<double>(a.size()));
}

Tensor cross_entropy(Tape& tape, const Tensor& logits, std::size_t target) {
    if (logits.rows() != 1) throw std::invalid_argument("cross_entropy: logits must be 1xC");
    const std::size_t c = logits.cols();
    if (target >= c)
        throw std::out_of_range("cross_entropy: target " + std::to_string(target) +
                                " out of range for C=" + std::to_string(c));
    double mx = logits[0];
    for (std::size_t i = 1; i < c; ++i) mx = std::max(mx, logits[i]);
    double sum = 0.0;
    for (std::size_t i = 0; i < c; ++i) sum += std::exp(logits[i] - mx);
    Tensor out(1, 1, needs_grad(logits));
    out[0] = std::log(sum) + mx - logits[target];
    if (out.requires_grad()) {
        tape.record([logits, out, target, mx, sum, c]() mutable {
            const double go = out.grad()[0];
            for (std::size_t i = 0; i < c; ++i) {
                const double p = std::exp(logits[i] - mx) / sum;
                logits.grad()[i] += go * (p - (i == target ? 1.0 : 0.0));
            }
        });
    }
    return out;
}

Tensor mse_loss(Tape& tape, const Tensor& pred, const std::vector<double>& target) {
    if (pred.size() != target.size())
        throw std::invalid_argument("mse_loss: size mismatch " + std::to_string(pred.size()) +
                                    " vs " + std::to_string(target.size()));
    Tensor out(1, 1, needs_grad(pred));
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - target[i];
        acc += d * d;
    }
    out[0] = acc / static_cast<double>(pred.size());
    if (out.requires_grad()) {
        tape.record([pred, target, out]() mutable {
            const double s = 2.0 * out.grad()[0] / static_cast<double>(pred.size());
            for (std::size_t i = 0; i < pred.size(); ++i)
                pred.grad()[i] += s * (pred[i] - target[i]);
        });
    }
    return out;
}

Tensor bce_with_logits(Tape& tape, const Tensor& logits, const std::vector<double>& targets) {
    if (logits.size() != targets.size())
        throw std::invalid_argument("bce_with_logits: size mismatch");
    Tensor out(1, 1, needs_grad(logits));
    double acc = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        const double z = logits[i], t = targets[i];
        acc += std::max(z, 0.0) - z * t + std::log1p(std::exp(-std::abs(z)));
    }
    out[0] = acc / static_cast<double>(logits.size());
    if (out.requires_grad()) {
        tape.record([logits, targets, out]() mutable {
            const double s = out.grad()[0] / static_cast<double>(logits.size());
            for (std::size_t i = 0; i < logits.size(); ++i) {
                const double p = 1.0 / (1.0 + std::exp(-logits[i]));
                logits.grad()[i] += s * (p - targets[i]);
            }
        });
    }
    return out;
}

}  // namespace egomem
