#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace egomem {

// Dense row-major 2-D tensor of f64. Vectors are 1xN, scalars 1x1.
// Gradients live next to the values and are populated by Tape::backward.
class Tensor {
public:
    Tensor() = default;
    Tensor(std::size_t rows, std::size_t cols, bool requires_grad = false);

    static Tensor zeros(std::size_t rows, std::size_t cols, bool requires_grad = false);
    static Tensor full(std::size_t rows, std::size_t cols, double value, bool requires_grad = false);
    static Tensor from_values(std::size_t rows, std::size_t cols, std::vector<double> values,
                              bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);
    // uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) init
    static Tensor param(std::size_t rows, std::size_t cols, std::size_t fan_in, std::mt19937_64& rng);

    std::size_t rows() const { return d_->rows; }
    std::size_t cols() const { return d_->cols; }
    std::size_t size() const { return d_->values.size(); }
    bool requires_grad() const { return d_->requires_grad; }
    bool defined() const { return d_ != nullptr; }

    double& at(std::size_t r, std::size_t c) { return d_->values[r * d_->cols + c]; }
    double at(std::size_t r, std::size_t c) const { return d_->values[r * d_->cols + c]; }
    double& operator[](std::size_t i) { return d_->values[i]; }
    double operator[](std::size_t i) const { return d_->values[i]; }
    double item() const;

    std::vector<double>& values() { return d_->values; }
    const std::vector<double>& values() const { return d_->values; }
    // Shallow-const handle semantics: gradients stay writable through const
    // copies captured by backward rules.
    std::vector<double>& grad() const;
    void zero_grad();

    // Deep copy; gradients are not copied.
    Tensor clone() const;

    bool same_storage(const Tensor& other) const { return d_ == other.d_; }

private:
    struct Data {
        std::size_t rows = 0, cols = 0;
        std::vector<double> values;
        bool requires_grad = false;
        std::vector<double> grad;  // same size as values iff requires_grad
    };
    std::shared_ptr<Data> d_;
};

// Records backward rules during the forward pass. Every op appends its rule;
// backward() replays the rules in reverse, which is a valid topological order
// because every op's inputs were created before it.
class Tape {
public:
    void record(std::function<void()> rule) { rules_.push_back(std::move(rule)); }

    // Seeds loss.grad = 1 and propagates. The tape is consumed; a second
    // backward without reset() is an error.
    void backward(const Tensor& loss);
    void reset();

    std::size_t num_ops() const { return rules_.size(); }
    bool consumed() const { return consumed_; }

private:
    std::vector<std::function<void()>> rules_;
    bool consumed_ = false;
};

// --- elementwise & structural ops ------------------------------------------

Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape& tape, const Tensor& a, double c);
// matrix [m x n] + row vector [1 x n], broadcast over rows
Tensor add_row(Tape& tape, const Tensor& a, const Tensor& row);
Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor transpose(Tape& tape, const Tensor& a);
Tensor slice_cols(Tape& tape, const Tensor& a, std::size_t start, std::size_t count);
Tensor slice_rows(Tape& tape, const Tensor& a, std::size_t start, std::size_t count);
Tensor concat_cols(Tape& tape, const std::vector<Tensor>& parts);
Tensor concat_rows(Tape& tape, const std::vector<Tensor>& parts);
// same element count, new shape; gradient passes through unchanged
Tensor reshape(Tape& tape, const Tensor& a, std::size_t rows, std::size_t cols);

// column-wise max over rows -> 1 x cols; gradient flows to the first argmax
Tensor max_rows(Tape& tape, const Tensor& a);

// --- nonlinearities & normalization -----------------------------------------

Tensor gelu(Tape& tape, const Tensor& a);
Tensor sigmoid(Tape& tape, const Tensor& a);
// axis = 1: softmax over each row; axis = 0: over each column
Tensor softmax(Tape& tape, const Tensor& a, int axis);
Tensor layer_norm(Tape& tape, const Tensor& a, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);

// --- losses / reductions -----------------------------------------------------

Tensor sum_all(Tape& tape, const Tensor& a);
Tensor mean_all(Tape& tape, const Tensor& a);
// logits is 1xC; returns -log softmax(logits)[target]
Tensor cross_entropy(Tape& tape, const Tensor& logits, std::size_t target);
// mean squared error against a constant target (no grad into target)
Tensor mse_loss(Tape& tape, const Tensor& pred, const std::vector<double>& target);
// mean over entries of binary cross-entropy with logits, constant targets
Tensor bce_with_logits(Tape& tape, const Tensor& logits, const std::vector<double>& targets);

std::string shape_str(const Tensor& t);

}  // namespace egomem
