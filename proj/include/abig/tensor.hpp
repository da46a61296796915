#pragma once

#include <abig/common.hpp>
#include <abig/rng.hpp>

#include <cstddef>
#include <deque>
#include <functional>
#include <vector>

namespace abig {

// Dense row-major matrix of doubles. Gradients live in a parallel buffer
// that exists only when requires_grad is set.
struct Tensor {
    std::size_t rows = 0, cols = 0;
    std::vector<double> data;
    bool requires_grad = false;
    std::vector<double> grad;

    Tensor() = default;
    Tensor(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    static Tensor scalar(double v) {
        Tensor t(1, 1);
        t.data[0] = v;
        return t;
    }

    double& at(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double at(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
    std::size_t size() const { return rows * cols; }

    void set_requires_grad(bool on) {
        requires_grad = on;
        grad.assign(on ? size() : 0, 0.0);
    }
    void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }
};

// Define-by-run reverse-mode tape. A fresh tape is built for every forward
// pass; leaves point at externally owned tensors (parameters, inputs) and
// backward() accumulates into their grad buffers.
class Tape {
  public:
    using Id = std::size_t;

    // leaf backed by caller-owned storage; grads accumulate into t->grad
    Id leaf(Tensor* t);
    // tape-owned value that never receives gradients
    Id constant(Tensor t);

    const Tensor& value(Id id) const;
    const std::vector<double>& grad(Id id) const;

    Id matmul(Id a, Id b);
    Id add(Id a, Id b);                       // same-shape elementwise
    Id add_bias(Id x, Id b);                  // b is 1 x cols, added to each row
    Id add_const(Id x, const Tensor& t);      // t is not differentiated
    Id add_scalar(Id x, double c);
    Id scalar_mul(Id x, double s);
    Id relu(Id x);
    Id sigmoid(Id x);
    Id softmax_rows(Id x);
    // mean over rows of -log softmax(logits)[label]; log-sum-exp stabilized
    Id softmax_cross_entropy(Id logits, const std::vector<int>& labels);
    // train mode: zero with probability p, scale survivors by 1/(1-p);
    // eval mode: bitwise identity that consumes no randomness
    Id dropout(Id x, double p, Rng& rng, bool train_mode);
    Id mean_rows(Id x);                       // 1 x cols
    Id concat_cols(const std::vector<Id>& xs);
    Id abs_sum(Id x);                         // scalar sum of |entries|
    Id reshape(Id x, std::size_t r, std::size_t c);
    Id symmetrize(Id x);                      // (X + X^T) / 2, square only
    Id set_diag_one(Id x);                    // diagonal forced to 1, no grad there
    // D^{-1/2} A D^{-1/2} with D = row sums; input must be symmetric with
    // unit diagonal so every degree is >= 1
    Id sym_normalize(Id a);

    void backward(Id loss);

  private:
    struct Node {
        Tensor* ext = nullptr;
        Tensor own;
        bool needs_grad = false;
        std::function<void(Tape&, std::size_t)> back;
    };

    std::deque<Node> nodes_;

    Tensor& val_(Id id);
    std::vector<double>& grad_(Id id);
    bool needs_(Id id) const { return nodes_[id].needs_grad; }
    Id push_(Tensor value, bool needs_grad, std::function<void(Tape&, std::size_t)> back);
    static void check_finite_(const Tensor& t, const char* op);
};

// Max over entries of |analytic - central difference| / max(1, |analytic|)
// for a scalar-valued function of one tensor input.
double grad_check(const std::function<Tape::Id(Tape&, Tape::Id)>& f, Tensor x, double eps);

} // namespace abig
