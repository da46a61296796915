#include <abig/tensor.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <memory>

namespace abig {

namespace {
using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const EMat>;
using MMap = Eigen::Map<EMat>;

CMap as_map(const Tensor& t) {
    return CMap(t.data.data(), Eigen::Index(t.rows), Eigen::Index(t.cols));
}
} // namespace

Tensor& Tape::val_(Id id) {
    Node& n = nodes_[id];
    return n.ext ? *n.ext : n.own;
}

const Tensor& Tape::value(Id id) const {
    const Node& n = nodes_[id];
    return n.ext ? *n.ext : n.own;
}

std::vector<double>& Tape::grad_(Id id) {
    Node& n = nodes_[id];
    return n.ext ? n.ext->grad : n.own.grad;
}

const std::vector<double>& Tape::grad(Id id) const {
    const Node& n = nodes_[id];
    return n.ext ? n.ext->grad : n.own.grad;
}

Tape::Id Tape::leaf(Tensor* t) {
    if (t->requires_grad && t->grad.size() != t->size())
        t->grad.assign(t->size(), 0.0);
    Node n;
    n.ext = t;
    n.needs_grad = t->requires_grad;
    nodes_.push_back(std::move(n));
    return nodes_.size() - 1;
}

Tape::Id Tape::constant(Tensor t) {
    Node n;
    n.own = std::move(t);
    n.needs_grad = false;
    nodes_.push_back(std::move(n));
    return nodes_.size() - 1;
}

Tape::Id Tape::push_(Tensor value, bool needs_grad, std::function<void(Tape&, std::size_t)> back) {
    Node n;
    n.own = std::move(value);
    n.needs_grad = needs_grad;
    if (needs_grad) {
        n.own.requires_grad = true;
        n.own.grad.assign(n.own.size(), 0.0);
        n.back = std::move(back);
    }
    nodes_.push_back(std::move(n));
    return nodes_.size() - 1;
}

void Tape::check_finite_(const Tensor& t, const char* op) {
    for (double v : t.data)
        if (!std::isfinite(v)) fail(Err::NaNProduced, std::string("non-finite value out of ") + op);
}

void Tape::backward(Id loss) {
    if (value(loss).size() != 1) fail(Err::NonScalarLoss, "backward needs a scalar loss");
    if (!needs_(loss)) return;
    grad_(loss)[0] += 1.0;
    for (std::size_t i = nodes_.size(); i-- > 0;) {
        Node& n = nodes_[i];
        if (n.needs_grad && n.back) n.back(*this, i);
    }
}

Tape::Id Tape::matmul(Id a, Id b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    if (A.cols != B.rows) fail(Err::ShapeMismatch, "matmul inner dimensions disagree");
    Tensor out(A.rows, B.cols);
    MMap(out.data.data(), Eigen::Index(out.rows), Eigen::Index(out.cols)) = as_map(A) * as_map(B);
    check_finite_(out, "matmul");
    bool ng = needs_(a) || needs_(b);
    return push_(std::move(out), ng, [a, b](Tape& t, std::size_t self) {
        const Tensor& A = t.value(a);
        const Tensor& B = t.value(b);
        const Tensor& O = t.value(self);
        CMap G(O.grad.data(), Eigen::Index(O.rows), Eigen::Index(O.cols));
        if (t.needs_(a)) {
            MMap dA(t.grad_(a).data(), Eigen::Index(A.rows), Eigen::Index(A.cols));
            dA += G * as_map(B).transpose();
        }
        if (t.needs_(b)) {
            MMap dB(t.grad_(b).data(), Eigen::Index(B.rows), Eigen::Index(B.cols));
            dB += as_map(A).transpose() * G;
        }
    });
}

Tape::Id Tape::add(Id a, Id b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    if (A.rows != B.rows || A.cols != B.cols) fail(Err::ShapeMismatch, "add shapes disagree");
    Tensor out = A;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += B.data[i];
    out.requires_grad = false;
    out.grad.clear();
    check_finite_(out, "add");
    return push_(std::move(out), needs_(a) || needs_(b), [a, b](Tape& t, std::size_t self) {
        const auto& g = t.value(self).grad;
        if (t.needs_(a)) {
            auto& da = t.grad_(a);
            for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i];
        }
        if (t.needs_(b)) {
            auto& db = t.grad_(b);
            for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i];
        }
    });
}

Tape::Id Tape::add_bias(Id x, Id b) {
    const Tensor& X = value(x);
    const Tensor& B = value(b);
    if (B.rows != 1 || B.cols != X.cols) fail(Err::ShapeMismatch, "bias must be 1 x cols");
    Tensor out = X;
    out.requires_grad = false;
    out.grad.clear();
    for (std::size_t i = 0; i < X.rows; ++i)
        for (std::size_t j = 0; j < X.cols; ++j) out.at(i, j) += B.data[j];
    check_finite_(out, "add_bias");
    return push_(std::move(out), needs_(x) || needs_(b), [x, b](Tape& t, std::size_t self) {
        const Tensor& O = t.value(self);
        if (t.needs_(x)) {
            auto& dx = t.grad_(x);
            for (std::size_t i = 0; i < O.grad.size(); ++i) dx[i] += O.grad[i];
        }
        if (t.needs_(b)) {
            auto& db = t.grad_(b);
            for (std::size_t i = 0; i < O.rows; ++i)
                for (std::size_t j = 0; j < O.cols; ++j) db[j] += O.grad[i * O.cols + j];
        }
    });
}

Tape::Id Tape::add_const(Id x, const Tensor& t) {
    const Tensor& X = value(x);
    if (X.rows != t.rows || X.cols != t.cols) fail(Err::ShapeMismatch, "add_const shapes disagree");
    Tensor out = X;
    out.requires_grad = false;
    out.grad.clear();
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += t.data[i];
    check_finite_(out, "add_const");
    return push_(std::move(out), needs_(x), [x](Tape& tp, std::size_t self) {
        const auto& g = tp.value(self).grad;
        auto& dx = tp.grad_(x);
        for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i];
    });
}

Tape::Id Tape::add_scalar(Id x, double c) {
    Tensor shift(value(x).rows, value(x).cols, c);
    return add_const(x, shift);
}

Tape::Id Tape::scalar_mul(Id x, double s) {
    Tensor out = value(x);
    out.requires_grad = false;
    out.grad.clear();
    for (double& v : out.data) v *= s;
    check_finite_(out, "scalar_mul");
    return push_(std::move(out), needs_(x), [x, s](Tape& t, std::size_t self) {
        const auto& g = t.value(self).grad;
        auto& dx = t.grad_(x);
        for (std::size_t i = 0; i < g.size(); ++i) dx[i] += s * g[i];
    });
}

Tape::Id Tape::relu(Id x) {
    Tensor out = value(x);
    out.requires_grad = false;
    out.grad.clear();
    for (double& v : out.data) v = v > 0 ? v : 0.0;
    check_finite_(out, "relu");
    return push_(std::move(out), needs_(x), [x](Tape& t, std::size_t self) {
        const Tensor& X = t.value(x);
        const auto& g = t.value(self).grad;
        auto& dx = t.grad_(x);
        // subgradient at exactly zero is zero
        for (std::size_t i = 0; i < g.size(); ++i)
            if (X.data[i] > 0) dx[i] += g[i];
    });
}

Tape::Id Tape::sigmoid(Id x) {
    Tensor out = value(x);
    out.requires_grad = false;
    out.grad.clear();
    for (double& v : out.data) v = 1.0 / (1.0 + std::exp(-v));
    check_finite_(out, "sigmoid");
    return push_(std::move(out), needs_(x), [x](Tape& t, std::size_t self) {
        const Tensor& O = t.value(self);
        auto& dx = t.grad_(x);
        for (std::size_t i = 0; i < O.data.size(); ++i)
            dx[i] += O.grad[i] * O.data[i] * (1.0 - O.data[i]);
    });
}

Tape::Id Tape::softmax_rows(Id x) {
    const Tensor& X = value(x);
    Tensor out(X.rows, X.cols);
    for (std::size_t i = 0; i < X.rows; ++i) {
        double m = X.at(i, 0);
        for (std::size_t j = 1; j < X.cols; ++j) m = std::max(m, X.at(i, j));
        double z = 0;
        for (std::size_t j = 0; j < X.cols; ++j) z += std::exp(X.at(i, j) - m);
        for (std::size_t j = 0; j < X.cols; ++j) out.at(i, j) = std::exp(X.at(i, j) - m) / z;
    }
    check_finite_(out, "softmax_rows");
    return push_(std::move(out), needs_(x), [x](Tape& t, std::size_t self) {
        const Tensor& O = t.value(self);
        auto& dx = t.grad_(x);
        for (std::size_t i = 0; i < O.rows; ++i) {
            double dot = 0;
            for (std::size_t j = 0; j < O.cols; ++j)
                dot += O.grad[i * O.cols + j] * O.at(i, j);
            for (std::size_t j = 0; j < O.cols; ++j)
                dx[i * O.cols + j] += O.at(i, j) * (O.grad[i * O.cols + j] - dot);
        }
    });
}

Tape::Id Tape::softmax_cross_entropy(Id logits, const std::vector<int>& labels) {
    const Tensor& X = value(logits);
    if (labels.size() != X.rows) fail(Err::ShapeMismatch, "one label per logit row required");
    for (int y : labels)
        if (y < 0 || std::size_t(y) >= X.cols)
            fail(Err::ShapeMismatch, "label outside class range");
    double total = 0;
    for (std::size_t i = 0; i < X.rows; ++i) {
        double m = X.at(i, 0);
        for (std::size_t j = 1; j < X.cols; ++j) m = std::max(m, X.at(i, j));
        double z = 0;
        for (std::size_t j = 0; j < X.cols; ++j) z += std::exp(X.at(i, j) - m);
        total += m + std::log(z) - X.at(i, std::size_t(labels[i]));
    }
    Tensor out = Tensor::scalar(total / double(X.rows));
    check_finite_(out, "softmax_cross_entropy");
    return push_(std::move(out), needs_(logits), [logits, labels](Tape& t, std::size_t self) {
        double g = t.value(self).grad[0];
        const Tensor& X = t.value(logits);
        auto& dx = t.grad_(logits);
        double inv = 1.0 / double(X.rows);
        for (std::size_t i = 0; i < X.rows; ++i) {
            double m = X.at(i, 0);
            for (std::size_t j = 1; j < X.cols; ++j) m = std::max(m, X.at(i, j));
            double z = 0;
            for (std::size_t j = 0; j < X.cols; ++j) z += std::exp(X.at(i, j) - m);
            for (std::size_t j = 0; j < X.cols; ++j) {
                double p = std::exp(X.at(i, j) - m) / z;
                double ind = (std::size_t(labels[i]) == j) ? 1.0 : 0.0;
                dx[i * X.cols + j] += g * inv * (p - ind);
            }
        }
    });
}

Tape::Id Tape::dropout(Id x, double p, Rng& rng, bool train_mode) {
    if (p < 0.0 || p >= 1.0) fail(Err::ConfigInvalid, "dropout rate must lie in [0, 1)");
    const Tensor& X = value(x);
    if (!train_mode || p == 0.0) {
        // identity; eval mode must not consume randomness
        Tensor out = X;
        out.requires_grad = false;
        out.grad.clear();
        return push_(std::move(out), needs_(x), [x](Tape& t, std::size_t self) {
            const auto& g = t.value(self).grad;
            auto& dx = t.grad_(x);
            for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i];
        });
    }
    auto mask = std::make_shared<std::vector<double>>(X.size());
    double keep = 1.0 - p;
    for (auto& m : *mask) m = (rng.uniform01() < p) ? 0.0 : 1.0 / keep;
    Tensor out = X;
    out.requires_grad = false;
    out.grad.clear();
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= (*mask)[i];
    check_finite_(out, "dropout");
    return push_(std::move(out), needs_(x), [x, mask](Tape& t, std::size_t self) {
        const auto& g = t.value(self).grad;
        auto& dx = t.grad_(x);
        for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * (*mask)[i];
    });
}

Tape::Id Tape::mean_rows(Id x) {
    const Tensor& X = value(x);
    if (X.rows == 0) fail(Err::ShapeMismatch, "mean_rows of an empty tensor");
    Tensor out(1, X.cols);
    for (std::size_t i = 0; i < X.rows; ++i)
        for (std::size_t j = 0; j < X.cols; ++j) out.data[j] += X.at(i, j);
    for (double& v : out.data) v /= double(X.rows);
    check_finite_(out, "mean_rows");
    return push_(std::move(out), needs_(x), [x](Tape& t, std::size_t self) {
        const Tensor& X = t.value(x);
        const auto& g = t.value(self).grad;
        auto& dx = t.grad_(x);
        double inv = 1.0 / double(X.rows);
        for (std::size_t i = 0; i < X.rows; ++i)
            for (std::size_t j = 0; j < X.cols; ++j) dx[i * X.cols + j] += g[j] * inv;
    });
}

Tape::Id Tape::concat_cols(const std::vector<Id>& xs) {
    if (xs.empty()) fail(Err::ShapeMismatch, "concat of nothing");
    std::size_t rows = value(xs[0]).rows, cols = 0;
    bool ng = false;
    for (Id id : xs) {
        if (value(id).rows != rows) fail(Err::ShapeMismatch, "concat rows disagree");
        cols += value(id).cols;
        ng = ng || needs_(id);
    }
    Tensor out(rows, cols);
    std::size_t off = 0;
    for (Id id : xs) {
        const Tensor& X = value(id);
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < X.cols; ++j) out.at(i, off + j) = X.at(i, j);
        off += X.cols;
    }
    check_finite_(out, "concat_cols");
    auto parts = xs;
    return push_(std::move(out), ng, [parts](Tape& t, std::size_t self) {
        const Tensor& O = t.value(self);
        std::size_t off = 0;
        for (Id id : parts) {
            const Tensor& X = t.value(id);
            if (t.needs_(id)) {
                auto& dx = t.grad_(id);
                for (std::size_t i = 0; i < X.rows; ++i)
                    for (std::size_t j = 0; j < X.cols; ++j)
                        dx[i * X.cols + j] += O.grad[i * O.cols + off + j];
            }
            off += X.cols;
        }
    });
}

Tape::Id Tape::abs_sum(Id x) {
    const Tensor& X = value(x);
    double s = 0;
    for (double v : X.data) s += std::abs(v);
    Tensor out = Tensor::scalar(s);
    check_finite_(out, "abs_sum");
    return push_(std::move(out), needs_(x), [x](Tape& t, std::size_t self) {
        double g = t.value(self).grad[0];
        const Tensor& X = t.value(x);
        auto& dx = t.grad_(x);
        for (std::size_t i = 0; i < X.data.size(); ++i) {
            if (X.data[i] > 0) dx[i] += g;
            else if (X.data[i] < 0) dx[i] -= g;
        }
    });
}

Tape::Id Tape::reshape(Id x, std::size_t r, std::size_t c) {
    const Tensor& X = value(x);
    if (r * c != X.size()) fail(Err::ShapeMismatch, "reshape must keep the element count");
    Tensor out = X;
    out.requires_grad = false;
    out.grad.clear();
    out.rows = r;
    out.cols = c;
    return push_(std::move(out), needs_(x), [x](Tape& t, std::size_t self) {
        const auto& g = t.value(self).grad;
        auto& dx = t.grad_(x);
        for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i];
    });
}

Tape::Id Tape::symmetrize(Id x) {
    const Tensor& X = value(x);
    if (X.rows != X.cols) fail(Err::NonSquare, "symmetrize needs a square matrix");
    Tensor out(X.rows, X.cols);
    for (std::size_t i = 0; i < X.rows; ++i)
        for (std::size_t j = 0; j < X.cols; ++j)
            out.at(i, j) = 0.5 * (X.at(i, j) + X.at(j, i));
    check_finite_(out, "symmetrize");
    return push_(std::move(out), needs_(x), [x](Tape& t, std::size_t self) {
        const Tensor& O = t.value(self);
        auto& dx = t.grad_(x);
        for (std::size_t i = 0; i < O.rows; ++i)
            for (std::size_t j = 0; j < O.cols; ++j)
                dx[i * O.cols + j] += 0.5 * (O.grad[i * O.cols + j] + O.grad[j * O.cols + i]);
    });
}

Tape::Id Tape::set_diag_one(Id x) {
    const Tensor& X = value(x);
    if (X.rows != X.cols) fail(Err::NonSquare, "set_diag_one needs a square matrix");
    Tensor out = X;
    out.requires_grad = false;
    out.grad.clear();
    for (std::size_t i = 0; i < X.rows; ++i) out.at(i, i) = 1.0;
    check_finite_(out, "set_diag_one");
    return push_(std::move(out), needs_(x), [x](Tape& t, std::size_t self) {
        const Tensor& O = t.value(self);
        auto& dx = t.grad_(x);
        for (std::size_t i = 0; i < O.rows; ++i)
            for (std::size_t j = 0; j < O.cols; ++j)
                if (i != j) dx[i * O.cols + j] += O.grad[i * O.cols + j];
    });
}

Tape::Id Tape::sym_normalize(Id a) {
    const Tensor& A = value(a);
    if (A.rows != A.cols) fail(Err::NonSquare, "sym_normalize needs a square matrix");
    const std::size_t n = A.rows;
    auto scale = std::make_shared<std::vector<double>>(n);
    for (std::size_t i = 0; i < n; ++i) {
        double deg = 0;
        for (std::size_t j = 0; j < n; ++j) deg += A.at(i, j);
        if (deg <= 0) fail(Err::ConfigInvalid, "sym_normalize needs positive row sums");
        (*scale)[i] = 1.0 / std::sqrt(deg);
    }
    Tensor out(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            out.at(i, j) = A.at(i, j) * (*scale)[i] * (*scale)[j];
    check_finite_(out, "sym_normalize");
    return push_(std::move(out), needs_(a), [a, scale](Tape& t, std::size_t self) {
        const Tensor& A = t.value(a);
        const Tensor& O = t.value(self);
        const std::size_t n = A.rows;
        const auto& s = *scale;
        auto& dx = t.grad_(a);
        // y_ij = a_ij s_i s_j with s_i = deg_i^{-1/2}; the degree terms give
        // the two rank-one corrections below
        std::vector<double> tr(n, 0.0), uc(n, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                double ga = O.grad[i * n + j] * A.at(i, j);
                tr[i] += ga * s[j];
                uc[j] += ga * s[i];
            }
        for (std::size_t k = 0; k < n; ++k)
            for (std::size_t l = 0; l < n; ++l)
                dx[k * n + l] += O.grad[k * n + l] * s[k] * s[l]
                                 - 0.5 * s[k] * s[k] * s[k] * tr[k]
                                 - 0.5 * s[l] * s[l] * s[l] * uc[l];
    });
}

double grad_check(const std::function<Tape::Id(Tape&, Tape::Id)>& f, Tensor x, double eps) {
    if (eps <= 0) fail(Err::ConfigInvalid, "grad_check step must be positive");
    x.set_requires_grad(true);
    x.zero_grad();
    {
        Tape tape;
        Tape::Id in = tape.leaf(&x);
        Tape::Id out = f(tape, in);
        if (tape.value(out).size() != 1) fail(Err::NonScalarLoss, "grad_check needs a scalar output");
        tape.backward(out);
    }
    std::vector<double> analytic = x.grad;

    Tensor probe = x;
    probe.set_requires_grad(false);
    auto eval = [&](Tensor& t) {
        Tape tape;
        Tape::Id in = tape.leaf(&t);
        return tape.value(f(tape, in)).data[0];
    };
    double worst = 0;
    for (std::size_t i = 0; i < probe.size(); ++i) {
        double keep = probe.data[i];
        probe.data[i] = keep + eps;
        double up = eval(probe);
        probe.data[i] = keep - eps;
        double dn = eval(probe);
        probe.data[i] = keep;
        double fd = (up - dn) / (2.0 * eps);
        double rel = std::abs(analytic[i] - fd) / std::max(1.0, std::abs(analytic[i]));
        worst = std::max(worst, rel);
    }
    return worst;
}

} // namespace abig
