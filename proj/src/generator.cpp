#include <abig/generator.hpp>

#include <cmath>

namespace abig {

namespace {

Tensor glorot(Rng& rng, std::size_t fan_in, std::size_t fan_out) {
    Tensor w(fan_in, fan_out);
    double limit = std::sqrt(6.0 / double(fan_in + fan_out));
    for (auto& v : w.data) v = rng.uniform(-limit, limit);
    return w;
}

} // namespace

GeneratorParams GeneratorParams::init(const GeneratorConfig& cfg, Rng& rng) {
    if (cfg.in_dim == 0) fail(Err::ConfigInvalid, "generator input width must be positive");
    if (cfg.tau_init <= 0 || cfg.tau_min <= 0 || cfg.tau_min > cfg.tau_init)
        fail(Err::ConfigInvalid, "temperature schedule needs 0 < tau_min <= tau_init");
    if (cfg.gamma <= 0 || cfg.gamma > 1) fail(Err::ConfigInvalid, "decay must lie in (0, 1]");
    GeneratorParams p;
    p.cfg = cfg;
    std::size_t prev = 2 * cfg.in_dim;
    for (std::size_t h : cfg.hidden) {
        if (h == 0) fail(Err::ConfigInvalid, "zero-width generator layer");
        p.w.push_back(glorot(rng, prev, h));
        p.b.push_back(Tensor(1, h));
        prev = h;
    }
    p.w.push_back(glorot(rng, prev, 1));
    p.b.push_back(Tensor(1, 1));
    return p;
}

std::vector<Tensor*> GeneratorParams::all() {
    std::vector<Tensor*> out;
    for (std::size_t i = 0; i < w.size(); ++i) {
        out.push_back(&w[i]);
        out.push_back(&b[i]);
    }
    return out;
}

std::size_t GeneratorParams::count() const {
    std::size_t n = 0;
    for (const auto& t : w) n += t.size();
    for (const auto& t : b) n += t.size();
    return n;
}

void GeneratorParams::set_requires_grad(bool on) {
    for (Tensor* t : all()) t->set_requires_grad(on);
}

void GeneratorParams::zero_grad() {
    for (Tensor* t : all()) t->zero_grad();
}

Tape::Id pairwise_logits(Tape& tape, const Tensor& features, GeneratorParams& params) {
    const std::size_t n = features.rows, d = features.cols;
    if (n == 0) fail(Err::ShapeMismatch, "need at least one patch");
    if (d != params.cfg.in_dim)
        fail(Err::ShapeMismatch, "feature width disagrees with the generator input width");
    Tensor pairs(n * n, 2 * d);
    for (std::size_t s = 0; s < n; ++s)
        for (std::size_t t = 0; t < n; ++t) {
            double* row = pairs.data.data() + (s * n + t) * 2 * d;
            for (std::size_t j = 0; j < d; ++j) {
                row[j] = features.at(s, j);
                row[d + j] = features.at(t, j);
            }
        }
    Tape::Id h = tape.constant(std::move(pairs));
    for (std::size_t l = 0; l < params.w.size(); ++l) {
        h = tape.add_bias(tape.matmul(h, tape.leaf(&params.w[l])), tape.leaf(&params.b[l]));
        if (l + 1 < params.w.size()) h = tape.relu(h);
    }
    return tape.reshape(h, n, n);
}

Tape::Id gumbel_sigmoid(Tape& tape, Tape::Id logits, double tau, Rng& rng, bool train_mode) {
    if (tau <= 0) fail(Err::NonPositiveTemperature, "temperature must be positive");
    const Tensor& L = tape.value(logits);
    Tape::Id shifted = logits;
    if (train_mode) {
        Tensor noise(L.rows, L.cols);
        for (auto& g : noise.data) g = rng.gumbel();
        shifted = tape.add_const(logits, noise);
    }
    return tape.sigmoid(tape.scalar_mul(shifted, 1.0 / tau));
}

Tape::Id symmetrize_self_loop(Tape& tape, Tape::Id a) {
    return tape.set_diag_one(tape.symmetrize(a));
}

Tape::Id sparsity_penalty(Tape& tape, Tape::Id a, double lambda) {
    if (lambda < 0) fail(Err::ConfigInvalid, "sparsity weight must be nonnegative");
    return tape.scalar_mul(tape.abs_sum(a), lambda);
}

Tape::Id sample_adjacency(Tape& tape, const Tensor& features, GeneratorParams& params,
                          double tau, Rng& rng, bool train_mode) {
    Tape::Id logits = pairwise_logits(tape, features, params);
    Tape::Id soft = gumbel_sigmoid(tape, logits, tau, rng, train_mode);
    return symmetrize_self_loop(tape, soft);
}

Tensor eval_adjacency(const Tensor& features, GeneratorParams& params, AdjacencyMode mode) {
    Tape tape;
    Rng unused(0);
    Tape::Id a = sample_adjacency(tape, features, params, params.cfg.tau_min, unused, false);
    Tensor out = tape.value(a);
    out.requires_grad = false;
    out.grad.clear();
    if (mode == AdjacencyMode::Hard) {
        for (std::size_t i = 0; i < out.rows; ++i)
            for (std::size_t j = 0; j < out.cols; ++j)
                if (i != j) out.at(i, j) = out.at(i, j) >= 0.5 ? 1.0 : 0.0;
    }
    return out;
}

} // namespace abig
