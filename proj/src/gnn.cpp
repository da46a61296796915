#include <abig/gnn.hpp>

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

ClassifierParams ClassifierParams::init(const GnnConfig& cfg, Rng& rng) {
    if (cfg.in_dim == 0 || cfg.gcn_dims.empty() || cfg.n_classes < 2)
        fail(Err::ConfigInvalid, "classifier needs input width, gcn layers and >= 2 classes");
    if (cfg.dropout < 0.0 || cfg.dropout >= 1.0)
        fail(Err::ConfigInvalid, "dropout rate must lie in [0, 1)");
    ClassifierParams p;
    p.cfg = cfg;
    std::size_t prev = cfg.in_dim;
    for (std::size_t h : cfg.gcn_dims) {
        if (h == 0) fail(Err::ConfigInvalid, "zero-width gcn layer");
        p.gcn_w.push_back(glorot(rng, prev, h));
        p.gcn_b.push_back(Tensor(1, h));
        prev = h;
    }
    std::size_t width = p.jk_width();
    std::vector<std::size_t> outs = cfg.head_dims;
    outs.push_back(cfg.n_classes);
    for (std::size_t h : outs) {
        if (h == 0) fail(Err::ConfigInvalid, "zero-width head layer");
        p.head_w.push_back(glorot(rng, width, h));
        p.head_b.push_back(Tensor(1, h));
        width = h;
    }
    return p;
}

std::vector<Tensor*> ClassifierParams::all() {
    std::vector<Tensor*> out;
    for (std::size_t i = 0; i < gcn_w.size(); ++i) {
        out.push_back(&gcn_w[i]);
        out.push_back(&gcn_b[i]);
    }
    for (std::size_t i = 0; i < head_w.size(); ++i) {
        out.push_back(&head_w[i]);
        out.push_back(&head_b[i]);
    }
    return out;
}

std::size_t ClassifierParams::count() const {
    std::size_t n = 0;
    for (const auto& t : gcn_w) n += t.size();
    for (const auto& t : gcn_b) n += t.size();
    for (const auto& t : head_w) n += t.size();
    for (const auto& t : head_b) n += t.size();
    return n;
}

std::size_t ClassifierParams::jk_width() const {
    std::size_t w = 0;
    for (std::size_t h : cfg.gcn_dims) w += h;
    return w;
}

void ClassifierParams::set_requires_grad(bool on) {
    for (Tensor* t : all()) t->set_requires_grad(on);
}

void ClassifierParams::zero_grad() {
    for (Tensor* t : all()) t->zero_grad();
}

Tape::Id normalize_adjacency(Tape& tape, Tape::Id a) {
    const Tensor& A = tape.value(a);
    if (A.rows != A.cols) fail(Err::NonSquare, "adjacency must be square");
    for (std::size_t i = 0; i < A.rows; ++i) {
        if (A.at(i, i) != 1.0)
            fail(Err::AsymmetricInput, "adjacency diagonal must be exactly 1");
        for (std::size_t j = i + 1; j < A.cols; ++j)
            if (A.at(i, j) != A.at(j, i))
                fail(Err::AsymmetricInput, "adjacency must be symmetric");
        for (std::size_t j = 0; j < A.cols; ++j) {
            double v = A.at(i, j);
            if (v < 0.0 || v > 1.0)
                fail(Err::AsymmetricInput, "adjacency entries must lie in [0,1]");
        }
    }
    return tape.sym_normalize(a);
}

std::vector<Tape::Id> gcn_forward(Tape& tape, Tape::Id x, Tape::Id a_hat,
                                  ClassifierParams& params, bool train_mode, Rng& rng) {
    if (tape.value(x).cols != params.cfg.in_dim)
        fail(Err::ShapeMismatch, "feature width disagrees with the classifier input width");
    std::vector<Tape::Id> outs;
    Tape::Id h = x;
    for (std::size_t l = 0; l < params.gcn_w.size(); ++l) {
        Tape::Id prop = tape.matmul(a_hat, h);
        Tape::Id lin = tape.add_bias(tape.matmul(prop, tape.leaf(&params.gcn_w[l])),
                                     tape.leaf(&params.gcn_b[l]));
        h = tape.dropout(tape.relu(lin), params.cfg.dropout, rng, train_mode);
        outs.push_back(h);
    }
    return outs;
}

Tape::Id jk_logits(Tape& tape, const std::vector<Tape::Id>& layer_outputs,
                   ClassifierParams& params, bool train_mode, Rng& rng) {
    if (layer_outputs.empty()) fail(Err::ShapeMismatch, "no layer outputs to pool");
    std::vector<Tape::Id> pooled;
    for (Tape::Id h : layer_outputs) pooled.push_back(tape.mean_rows(h));
    Tape::Id h = tape.concat_cols(pooled);
    for (std::size_t l = 0; l < params.head_w.size(); ++l) {
        h = tape.add_bias(tape.matmul(h, tape.leaf(&params.head_w[l])),
                          tape.leaf(&params.head_b[l]));
        if (l + 1 < params.head_w.size())
            h = tape.dropout(tape.relu(h), params.cfg.dropout, rng, train_mode);
    }
    return h;
}

Tape::Id jk_classify(Tape& tape, const std::vector<Tape::Id>& layer_outputs,
                     ClassifierParams& params, bool train_mode, Rng& rng) {
    return tape.softmax_rows(jk_logits(tape, layer_outputs, params, train_mode, rng));
}

int predict(const Tensor& features, const Tensor& adjacency, ClassifierParams& params) {
    Tape tape;
    Rng unused(0);
    Tape::Id x = tape.constant(features);
    Tape::Id a_hat = normalize_adjacency(tape, tape.constant(adjacency));
    auto layers = gcn_forward(tape, x, a_hat, params, false, unused);
    Tape::Id probs = jk_classify(tape, layers, params, false, unused);
    const Tensor& p = tape.value(probs);
    int best = 0;
    for (std::size_t j = 1; j < p.cols; ++j)
        if (p.data[j] > p.data[std::size_t(best)]) best = int(j);
    return best;
}

} // namespace abig
