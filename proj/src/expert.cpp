#include "glider/expert.hpp"

#include <cmath>

namespace glider {

using linalg::matvec;

ToyBaseModel ToyBaseModel::make(std::size_t d, std::size_t m, std::uint64_t seed) {
    if (d < 1 || m < 1) {
        raise(Errc::bad_argument, "ToyBaseModel: d and m must be >= 1");
    }
    ToyBaseModel model;
    model.d = d;
    model.m = m;
    model.seed = seed;
    Rng rng(mix_seed(seed, 0xba5e0000ULL));
    const double scale = 1.0 / std::sqrt(static_cast<double>(d));
    model.weights.reserve(m);
    model.biases.reserve(m);
    for (std::size_t layer = 0; layer < m; ++layer) {
        Mat w(d, d);
        for (double& x : w.data) x = rng.uniform(-1.0, 1.0) * scale;
        Vec b(d);
        for (double& x : b) x = rng.uniform(-1.0, 1.0) * scale;
        model.weights.push_back(std::move(w));
        model.biases.push_back(std::move(b));
    }
    return model;
}

BaseForwardResult base_forward(const ToyBaseModel& model, const Vec& u) {
    if (u.size() != model.d) {
        raise(Errc::dim_mismatch, "base_forward: input dim " + std::to_string(u.size()) +
                                      " != d " + std::to_string(model.d));
    }
    linalg::check_finite(u, "base_forward");
    BaseForwardResult r;
    r.activations.reserve(model.m);
    Vec x = u;
    for (std::size_t layer = 0; layer < model.m; ++layer) {
        r.activations.push_back(x);
        Vec y = matvec(model.weights[layer], x);
        linalg::axpy(1.0, model.biases[layer], y);
        if (layer + 1 < model.m) {
            for (double& v : y) v = std::tanh(v);
        }
        x = std::move(y);
    }
    r.output = std::move(x);
    return r;
}

LoraModule make_lora_module(std::size_t d, std::size_t rank, double lora_scaling, Rng& rng) {
    if (rank < 1 || rank > d) {
        raise(Errc::bad_argument, "make_lora_module: rank must be in [1, d]");
    }
    LoraModule mod;
    mod.rank = rank;
    mod.lora_scaling = lora_scaling;
    mod.a = Mat(rank, d);
    const double scale = 1.0 / std::sqrt(static_cast<double>(d));
    for (double& x : mod.a.data) x = rng.uniform(-1.0, 1.0) * scale;
    mod.b = Mat(d, rank); // zero: the initial update is a no-op
    return mod;
}

Vec lora_delta(const LoraModule& mod, const Vec& u) {
    Vec au = matvec(mod.a, u);
    Vec bau = matvec(mod.b, au);
    const double c = mod.scale();
    for (double& v : bau) v *= c;
    return bau;
}

Vec lora_forward(const Mat& w, const LoraModule& mod, const Vec& u) {
    if (w.cols != u.size() || mod.a.cols != u.size() || mod.b.rows != w.rows) {
        raise(Errc::dim_mismatch, "lora_forward: inconsistent shapes");
    }
    Vec y = matvec(w, u);
    linalg::axpy(1.0, lora_delta(mod, u), y);
    return y;
}

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Vec gated_forward(const Mat& w, const LoraModule& mod, const Vec& u) {
    if (!mod.gate) {
        raise(Errc::missing_gate, "gated_forward: gate vector absent");
    }
    if (w.cols != u.size() || mod.a.cols != u.size() || mod.b.rows != w.rows ||
        mod.gate->size() != u.size()) {
        raise(Errc::dim_mismatch, "gated_forward: inconsistent shapes");
    }
    const double g = logistic(linalg::dot(*mod.gate, u));
    Vec y = matvec(w, u);
    linalg::axpy(g, lora_delta(mod, u), y);
    return y;
}

ExpertModel make_expert(const std::string& name, const ToyBaseModel& base,
                        std::size_t rank, double lora_scaling, Rng& rng) {
    ExpertModel e;
    e.name = name;
    e.modules.reserve(base.m);
    for (std::size_t layer = 0; layer < base.m; ++layer) {
        e.modules.push_back(make_lora_module(base.d, rank, lora_scaling, rng));
    }
    return e;
}

namespace {

Vec adapted_forward(const ToyBaseModel& base, const ExpertModel& expert, const Vec& u, bool gated) {
    if (expert.modules.size() != base.m) {
        raise(Errc::dim_mismatch, "expert_forward: expert has " +
                                      std::to_string(expert.modules.size()) + " modules, base has " +
                                      std::to_string(base.m));
    }
    Vec x = u;
    for (std::size_t layer = 0; layer < base.m; ++layer) {
        Vec y = gated ? gated_forward(base.weights[layer], expert.modules[layer], x)
                      : lora_forward(base.weights[layer], expert.modules[layer], x);
        linalg::axpy(1.0, base.biases[layer], y);
        if (layer + 1 < base.m) {
            for (double& v : y) v = std::tanh(v);
        }
        x = std::move(y);
    }
    return x;
}

} // namespace

Vec expert_forward(const ToyBaseModel& base, const ExpertModel& expert, const Vec& u) {
    return adapted_forward(base, expert, u, false);
}

Vec expert_forward_gated(const ToyBaseModel& base, const ExpertModel& expert, const Vec& u) {
    return adapted_forward(base, expert, u, true);
}

} // namespace glider
