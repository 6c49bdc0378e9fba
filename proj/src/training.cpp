#include "glider/training.hpp"

#include <bit>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace glider {

using linalg::matvec;

SyntheticTask make_task(const std::string& name, std::size_t d, std::uint64_t seed) {
    SyntheticTask task;
    task.name = name;
    task.seed = seed;
    Rng rng(mix_seed(seed, 0x7a5cULL));
    const double scale = 1.0 / std::sqrt(static_cast<double>(d));
    task.target_map = Mat(d, d);
    for (double& x : task.target_map.data) x = rng.normal() * scale;
    task.input_center = Vec(d);
    for (double& x : task.input_center) x = rng.uniform(-1.0, 1.0);
    task.input_spread = 0.3;
    char sig[32];
    std::snprintf(sig, sizeof(sig), "%016" PRIx64, mix_seed(seed, fnv1a64(name)));
    task.description_text = "Task '" + name + "': map " + std::to_string(d) +
                            "-dimensional inputs near its own cluster center through the fixed "
                            "linear transform with signature " + sig + ".";
    return task;
}

std::vector<Sample> sample_batch(const SyntheticTask& task, std::size_t n, Rng& rng) {
    if (n < 1) {
        raise(Errc::bad_argument, "sample_batch: n must be >= 1");
    }
    const std::size_t d = task.input_center.size();
    std::vector<Sample> batch;
    batch.reserve(n);
    for (std::size_t s = 0; s < n; ++s) {
        Vec input(d);
        for (std::size_t i = 0; i < d; ++i) {
            input[i] = task.input_center[i] + task.input_spread * rng.normal();
        }
        Sample sample;
        sample.target = matvec(task.target_map, input);
        sample.input = std::move(input);
        batch.push_back(std::move(sample));
    }
    return batch;
}

double batch_loss(const std::function<Vec(const Vec&)>& forward, const std::vector<Sample>& batch) {
    double total = 0.0;
    for (const Sample& s : batch) {
        const Vec out = forward(s.input);
        double se = 0.0;
        for (std::size_t i = 0; i < out.size(); ++i) {
            const double e = out[i] - s.target[i];
            se += e * e;
        }
        total += se / static_cast<double>(out.size());
    }
    return total / static_cast<double>(batch.size());
}

void write_metrics_csv(const std::vector<StepLoss>& log, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        raise(Errc::io_error, "write_metrics_csv: cannot open " + path.string());
    }
    out << "step,loss\n";
    char buf[64];
    for (const StepLoss& sl : log) {
        std::snprintf(buf, sizeof(buf), "%zu,%.9g\n", sl.step, sl.loss);
        out << buf;
    }
}

BatchGrads lora_loss_and_grads(const ToyBaseModel& base, const ExpertModel& expert,
                               const std::vector<Sample>& batch, bool gated, bool want_ab,
                               bool want_gate) {
    const std::size_t m = base.m;
    const std::size_t d = base.d;
    BatchGrads g;
    if (want_ab) {
        for (std::size_t l = 0; l < m; ++l) {
            g.a_grad.emplace_back(expert.modules[l].a.rows, expert.modules[l].a.cols);
            g.b_grad.emplace_back(expert.modules[l].b.rows, expert.modules[l].b.cols);
        }
    }
    if (want_gate) {
        g.gate_grad.assign(m, Vec(d, 0.0));
    }

    const double inv_n = 1.0 / static_cast<double>(batch.size());
    const double inv_d = 1.0 / static_cast<double>(d);

    // per-layer forward tape
    std::vector<Vec> xs(m + 1), au(m), bau(m);
    std::vector<double> sig(m, 1.0);

    for (const Sample& sample : batch) {
        xs[0] = sample.input;
        for (std::size_t l = 0; l < m; ++l) {
            const LoraModule& mod = expert.modules[l];
            au[l] = matvec(mod.a, xs[l]);
            bau[l] = matvec(mod.b, au[l]);
            if (gated) {
                if (!mod.gate) {
                    raise(Errc::missing_gate, "lora_loss_and_grads: gate absent");
                }
                sig[l] = logistic(linalg::dot(*mod.gate, xs[l]));
            } else {
                sig[l] = 1.0;
            }
            Vec y = matvec(base.weights[l], xs[l]);
            linalg::axpy(1.0, base.biases[l], y);
            linalg::axpy(mod.scale() * sig[l], bau[l], y);
            if (l + 1 < m) {
                for (double& v : y) v = std::tanh(v);
            }
            xs[l + 1] = std::move(y);
        }

        // loss and output gradient
        Vec grad(d);
        double se = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            const double e = xs[m][i] - sample.target[i];
            se += e * e;
            grad[i] = 2.0 * e * inv_d * inv_n;
        }
        g.loss += se * inv_d * inv_n;

        // backward
        for (std::size_t l = m; l-- > 0;) {
            if (l + 1 < m) {
                // xs[l+1] holds tanh(y); tanh' = 1 - tanh²
                for (std::size_t i = 0; i < d; ++i) {
                    const double t = xs[l + 1][i];
                    grad[i] *= (1.0 - t * t);
                }
            }
            const LoraModule& mod = expert.modules[l];
            const double c = mod.scale();
            const Vec q = matvec(linalg::transpose(mod.b), grad); // Bᵀ g, r-dim
            const double gdot = linalg::dot(grad, bau[l]);        // gᵀ·BAx

            if (want_ab) {
                Mat& da = g.a_grad[l];
                const double cs = c * sig[l];
                for (std::size_t r = 0; r < mod.rank; ++r) {
                    for (std::size_t j = 0; j < d; ++j) {
                        da.at(r, j) += cs * q[r] * xs[l][j];
                    }
                }
                Mat& db = g.b_grad[l];
                for (std::size_t i = 0; i < d; ++i) {
                    for (std::size_t r = 0; r < mod.rank; ++r) {
                        db.at(i, r) += cs * grad[i] * au[l][r];
                    }
                }
            }
            double gate_term = 0.0;
            if (gated) {
                gate_term = c * gdot * sig[l] * (1.0 - sig[l]); // σ' = σ(1−σ)
                if (want_gate) {
                    linalg::axpy(gate_term, xs[l], g.gate_grad[l]);
                }
            }
            if (l > 0) {
                Vec gx = matvec(linalg::transpose(base.weights[l]), grad);
                linalg::axpy(c * sig[l], matvec(linalg::transpose(mod.a), q), gx);
                if (gated) {
                    linalg::axpy(gate_term, *mod.gate, gx);
                }
                grad = std::move(gx);
            }
        }
    }
    return g;
}

namespace {

class AdamW {
public:
    AdamW(std::size_t n, double lr, double weight_decay)
        : lr_(lr), wd_(weight_decay), m1_(n, 0.0), m2_(n, 0.0) {}

    void step(Vec& params, const Vec& grads, double lr_scale) {
        ++t_;
        const double lr = lr_ * lr_scale;
        const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        for (std::size_t i = 0; i < params.size(); ++i) {
            m1_[i] = beta1_ * m1_[i] + (1.0 - beta1_) * grads[i];
            m2_[i] = beta2_ * m2_[i] + (1.0 - beta2_) * grads[i] * grads[i];
            const double mhat = m1_[i] / bc1;
            const double vhat = m2_[i] / bc2;
            params[i] -= lr * (mhat / (std::sqrt(vhat) + eps_) + wd_ * params[i]);
        }
    }

private:
    double lr_;
    double wd_;
    double beta1_ = 0.9;
    double beta2_ = 0.999;
    double eps_ = 1e-8;
    std::size_t t_ = 0;
    Vec m1_, m2_;
};

double warmup_scale(std::size_t step, std::size_t total, double warmup_ratio) {
    const auto warm = static_cast<std::size_t>(warmup_ratio * static_cast<double>(total));
    if (warm == 0 || step > warm) return 1.0;
    return static_cast<double>(step) / static_cast<double>(warm);
}

void gather_ab(const ExpertModel& e, Vec& out) {
    out.clear();
    for (const LoraModule& mod : e.modules) {
        out.insert(out.end(), mod.a.data.begin(), mod.a.data.end());
        out.insert(out.end(), mod.b.data.begin(), mod.b.data.end());
    }
}

void scatter_ab(ExpertModel& e, const Vec& in) {
    std::size_t pos = 0;
    for (LoraModule& mod : e.modules) {
        std::copy(in.begin() + pos, in.begin() + pos + mod.a.data.size(), mod.a.data.begin());
        pos += mod.a.data.size();
        std::copy(in.begin() + pos, in.begin() + pos + mod.b.data.size(), mod.b.data.begin());
        pos += mod.b.data.size();
    }
}

void gather_ab_grads(const BatchGrads& g, Vec& out) {
    out.clear();
    for (std::size_t l = 0; l < g.a_grad.size(); ++l) {
        out.insert(out.end(), g.a_grad[l].data.begin(), g.a_grad[l].data.end());
        out.insert(out.end(), g.b_grad[l].data.begin(), g.b_grad[l].data.end());
    }
}

} // namespace

TrainRun train_lora(const ToyBaseModel& base, const SyntheticTask& task, const TrainConfig& cfg) {
    Rng rng(mix_seed(cfg.seed, task.seed));
    Rng train_rng = rng.fork(1);
    Rng eval_rng = rng.fork(2);

    TrainRun run;
    run.expert = make_expert(task.name, base, cfg.rank, cfg.lora_scaling, rng);

    Vec params;
    gather_ab(run.expert, params);
    AdamW opt(params.size(), cfg.learning_rate, cfg.weight_decay);
    Vec grads;
    run.log.reserve(cfg.lora_steps);
    for (std::size_t step = 1; step <= cfg.lora_steps; ++step) {
        const auto batch = sample_batch(task, cfg.batch_size, train_rng);
        const BatchGrads g = lora_loss_and_grads(base, run.expert, batch, false, true, false);
        if (!std::isfinite(g.loss)) {
            raise(Errc::diverged, "train_lora: non-finite loss at step " + std::to_string(step));
        }
        gather_ab_grads(g, grads);
        opt.step(params, grads, warmup_scale(step, cfg.lora_steps, cfg.warmup_ratio));
        scatter_ab(run.expert, params);
        run.log.push_back({step, g.loss});
    }

    const std::size_t eval_n = 256;
    const auto eval = sample_batch(task, eval_n, eval_rng);
    run.eval_loss = batch_loss(
        [&](const Vec& u) { return expert_forward(base, run.expert, u); }, eval);
    run.baseline_loss = batch_loss(
        [&](const Vec& u) { return base_forward(base, u).output; }, eval);
    return run;
}

TrainRun train_gate(const ToyBaseModel& base, ExpertModel expert, const SyntheticTask& task,
                    const TrainConfig& cfg) {
    Rng rng(mix_seed(mix_seed(cfg.seed, task.seed), 0x9a7eULL));
    Rng train_rng = rng.fork(1);
    Rng eval_rng = rng.fork(2);

    const std::size_t d = base.d;
    for (LoraModule& mod : expert.modules) {
        mod.gate = Vec(d, 0.0); // neutral σ = 0.5 start
    }

    Vec params(base.m * d, 0.0);
    AdamW opt(params.size(), cfg.learning_rate, cfg.weight_decay);
    TrainRun run;
    run.log.reserve(cfg.gate_steps);
    for (std::size_t step = 1; step <= cfg.gate_steps; ++step) {
        const auto batch = sample_batch(task, cfg.batch_size, train_rng);
        const BatchGrads g = lora_loss_and_grads(base, expert, batch, true, false, true);
        if (!std::isfinite(g.loss)) {
            raise(Errc::diverged, "train_gate: non-finite loss at step " + std::to_string(step));
        }
        Vec grads;
        for (const Vec& gg : g.gate_grad) grads.insert(grads.end(), gg.begin(), gg.end());
        opt.step(params, grads, warmup_scale(step, cfg.gate_steps, cfg.warmup_ratio));
        for (std::size_t l = 0; l < base.m; ++l) {
            std::copy(params.begin() + static_cast<std::ptrdiff_t>(l * d),
                      params.begin() + static_cast<std::ptrdiff_t>((l + 1) * d),
                      expert.modules[l].gate->begin());
        }
        run.log.push_back({step, g.loss});
    }

    const std::size_t eval_n = 256;
    const auto eval = sample_batch(task, eval_n, eval_rng);
    run.eval_loss = batch_loss(
        [&](const Vec& u) { return expert_forward_gated(base, expert, u); }, eval);
    run.baseline_loss = batch_loss(
        [&](const Vec& u) { return expert_forward(base, expert, u); }, eval);
    run.expert = std::move(expert);
    return run;
}

TrainRun train_expert(const ToyBaseModel& base, const SyntheticTask& task, const TrainConfig& cfg) {
    TrainRun lora = train_lora(base, task, cfg);
    TrainRun gate = train_gate(base, std::move(lora.expert), task, cfg);
    // keep the LoRA-phase log followed by the gate-phase log
    TrainRun run;
    run.expert = std::move(gate.expert);
    const std::size_t lora_steps = lora.log.size();
    run.log = std::move(lora.log);
    for (const StepLoss& sl : gate.log) {
        run.log.push_back({lora_steps + sl.step, sl.loss});
    }
    run.eval_loss = gate.eval_loss;
    run.baseline_loss = lora.baseline_loss;
    return run;
}

double grad_check(const std::function<double(const Vec&)>& loss, const Vec& params,
                  const Vec& analytic_grad, double h) {
    if (!(h >= 1e-6 && h <= 1e-3)) {
        raise(Errc::bad_argument, "grad_check: h must lie in [1e-6, 1e-3]");
    }
    if (params.size() != analytic_grad.size()) {
        raise(Errc::dim_mismatch, "grad_check: params/grad size mismatch");
    }
    double max_rel = 0.0;
    Vec probe = params;
    for (std::size_t i = 0; i < params.size(); ++i) {
        probe[i] = params[i] + h;
        const double up = loss(probe);
        probe[i] = params[i] - h;
        const double down = loss(probe);
        probe[i] = params[i];
        const double fd = (up - down) / (2.0 * h);
        const double an = analytic_grad[i];
        const double scale = std::max({std::abs(fd), std::abs(an), 1e-6});
        max_rel = std::max(max_rel, std::abs(fd - an) / scale);
    }
    return max_rel;
}

std::uint64_t checksum(const std::vector<double>& values) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (double v : values) {
        const auto bits = std::bit_cast<std::uint64_t>(v);
        for (int i = 0; i < 8; ++i) {
            h ^= (bits >> (8 * i)) & 0xffu;
            h *= 0x100000001b3ull;
        }
    }
    return h;
}

std::uint64_t base_checksum(const ToyBaseModel& model) {
    std::uint64_t h = 0;
    for (const Mat& w : model.weights) h = mix_seed(h, checksum(w.data));
    for (const Vec& b : model.biases) h = mix_seed(h, checksum(b));
    return h;
}

std::uint64_t ab_checksum(const ExpertModel& expert) {
    std::uint64_t h = 0;
    for (const LoraModule& mod : expert.modules) {
        h = mix_seed(h, checksum(mod.a.data));
        h = mix_seed(h, checksum(mod.b.data));
    }
    return h;
}

} // namespace glider
