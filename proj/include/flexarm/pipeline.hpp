#pragma once

// Dataset construction (including hindsight inversion), two-phase training,
// and the evaluation metrics.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "models.hpp"
#include "sim.hpp"

namespace flexarm {

// ---------------------------------------------------------------------------
// Datasets

struct SampleWindow {
    std::vector<Vec> inputs;   // L x 6N (or L x 8N once augmented)
    std::vector<Vec> targets;  // L x 2N
    std::size_t record_id = 0;
    std::size_t start = 0;
};

struct TrainConfig {
    double lr = 1e-4;
    int batch = 32;
    int window = 64;  // samples per window for sequence-stateful models
    int max_epochs = 500;
    int patience = 20;
    double l2 = 1e-4;
    double val_fraction = 0.1;
    std::uint64_t seed = 1;
};

// Pretend the recorded outcome was the goal: desired and actual swap roles,
// so recorded commands become supervised targets.
inline std::vector<ExecutionRecord> her_invert(std::vector<ExecutionRecord> records) {
    for (auto& r : records) {
        std::swap(r.desired, r.actual);
        r.meta.inverted = !r.meta.inverted;
    }
    return records;
}

// Pointwise tuples: input from two consecutive desired states, target the
// next actual [position, velocity]. The last point has no successor.
inline std::vector<SampleWindow> build_fin_dataset(const std::vector<ExecutionRecord>& records) {
    std::vector<SampleWindow> out;
    for (std::size_t r = 0; r < records.size(); ++r) {
        const auto& rec = records[r];
        if (rec.desired.length() < 2) {
            std::fprintf(stderr, "W-DATA: record %zu shorter than 2 points, skipped\n", r);
            continue;
        }
        for (std::size_t t = 0; t + 1 < rec.desired.length(); ++t) {
            SampleWindow w;
            w.record_id = r;
            w.start = t;
            w.inputs.push_back(model_input(rec.desired, t));
            Vec target = rec.actual.pos[t + 1];
            target.insert(target.end(), rec.actual.vel[t + 1].begin(), rec.actual.vel[t + 1].end());
            w.targets.push_back(std::move(target));
            out.push_back(std::move(w));
        }
    }
    return out;
}

// Fixed-length windows for sequence-stateful models; LTI/RNN state is zero at
// every window start.
inline std::vector<SampleWindow> build_window_dataset(const std::vector<ExecutionRecord>& records,
                                                      int window) {
    if (window < 1) throw std::invalid_argument("build_window_dataset: window must be >= 1");
    std::vector<SampleWindow> out;
    for (std::size_t r = 0; r < records.size(); ++r) {
        const auto& rec = records[r];
        if (rec.desired.length() < 2) continue;
        const std::size_t n_steps = rec.desired.length() - 1;
        for (std::size_t start = 0; start < n_steps; start += static_cast<std::size_t>(window)) {
            const std::size_t L = std::min<std::size_t>(static_cast<std::size_t>(window), n_steps - start);
            if (L < 2) continue;  // single-sample tail carries no temporal context
            SampleWindow w;
            w.record_id = r;
            w.start = start;
            for (std::size_t t = start; t < start + L; ++t) {
                w.inputs.push_back(model_input(rec.desired, t));
                Vec target = rec.actual.pos[t + 1];
                target.insert(target.end(), rec.actual.vel[t + 1].begin(), rec.actual.vel[t + 1].end());
                w.targets.push_back(std::move(target));
            }
            out.push_back(std::move(w));
        }
    }
    return out;
}

// 90/10 split by whole trajectory (record id), deterministic in the seed.
inline void split_by_record(const std::vector<SampleWindow>& all, double val_fraction,
                            std::uint64_t seed, std::vector<SampleWindow>& train,
                            std::vector<SampleWindow>& val) {
    std::vector<std::size_t> ids;
    for (const auto& w : all) ids.push_back(w.record_id);
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    Rng rng(seed ^ 0x5eedf00dULL);
    std::shuffle(ids.begin(), ids.end(), rng);
    std::size_t n_val = static_cast<std::size_t>(std::floor(val_fraction * static_cast<double>(ids.size())));
    if (n_val == 0 && ids.size() > 1) n_val = 1;
    std::vector<bool> is_val_id;
    std::size_t max_id = ids.empty() ? 0 : *std::max_element(ids.begin(), ids.end()) + 1;
    is_val_id.assign(max_id, false);
    for (std::size_t i = ids.size() - n_val; i < ids.size(); ++i) is_val_id[ids[i]] = true;
    train.clear();
    val.clear();
    for (const auto& w : all) (is_val_id[w.record_id] ? val : train).push_back(w);
}

// ---------------------------------------------------------------------------
// Training

struct TrainResult {
    std::vector<double> train_loss;  // per epoch, includes L2 term
    std::vector<double> val_loss;    // per epoch, data term only
    int best_epoch = -1;
    double best_val = 0.0;
    int epochs_run = 0;
};

namespace detail {

inline Vec snapshot(const std::vector<Parameter*>& params) {
    Vec s;
    for (const auto* p : params) s.insert(s.end(), p->value.begin(), p->value.end());
    return s;
}

inline void restore(const std::vector<Parameter*>& params, const Vec& s) {
    std::size_t off = 0;
    for (auto* p : params) {
        std::copy(s.begin() + static_cast<long>(off), s.begin() + static_cast<long>(off + p->size()),
                  p->value.begin());
        off += p->size();
    }
}

inline double l2_term(const std::vector<Parameter*>& params, double lambda) {
    double reg = 0.0;
    for (const auto* p : params) {
        if (!p->trainable) continue;
        for (double w : p->value) reg += w * w;
    }
    return lambda * reg;
}

// Shared epoch loop: shuffling, early stopping, divergence and pole guards.
// forward_backward(window, accumulate) returns the window's summed squared
// error and element count; when accumulate is true it must also add gradients
// scaled by grad_scale.
template <typename StepFn, typename PoleFn>
TrainResult run_training(const std::vector<Parameter*>& params, const std::vector<SampleWindow>& train,
                         const std::vector<SampleWindow>& val, const TrainConfig& cfg, StepFn&& step_fn,
                         PoleFn&& pole_fn) {
    if (train.empty()) throw std::invalid_argument("train: empty training set");
    AdamState adam(params, cfg.lr, cfg.l2);
    Rng order_rng(cfg.seed ^ 0x0123456789abcdefULL);
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    TrainResult result;
    Vec best;
    int since_best = 0;
    auto eval_set = [&](const std::vector<SampleWindow>& set) {
        double sq = 0.0;
        std::size_t n = 0;
        for (const auto& w : set) {
            auto [s, c] = step_fn(w, /*accumulate=*/false, 0.0);
            sq += s;
            n += c;
        }
        return n ? sq / static_cast<double>(n) : 0.0;
    };

    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), order_rng);
        double epoch_sq = 0.0;
        std::size_t epoch_n = 0;
        for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(cfg.batch)) {
            const std::size_t hi = std::min(order.size(), b + static_cast<std::size_t>(cfg.batch));
            std::size_t batch_elems = 0;
            for (std::size_t k = b; k < hi; ++k) {
                batch_elems += train[order[k]].targets.size() * train[order[k]].targets.front().size();
            }
            const double grad_scale = 2.0 / static_cast<double>(batch_elems);
            for (std::size_t k = b; k < hi; ++k) {
                auto [s, c] = step_fn(train[order[k]], /*accumulate=*/true, grad_scale);
                epoch_sq += s;
                epoch_n += c;
            }
            adam.step(params);
        }
        const double train_mse = epoch_sq / static_cast<double>(epoch_n);
        if (!std::isfinite(train_mse)) {
            throw std::runtime_error("train: loss diverged (NaN) at epoch " + std::to_string(epoch));
        }
        const double worst_pole = pole_fn();
        if (worst_pole > 1.2) {
            throw std::runtime_error("train: filter pole modulus " + std::to_string(worst_pole) +
                                     " exceeded 1.2 at epoch " + std::to_string(epoch));
        }
        result.train_loss.push_back(train_mse + l2_term(params, cfg.l2));
        const double val_mse = val.empty() ? train_mse : eval_set(val);
        result.val_loss.push_back(val_mse);
        result.epochs_run = epoch + 1;
        if (result.best_epoch < 0 || val_mse < result.best_val) {
            result.best_epoch = epoch;
            result.best_val = val_mse;
            best = snapshot(params);
            since_best = 0;
        } else if (++since_best >= cfg.patience) {
            break;
        }
    }
    if (!best.empty()) restore(params, best);
    return result;
}

}  // namespace detail

// FIN (or FC baseline) training: pointwise samples.
inline TrainResult train_mlp(Mlp& model, const std::vector<SampleWindow>& train,
                             const std::vector<SampleWindow>& val, const TrainConfig& cfg) {
    auto params = model.parameters();
    auto step = [&](const SampleWindow& w, bool accumulate, double grad_scale) {
        double sq = 0.0;
        std::size_t n = 0;
        for (std::size_t t = 0; t < w.inputs.size(); ++t) {
            Mlp::Cache cache;
            Vec pred = model.forward(w.inputs[t], accumulate ? &cache : nullptr);
            Vec g(pred.size());
            for (std::size_t i = 0; i < pred.size(); ++i) {
                const double r = pred[i] - w.targets[t][i];
                sq += r * r;
                g[i] = grad_scale * r;
            }
            n += pred.size();
            if (accumulate) model.backward(cache, g);
        }
        return std::pair<double, std::size_t>(sq, n);
    };
    return detail::run_training(params, train, val, cfg, step, [] { return 0.0; });
}

// DWH training (standalone or the FIN-DWH second phase on pre-augmented
// windows): window-stateful, zero LTI state at each window start.
inline TrainResult train_dwh(DwhModel& model, const std::vector<SampleWindow>& train,
                             const std::vector<SampleWindow>& val, const TrainConfig& cfg) {
    auto params = model.parameters();
    auto step = [&](const SampleWindow& w, bool accumulate, double grad_scale) {
        DwhModel::Cache cache;
        std::vector<Vec> pred = model.forward(w.inputs, accumulate ? &cache : nullptr);
        double sq = 0.0;
        std::size_t n = 0;
        std::vector<Vec> grads(pred.size());
        for (std::size_t t = 0; t < pred.size(); ++t) {
            grads[t].resize(pred[t].size());
            for (std::size_t i = 0; i < pred[t].size(); ++i) {
                const double r = pred[t][i] - w.targets[t][i];
                sq += r * r;
                grads[t][i] = grad_scale * r;
            }
            n += pred[t].size();
        }
        if (accumulate) model.backward(cache, grads, /*need_input_grad=*/false);
        return std::pair<double, std::size_t>(sq, n);
    };
    return detail::run_training(params, train, val, cfg, step, [&] { return model.max_pole_modulus(); });
}

inline TrainResult train_rnn(RnnModel& model, const std::vector<SampleWindow>& train,
                             const std::vector<SampleWindow>& val, const TrainConfig& cfg) {
    auto params = model.parameters();
    auto step = [&](const SampleWindow& w, bool accumulate, double grad_scale) {
        std::vector<RnnCell::StepCache> caches;
        std::vector<Vec> pred = model.forward(w.inputs, accumulate ? &caches : nullptr);
        double sq = 0.0;
        std::size_t n = 0;
        std::vector<Vec> grads(pred.size());
        for (std::size_t t = 0; t < pred.size(); ++t) {
            grads[t].resize(pred[t].size());
            for (std::size_t i = 0; i < pred[t].size(); ++i) {
                const double r = pred[t][i] - w.targets[t][i];
                sq += r * r;
                grads[t][i] = grad_scale * r;
            }
            n += pred[t].size();
        }
        if (accumulate) model.backward(caches, grads);
        return std::pair<double, std::size_t>(sq, n);
    };
    return detail::run_training(params, train, val, cfg, step, [] { return 0.0; });
}

// Augment windows with the frozen FIN prediction (6N -> 8N inputs). Because
// the FIN never changes during the second phase, its outputs are fixed and
// can be attached to the dataset once.
inline std::vector<SampleWindow> augment_windows(const Mlp& fin, std::vector<SampleWindow> windows) {
    for (auto& w : windows) {
        for (auto& x : w.inputs) {
            Vec pred = fin.forward(x);
            x.insert(x.end(), pred.begin(), pred.end());
        }
    }
    return windows;
}

// End-to-end FIN-DWH second phase: FIN weights stay frozen.
inline TrainResult train_fin_dwh(FinDwhModel& model, const std::vector<SampleWindow>& windows,
                                 const TrainConfig& cfg) {
    std::vector<SampleWindow> train, val;
    split_by_record(windows, cfg.val_fraction, cfg.seed, train, val);
    auto aug_train = augment_windows(model.fin, train);
    auto aug_val = augment_windows(model.fin, val);
    return train_dwh(model.dwh, aug_train, aug_val, cfg);
}

// ---------------------------------------------------------------------------
// Metrics

// Average cumulative joint position error per point:
// e = (1/T) * sum_t sum_n |d(t,n) - a(t,n)|
inline double cumulative_error(const std::vector<Vec>& desired, const std::vector<Vec>& actual) {
    if (desired.size() != actual.size()) throw std::invalid_argument("cumulative_error: length mismatch");
    if (desired.empty()) throw std::invalid_argument("cumulative_error: empty trajectories");
    double acc = 0.0;
    for (std::size_t t = 0; t < desired.size(); ++t) {
        if (desired[t].size() != actual[t].size()) {
            throw std::invalid_argument("cumulative_error: joint-width mismatch");
        }
        for (std::size_t n = 0; n < desired[t].size(); ++n) acc += std::abs(desired[t][n] - actual[t][n]);
    }
    return acc / static_cast<double>(desired.size());
}

inline double position_error(const ExecutionRecord& rec) {
    const std::size_t T = std::min(rec.meta.nominal_length, rec.desired.length());
    std::vector<Vec> d(rec.desired.pos.begin(), rec.desired.pos.begin() + static_cast<long>(T));
    std::vector<Vec> a(rec.actual.pos.begin(), rec.actual.pos.begin() + static_cast<long>(T));
    return cumulative_error(d, a);
}

inline double velocity_error(const ExecutionRecord& rec) {
    const std::size_t T = std::min(rec.meta.nominal_length, rec.desired.length());
    std::vector<Vec> d(rec.desired.vel.begin(), rec.desired.vel.begin() + static_cast<long>(T));
    std::vector<Vec> a(rec.actual.vel.begin(), rec.actual.vel.begin() + static_cast<long>(T));
    return cumulative_error(d, a);
}

// Average Euclidean end-effector distance per point.
inline double eef_error(const ArmConfig& cfg, const ExecutionRecord& rec) {
    const std::size_t T = std::min(rec.meta.nominal_length, rec.desired.length());
    double acc = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
        auto pd = forward_kinematics(cfg, rec.desired.pos[t]);
        auto pa = forward_kinematics(cfg, rec.actual.pos[t]);
        acc += std::hypot(pd[0] - pa[0], pd[1] - pa[1]);
    }
    return acc / static_cast<double>(T);
}

struct ExtraTime {
    double seconds = 0.0;
    bool capped = false;
};

// Time past the nominal end until every joint is within tol of the final
// desired point and nearly at rest.
inline ExtraTime extra_time(const ExecutionRecord& rec, double pos_tol = 0.01, double vel_tol = 0.05,
                            double cap = 3.0) {
    if (rec.meta.nominal_length == 0 || rec.meta.nominal_length > rec.desired.length()) {
        throw std::invalid_argument("extra_time: bad nominal length");
    }
    const std::size_t end = rec.meta.nominal_length - 1;
    const Vec& goal = rec.desired.pos[end];
    auto ok = [&](std::size_t t) {
        for (std::size_t n = 0; n < goal.size(); ++n) {
            if (std::abs(rec.actual.pos[t][n] - goal[n]) > pos_tol) return false;
            if (std::abs(rec.actual.vel[t][n]) > vel_tol) return false;
        }
        return true;
    };
    for (std::size_t t = end; t < rec.actual.length(); ++t) {
        if (ok(t)) return {std::max(0.0, static_cast<double>(t - end) * rec.actual.dt), false};
    }
    return {cap, true};
}

struct ConfidenceInterval {
    double mean = 0.0;
    double half_width = 0.0;
};

// mean +/- 1.96 s/sqrt(n), normal approximation.
inline ConfidenceInterval confidence_interval_95(const Vec& values) {
    if (values.size() < 2) throw std::invalid_argument("confidence_interval_95: need at least 2 values");
    const double n = static_cast<double>(values.size());
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / (n - 1.0));
    return {mean, 1.96 * sd / std::sqrt(n)};
}

}  // namespace flexarm
