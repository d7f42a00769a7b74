#pragma once

#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "drills/core.hpp"
#include "drills/csv.hpp"
#include "drills/losses.hpp"
#include "drills/optim.hpp"
#include "drills/sampling.hpp"
#include "drills/transforms.hpp"

namespace drills {

struct TrainConfig {
    double adam_lr0 = 1e-3;
    double adam_decay = 0.7;
    long adam_decay_every = 5000;
    long adam_max_steps = 60000;
    int lbfgs_max_steps = 200;
    int lbfgs_memory = 10;
    double stop_threshold = 5e-5;
    std::uint64_t seed = 0;
    long batch_size = 0;        // 0 = full batch; the paper's sums run over all N
    long history_every = 0;     // 0 = auto: every step for d <= 2, every 10 otherwise
    long stop_check_every = 100;  // cadence of full-loss stopping checks under mini-batching

    void validate() const {
        if (stop_threshold <= 0.0) throw std::invalid_argument("TrainConfig: stop_threshold must be > 0");
        if (adam_decay <= 0.0 || adam_decay > 1.0)
            throw std::invalid_argument("TrainConfig: adam_decay must be in (0, 1]");
        if (adam_decay_every < 1) throw std::invalid_argument("TrainConfig: adam_decay_every must be >= 1");
    }
};

enum class TrainPhase { Adam, Lbfgs };

inline const char* phase_name(TrainPhase p) { return p == TrainPhase::Adam ? "adam" : "lbfgs"; }

struct LossRecord {
    long step;
    TrainPhase phase;
    double total;
    double l1, l2, l3;
};

struct LossHistory {
    std::vector<LossRecord> records;

    void write_csv(std::ostream& os) const {
        os << "step,phase,total,L1,L2,L3\n";
        for (const LossRecord& r : records)
            os << r.step << ',' << phase_name(r.phase) << ',' << fmt_double(r.total) << ','
               << fmt_double(r.l1) << ',' << fmt_double(r.l2) << ',' << fmt_double(r.l3) << '\n';
    }
};

struct TrainMeta {
    double final_loss = 0.0;
    long steps = 0;
    std::uint64_t seed = 0;
    bool stopped_early = false;
};

/// A transform frozen for prediction, together with the data it was trained
/// on (the synthesized regression needs the training samples) and the
/// hyper-parameters (k_star selects the active coordinates).
struct TrainedModel {
    Transform transform;
    Dataset data;
    HyperParams hp;
    TrainMeta meta;
};

/// Adam with the step-decay schedule, then L-BFGS; both phases stop as soon
/// as the total training loss reaches cfg.stop_threshold. The loss at the
/// current parameters is evaluated before each update, so a threshold already
/// met at step 0 means no update at all.
inline std::pair<TrainedModel, LossHistory> train(Transform t, const Dataset& data,
                                                  const HyperParams& hp, const TrainConfig& cfg) {
    cfg.validate();
    hp.validate(data.d);
    if (data.n() == 0) throw std::invalid_argument("train: empty dataset");

    const long n = data.n();
    const bool full_batch = cfg.batch_size <= 0 || cfg.batch_size >= n;
    const long record_every = cfg.history_every > 0 ? cfg.history_every : (data.d <= 2 ? 1 : 10);

    LossHistory history;
    Vec theta = transform_flatten(t);
    AdamState adam;
    Rng batch_rng(derive_seed(cfg.seed, seed_tag::batch));
    std::vector<int> order;
    long cursor = 0;

    auto next_batch = [&](Mat& bx, Mat& bg) {
        if (order.empty() || cursor + cfg.batch_size > static_cast<long>(order.size())) {
            order = batch_rng.permutation(static_cast<int>(n));
            cursor = 0;
        }
        bx.resize(cfg.batch_size, data.d);
        bg.resize(cfg.batch_size, data.d);
        for (long i = 0; i < cfg.batch_size; ++i) {
            bx.row(i) = data.inputs.row(order[cursor + i]);
            bg.row(i) = data.gradients.row(order[cursor + i]);
        }
        cursor += cfg.batch_size;
    };

    auto record = [&](long step, TrainPhase phase, const LossParts& parts) {
        history.records.push_back(
            {step, phase, recombine(parts, hp), parts.l1, parts.l2, parts.l3});
    };

    long step = 0;
    bool stopped = false;
    double last_full_total = 0.0;

    // ---- Adam phase ----
    for (; step < cfg.adam_max_steps; ++step) {
        LossParts parts;
        Vec grad;
        double total;
        if (full_batch) {
            try {
                total = loss_value_and_gradient(t, data.inputs, data.gradients, hp, &parts, &grad);
            } catch (const std::runtime_error& e) {
                std::string last;
                if (!history.records.empty()) {
                    const LossRecord& r = history.records.back();
                    last = "; last recorded step " + std::to_string(r.step) + ": total " +
                           fmt_double(r.total) + " (L1 " + fmt_double(r.l1) + ", L2 " +
                           fmt_double(r.l2) + ", L3 " + fmt_double(r.l3) + ")";
                }
                throw std::runtime_error("train: aborted at adam step " + std::to_string(step) +
                                         ": " + e.what() + last);
            }
            last_full_total = total;
        } else {
            Mat bx, bg;
            next_batch(bx, bg);
            total = loss_value_and_gradient(t, bx, bg, hp, &parts, &grad);
            if (step % cfg.stop_check_every == 0) {
                auto [ft, fparts] = loss_total(t, data, hp);
                last_full_total = ft;
                parts = fparts;  // recorded history reflects the full loss at check steps
                total = ft;
            }
        }
        if (step % record_every == 0) record(step, TrainPhase::Adam, parts);

        bool check_now = full_batch || (step % cfg.stop_check_every == 0);
        if (check_now && last_full_total <= cfg.stop_threshold) {
            stopped = true;
            break;
        }

        double lr = decayed_lr(cfg.adam_lr0, cfg.adam_decay, cfg.adam_decay_every, step);
        adam_step(theta, grad, adam, lr);
        transform_unflatten(t, theta);
    }

    // ---- L-BFGS phase ----
    if (!stopped && cfg.lbfgs_max_steps > 0) {
        ObjectiveFn obj = [&](const Vec& th, Vec& g) {
            Transform tt = t;
            transform_unflatten(tt, th);
            return loss_value_and_gradient(tt, data.inputs, data.gradients, hp, nullptr, &g);
        };
        LbfgsOptions opt;
        opt.max_steps = cfg.lbfgs_max_steps;
        opt.memory = cfg.lbfgs_memory;
        opt.stop_fval = cfg.stop_threshold;
        long base = step;
        auto on_accept = [&](int it, const Vec& th, double) {
            if ((it - 1) % record_every != 0) return;
            Transform tt = t;
            transform_unflatten(tt, th);
            auto [tot, parts] = loss_total(tt, data, hp);
            record(base + it, TrainPhase::Lbfgs, parts);
        };
        LbfgsResult res = lbfgs_minimize(obj, theta, opt, on_accept);
        theta = res.theta;
        transform_unflatten(t, theta);
        step = base + res.iterations;
    }

    auto [final_total, final_parts] = loss_total(t, data, hp);
    if (history.records.empty() || history.records.back().step != step)
        record(step, stopped || cfg.lbfgs_max_steps == 0 ? TrainPhase::Adam : TrainPhase::Lbfgs,
               final_parts);

    TrainedModel model{std::move(t), data, hp, TrainMeta{final_total, step, cfg.seed,
                                                         final_total <= cfg.stop_threshold}};
    return {std::move(model), std::move(history)};
}

}  // namespace drills
