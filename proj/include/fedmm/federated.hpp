// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedmm/data.hpp"
#include "fedmm/model.hpp"
#include "fedmm/param_set.hpp"
#include "fedmm/rng.hpp"

namespace fedmm {

enum class Aggregation { sum, mean };

std::string_view aggregation_name(Aggregation a);
Aggregation parse_aggregation(std::string_view name);

/// Full description of a federated meta-learning run.
struct MetaConfig {
    double inner_lr = 1e-5;   // adaptation rate on the support set
    double outer_lr = 1e-3;   // server rate applied to aggregated meta-gradients
    int rounds = 50;          // communication rounds T
    int local_epochs = 5;     // inner passes over the support set per round
    int clients_total = 3;
    int clients_per_round = 3;
    int batch_size = 32;
    double support_fraction = 0.2;
    Scenario scenario = Scenario::full;
    Aggregation aggregation = Aggregation::sum;
    std::uint64_t seed = 0;

    void validate() const;
};

struct BaselineConfig {
    double lr = 0.05;
    int epochs = 30;
    int batch_size = 32;
    Scenario scenario = Scenario::full;  // mask applied at every training step
    std::uint64_t seed = 0;

    void validate() const;
};

struct RoundReport {
    int round = 0;
    std::vector<int> clients;            // sampled client ids, ascending
    std::vector<double> support_losses;  // parallel to `clients`
    std::vector<double> query_losses;
    std::vector<double> query_accuracies;
    double train_loss = 0.0;  // mean client query loss (round 0: train-set eval)
    double train_accuracy = 0.0;
    double test_loss = 0.0;  // post-round full-modality evaluation
    double test_accuracy = 0.0;

    double mean_support_loss() const;
    double mean_query_loss() const;
    double mean_query_accuracy() const;
};

struct GlobalState {
    int round = 0;
    ParamSet theta;
    std::vector<RoundReport> history;
};

struct LocalResult {
    ParamSet meta_grad;  // query-set gradient at the adapted parameters
    double support_loss = 0.0;
    double query_loss = 0.0;
    double query_accuracy = 0.0;
};

struct EvalResult {
    double accuracy = 0.0;
    double mean_loss = 0.0;
};

namespace detail {
// Seed-stream tags; every (round, client) pair gets an independent stream so
// results cannot depend on client processing order.
inline constexpr std::uint64_t kTagInit = 1;
inline constexpr std::uint64_t kTagClientBatch = 2;
inline constexpr std::uint64_t kTagSample = 3;
inline constexpr std::uint64_t kTagShards = 4;
inline constexpr std::uint64_t kTagBaseline = 5;

[[noreturn]] void throw_divergence(double loss, int round, int client);
std::vector<int> sample_clients(int total, int per_round, std::uint64_t seed);
}  // namespace detail

/// Runs `epochs` seeded passes of mini-batch SGD over the support set under
/// the given mask, starting from `theta`. Each epoch draws a fresh
/// permutation from `rng`, so running two single-epoch calls with a shared
/// generator equals one two-epoch call.
///
/// The model must provide
///   loss(params, span<const S* const>, mask) -> double
///   loss_and_grad(params, span<const S* const>, mask) -> {loss, accuracy, grad}
template <typename Model, typename SampleT>
ParamSet inner_adapt(const Model& model, ParamSet theta, std::span<const SampleT> support,
                     const ModalityMask& mask, double lr, int epochs, int batch_size, Rng& rng,
                     int round_ctx = -1, int client_ctx = -1) {
    std::vector<const SampleT*> base;
    base.reserve(support.size());
    for (const SampleT& s : support) base.push_back(&s);

    std::vector<const SampleT*> batch;
    for (int e = 0; e < epochs; ++e) {
        const std::vector<std::size_t> order = rng.permutation(base.size());
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(batch_size)) {
            const std::size_t stop =
                std::min(order.size(), start + static_cast<std::size_t>(batch_size));
            batch.clear();
            for (std::size_t i = start; i < stop; ++i) batch.push_back(base[order[i]]);
            const auto res = model.loss_and_grad(theta, batch, mask);
            if (!std::isfinite(res.loss)) detail::throw_divergence(res.loss, round_ctx, client_ctx);
            theta = sgd_step(theta, res.grad, lr);
        }
    }
    return theta;
}

/// One client's contribution to a round: adapt a copy of theta on the masked
/// support set, then return the full-modality query gradient at the adapted
/// parameters (first-order meta-gradient). `theta` itself is not modified.
template <typename Model, typename SampleT>
LocalResult local_training(const Model& model, const ParamSet& theta, const Shard<SampleT>& shard,
                           double inner_lr, int local_epochs, int batch_size, std::uint64_t seed,
                           int round_ctx = -1) {
    std::vector<const SampleT*> support_ptrs;
    support_ptrs.reserve(shard.support.size());
    for (const SampleT& s : shard.support) support_ptrs.push_back(&s);
    std::vector<const SampleT*> query_ptrs;
    query_ptrs.reserve(shard.query.size());
    for (const SampleT& s : shard.query) query_ptrs.push_back(&s);
    if (support_ptrs.empty() || query_ptrs.empty()) {
        throw ConfigError("client " + std::to_string(shard.client_id) +
                          " has an empty support or query set");
    }

    LocalResult out;
    out.support_loss = model.loss(theta, support_ptrs, shard.support_mask);
    if (!std::isfinite(out.support_loss)) {
        detail::throw_divergence(out.support_loss, round_ctx, shard.client_id);
    }

    Rng rng(seed);
    ParamSet adapted =
        inner_adapt<Model, SampleT>(model, theta, shard.support, shard.support_mask, inner_lr,
                                    local_epochs, batch_size, rng, round_ctx, shard.client_id);

    const auto q = model.loss_and_grad(adapted, query_ptrs, ModalityMask::full());
    if (!std::isfinite(q.loss)) detail::throw_divergence(q.loss, round_ctx, shard.client_id);
    out.meta_grad = q.grad;
    out.query_loss = q.loss;
    out.query_accuracy = q.accuracy;
    return out;
}

/// One communication round: sample clients, collect their meta-gradients and
/// apply the aggregated update. Gradients are summed in ascending client-id
/// order regardless of processing order, so the result is order-independent.
/// Aggregation sum applies theta -= outer_lr * sum(g); mean divides by the
/// number of sampled clients first.
template <typename Model, typename SampleT>
GlobalState server_round(GlobalState state, const std::vector<Shard<SampleT>>& shards,
                         const Model& model, const MetaConfig& cfg) {
    if (shards.size() != static_cast<std::size_t>(cfg.clients_total)) {
        throw ConfigError("round got " + std::to_string(shards.size()) + " shards for " +
                          std::to_string(cfg.clients_total) + " clients");
    }
    const int round = state.round + 1;
    RoundReport report;
    report.round = round;
    report.clients = detail::sample_clients(
        cfg.clients_total, cfg.clients_per_round,
        mix_seed(cfg.seed, detail::kTagSample, static_cast<std::uint64_t>(round)));

    ParamSet grad_sum = state.theta.zeros_like();
    for (int id : report.clients) {
        const LocalResult res = local_training<Model, SampleT>(
            model, state.theta, shards[static_cast<std::size_t>(id)], cfg.inner_lr,
            cfg.local_epochs, cfg.batch_size,
            mix_seed(cfg.seed, detail::kTagClientBatch, static_cast<std::uint64_t>(round),
                     static_cast<std::uint64_t>(id)),
            round);
        grad_sum.add_scaled(res.meta_grad, 1.0);
        report.support_losses.push_back(res.support_loss);
        report.query_losses.push_back(res.query_loss);
        report.query_accuracies.push_back(res.query_accuracy);
    }

    const double scale = cfg.aggregation == Aggregation::sum
                             ? cfg.outer_lr
                             : cfg.outer_lr / static_cast<double>(report.clients.size());
    state.theta = sgd_step(state.theta, grad_sum, scale);
    state.round = round;
    report.train_loss = report.mean_query_loss();
    report.train_accuracy = report.mean_query_accuracy();
    state.history.push_back(std::move(report));
    return state;
}

/// Full-modality (by default) evaluation: accuracy over argmax predictions
/// (ties resolve to the lowest class index) and mean cross-entropy.
EvalResult evaluate(const MultiModalNet& net, const ParamSet& theta,
                    std::span<const AlignedSample> test_set,
                    const ModalityMask& mask = ModalityMask::full(),
                    std::vector<int>* predictions = nullptr);

/// End-to-end federated meta-learning: shard the training set, then run
/// cfg.rounds communication rounds, evaluating full-modality test metrics
/// after every round (plus a round-0 entry for the initial parameters).
/// Fully determined by cfg.seed. Pass `resume_from` to continue a run from a
/// checkpointed state; rounds are seeded individually, so a resumed run is
/// bit-identical to an uninterrupted one.
GlobalState run_fedmeta(const MultiModalNet& net, std::span<const AlignedSample> train_set,
                        std::span<const AlignedSample> test_set, const MetaConfig& cfg,
                        std::optional<GlobalState> resume_from = std::nullopt);

struct EpochReport {
    int epoch = 0;
    double train_loss = 0.0;  // running mean over training batches (masked)
    double train_accuracy = 0.0;
    double test_loss = 0.0;  // full-modality evaluation
    double test_accuracy = 0.0;
};

struct BaselineResult {
    ParamSet params;
    std::vector<EpochReport> history;
};

/// Centralized mini-batch SGD with the scenario mask applied at every step;
/// evaluation always runs full-modality.
BaselineResult train_baseline(const MultiModalNet& net, std::span<const AlignedSample> train_set,
                              std::span<const AlignedSample> test_set, const BaselineConfig& cfg);

// ---- checkpointing ---------------------------------------------------------

struct Checkpoint {
    ParamSet theta;
    MetaConfig cfg;
    ArchSpec arch;
    int round = 0;
};

/// Writes <base>.mmtf (parameters) and <base>.manifest (config + round).
void save_checkpoint(const std::filesystem::path& base, const ParamSet& theta,
                     const MetaConfig& cfg, const ArchSpec& arch, int round);

Checkpoint load_checkpoint(const std::filesystem::path& base);

}  // namespace fedmm
