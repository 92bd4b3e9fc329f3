// SPDX-License-Identifier: Apache-2.0
#include "fedmm/federated.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "fedmm/mmtf.hpp"
#include "fedmm/ops.hpp"

namespace fedmm {

std::string_view aggregation_name(Aggregation a) {
    return a == Aggregation::sum ? "sum" : "mean";
}

Aggregation parse_aggregation(std::string_view name) {
    if (name == "sum") return Aggregation::sum;
    if (name == "mean") return Aggregation::mean;
    throw ConfigError("unknown aggregation '" + std::string(name) + "' (expected sum or mean)");
}

void MetaConfig::validate() const {
    if (!(inner_lr > 0.0)) throw ConfigError("inner learning rate must be positive");
    if (!(outer_lr > 0.0)) throw ConfigError("outer learning rate must be positive");
    if (rounds < 0) throw ConfigError("round count must be non-negative");
    if (local_epochs < 1) throw ConfigError("local epoch count must be positive");
    if (clients_total < 1) throw ConfigError("client count must be positive");
    if (clients_per_round < 1 || clients_per_round > clients_total) {
        throw ConfigError("clients per round must lie in [1, clients_total]");
    }
    if (batch_size < 1) throw ConfigError("batch size must be positive");
    if (!(support_fraction > 0.0 && support_fraction < 1.0)) {
        throw ConfigError("support fraction must lie in (0, 1)");
    }
}

void BaselineConfig::validate() const {
    if (lr < 0.0) throw ConfigError("learning rate must be non-negative");
    if (epochs < 0) throw ConfigError("epoch count must be non-negative");
    if (batch_size < 1) throw ConfigError("batch size must be positive");
}

namespace {

double mean_of(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

double RoundReport::mean_support_loss() const { return mean_of(support_losses); }
double RoundReport::mean_query_loss() const { return mean_of(query_losses); }
double RoundReport::mean_query_accuracy() const { return mean_of(query_accuracies); }

namespace detail {

void throw_divergence(double loss, int round, int client) {
    std::ostringstream os;
    os << "training diverged (loss = " << loss << ")";
    if (client >= 0) os << " on client " << client;
    if (round >= 0) os << " at round " << round;
    throw DivergenceError(os.str(), round, client);
}

std::vector<int> sample_clients(int total, int per_round, std::uint64_t seed) {
    std::vector<int> ids(static_cast<std::size_t>(total));
    std::iota(ids.begin(), ids.end(), 0);
    Rng rng(seed);
    // partial Fisher-Yates: the first per_round entries are a uniform draw
    // without replacement
    for (int i = 0; i < per_round; ++i) {
        const auto j = i + static_cast<int>(rng.next_below(static_cast<std::uint64_t>(total - i)));
        std::swap(ids[static_cast<std::size_t>(i)], ids[static_cast<std::size_t>(j)]);
    }
    ids.resize(static_cast<std::size_t>(per_round));
    std::sort(ids.begin(), ids.end());
    return ids;
}

}  // namespace detail

EvalResult evaluate(const MultiModalNet& net, const ParamSet& theta,
                    std::span<const AlignedSample> test_set, const ModalityMask& mask,
                    std::vector<int>* predictions) {
    if (test_set.empty()) throw DataError("evaluation on an empty test set");
    if (predictions) predictions->clear();

    constexpr std::size_t kChunk = 64;
    std::size_t correct = 0;
    double loss_sum = 0.0;
    std::vector<const AlignedSample*> chunk;
    std::vector<int> labels;
    for (std::size_t start = 0; start < test_set.size(); start += kChunk) {
        const std::size_t stop = std::min(test_set.size(), start + kChunk);
        chunk.clear();
        labels.clear();
        for (std::size_t i = start; i < stop; ++i) {
            chunk.push_back(&test_set[i]);
            labels.push_back(test_set[i].label);
        }
        const Tensor logits = net.forward(theta, chunk, mask);
        const ops::SoftmaxXentResult res = ops::softmax_xent_forward(logits, labels);
        correct += res.correct;
        loss_sum += res.loss * static_cast<double>(chunk.size());
        if (predictions) {
            for (int p : ops::argmax_rows(logits)) predictions->push_back(p);
        }
    }
    EvalResult out;
    out.accuracy = static_cast<double>(correct) / static_cast<double>(test_set.size());
    out.mean_loss = loss_sum / static_cast<double>(test_set.size());
    return out;
}

GlobalState run_fedmeta(const MultiModalNet& net, std::span<const AlignedSample> train_set,
                        std::span<const AlignedSample> test_set, const MetaConfig& cfg,
                        std::optional<GlobalState> resume_from) {
    cfg.validate();
    if (train_set.size() < static_cast<std::size_t>(cfg.clients_total) * 2) {
        throw ConfigError("training set of " + std::to_string(train_set.size()) +
                          " samples is too small for " + std::to_string(cfg.clients_total) +
                          " clients");
    }
    if (test_set.empty()) throw ConfigError("test set is empty");

    const std::vector<ClientShard> shards =
        make_client_shards(train_set, static_cast<std::size_t>(cfg.clients_total),
                           cfg.support_fraction, cfg.scenario,
                           mix_seed(cfg.seed, detail::kTagShards));

    GlobalState state;
    if (resume_from) {
        state = std::move(*resume_from);
    } else {
        state.round = 0;
        state.theta = net.init_params(mix_seed(cfg.seed, detail::kTagInit));

        RoundReport initial;
        initial.round = 0;
        const EvalResult train_eval = evaluate(net, state.theta, train_set);
        const EvalResult test_eval = evaluate(net, state.theta, test_set);
        initial.train_loss = train_eval.mean_loss;
        initial.train_accuracy = train_eval.accuracy;
        initial.test_loss = test_eval.mean_loss;
        initial.test_accuracy = test_eval.accuracy;
        state.history.push_back(std::move(initial));
    }

    while (state.round < cfg.rounds) {
        state = server_round(std::move(state), shards, net, cfg);
        const EvalResult test_eval = evaluate(net, state.theta, test_set);
        state.history.back().test_loss = test_eval.mean_loss;
        state.history.back().test_accuracy = test_eval.accuracy;
    }
    return state;
}

BaselineResult train_baseline(const MultiModalNet& net, std::span<const AlignedSample> train_set,
                              std::span<const AlignedSample> test_set, const BaselineConfig& cfg) {
    cfg.validate();
    if (train_set.empty()) throw ConfigError("training set is empty");
    if (test_set.empty()) throw ConfigError("test set is empty");

    const ModalityMask mask = scenario_mask(cfg.scenario);

    BaselineResult out;
    out.params = net.init_params(mix_seed(cfg.seed, detail::kTagInit));

    {
        EpochReport initial;
        initial.epoch = 0;
        const EvalResult train_eval = evaluate(net, out.params, train_set, mask);
        const EvalResult test_eval = evaluate(net, out.params, test_set);
        initial.train_loss = train_eval.mean_loss;
        initial.train_accuracy = train_eval.accuracy;
        initial.test_loss = test_eval.mean_loss;
        initial.test_accuracy = test_eval.accuracy;
        out.history.push_back(initial);
    }

    Rng rng(mix_seed(cfg.seed, detail::kTagBaseline));
    std::vector<const AlignedSample*> batch;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const std::vector<std::size_t> order = rng.permutation(train_set.size());
        double loss_sum = 0.0;
        double correct_sum = 0.0;
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t stop =
                std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            batch.clear();
            for (std::size_t i = start; i < stop; ++i) batch.push_back(&train_set[order[i]]);
            const LossGrad res = net.loss_and_grad(out.params, batch, mask);
            if (!std::isfinite(res.loss)) detail::throw_divergence(res.loss, epoch, -1);
            out.params = sgd_step(out.params, res.grad, cfg.lr);
            loss_sum += res.loss * static_cast<double>(batch.size());
            correct_sum += res.accuracy * static_cast<double>(batch.size());
        }

        EpochReport report;
        report.epoch = epoch;
        report.train_loss = loss_sum / static_cast<double>(train_set.size());
        report.train_accuracy = correct_sum / static_cast<double>(train_set.size());
        const EvalResult test_eval = evaluate(net, out.params, test_set);
        report.test_loss = test_eval.mean_loss;
        report.test_accuracy = test_eval.accuracy;
        out.history.push_back(report);
    }
    return out;
}

// ---- checkpointing ---------------------------------------------------------

namespace {

std::string branch_to_string(const BranchSpec& b) {
    std::ostringstream os;
    os << b.in_channels << "x" << b.in_h << "x" << b.in_w;
    for (const ConvLayerSpec& l : b.layers) {
        os << ";" << l.out_channels << "k" << l.kernel << "s" << l.stride << "p" << l.padding
           << (l.pool_after ? "P" : "");
    }
    return os.str();
}

BranchSpec branch_from_string(const std::string& text) {
    BranchSpec b;
    std::istringstream is(text);
    std::string field;
    bool first = true;
    while (std::getline(is, field, ';')) {
        if (first) {
            first = false;
            char x1 = 0, x2 = 0;
            std::istringstream head(field);
            if (!(head >> b.in_channels >> x1 >> b.in_h >> x2 >> b.in_w) || x1 != 'x' || x2 != 'x') {
                throw FormatError("bad branch input spec '" + field + "'");
            }
            continue;
        }
        ConvLayerSpec l;
        char k = 0, s = 0, p = 0;
        std::istringstream layer(field);
        if (!(layer >> l.out_channels >> k >> l.kernel >> s >> l.stride >> p >> l.padding) ||
            k != 'k' || s != 's' || p != 'p') {
            throw FormatError("bad conv layer spec '" + field + "'");
        }
        char pool = 0;
        l.pool_after = static_cast<bool>(layer >> pool) && pool == 'P';
        b.layers.push_back(l);
    }
    return b;
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

const std::string& manifest_get(const Manifest& m, const std::string& key) {
    const std::string* v = m.get(key);
    if (!v) throw FormatError("checkpoint manifest is missing key '" + key + "'");
    return *v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& base, const ParamSet& theta,
                     const MetaConfig& cfg, const ArchSpec& arch, int round) {
    mmtf::write_file(base.string() + ".mmtf", theta);

    Manifest m;
    m.set("round", std::to_string(round));
    m.set("inner_lr", format_double(cfg.inner_lr));
    m.set("outer_lr", format_double(cfg.outer_lr));
    m.set("rounds", std::to_string(cfg.rounds));
    m.set("local_epochs", std::to_string(cfg.local_epochs));
    m.set("clients_total", std::to_string(cfg.clients_total));
    m.set("clients_per_round", std::to_string(cfg.clients_per_round));
    m.set("batch_size", std::to_string(cfg.batch_size));
    m.set("support_fraction", format_double(cfg.support_fraction));
    m.set("scenario", std::string(scenario_name(cfg.scenario)));
    m.set("aggregation", std::string(aggregation_name(cfg.aggregation)));
    m.set("seed", std::to_string(cfg.seed));
    m.set("arch.image", branch_to_string(arch.image));
    m.set("arch.spectrogram", branch_to_string(arch.spectrogram));
    m.set("arch.sign", branch_to_string(arch.sign));
    m.set("arch.hidden_width", std::to_string(arch.hidden_width));
    m.set("arch.classes", std::to_string(arch.classes));

    std::ofstream out(base.string() + ".manifest");
    if (!out) throw DataError("cannot write checkpoint manifest " + base.string() + ".manifest");
    out << m.to_text();
}

Checkpoint load_checkpoint(const std::filesystem::path& base) {
    Checkpoint ck;
    ck.theta = mmtf::read_param_set(base.string() + ".mmtf");

    std::ifstream in(base.string() + ".manifest");
    if (!in) throw DataError("cannot open checkpoint manifest " + base.string() + ".manifest");
    std::stringstream buf;
    buf << in.rdbuf();
    const Manifest m = Manifest::from_text(buf.str());

    ck.round = std::stoi(manifest_get(m, "round"));
    ck.cfg.inner_lr = std::stod(manifest_get(m, "inner_lr"));
    ck.cfg.outer_lr = std::stod(manifest_get(m, "outer_lr"));
    ck.cfg.rounds = std::stoi(manifest_get(m, "rounds"));
    ck.cfg.local_epochs = std::stoi(manifest_get(m, "local_epochs"));
    ck.cfg.clients_total = std::stoi(manifest_get(m, "clients_total"));
    ck.cfg.clients_per_round = std::stoi(manifest_get(m, "clients_per_round"));
    ck.cfg.batch_size = std::stoi(manifest_get(m, "batch_size"));
    ck.cfg.support_fraction = std::stod(manifest_get(m, "support_fraction"));
    ck.cfg.scenario = parse_scenario(manifest_get(m, "scenario"));
    ck.cfg.aggregation = parse_aggregation(manifest_get(m, "aggregation"));
    ck.cfg.seed = std::stoull(manifest_get(m, "seed"));
    ck.arch.image = branch_from_string(manifest_get(m, "arch.image"));
    ck.arch.spectrogram = branch_from_string(manifest_get(m, "arch.spectrogram"));
    ck.arch.sign = branch_from_string(manifest_get(m, "arch.sign"));
    ck.arch.hidden_width = static_cast<std::size_t>(std::stoull(manifest_get(m, "arch.hidden_width")));
    ck.arch.classes = static_cast<std::size_t>(std::stoull(manifest_get(m, "arch.classes")));
    return ck;
}

}  // namespace fedmm
