// SPDX-License-Identifier: Apache-2.0
//
// End-to-end acceptance suite. Prints one [PASS]/[FAIL] line per criterion
// and exits non-zero if any criterion fails. Runs standalone:
//
//     ./build/tests/fedmm_acceptance
#include <chrono>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fd_common.hpp"
#include "fedmm/federated.hpp"
#include "fedmm/grad_check.hpp"
#include "fedmm/harness.hpp"
#include "fedmm/mmtf.hpp"
#include "fedmm/model.hpp"

using namespace fedmm;

namespace {

int g_failures = 0;

void report(int criterion, const char* title, bool pass, const std::string& detail) {
    std::printf("[%s] criterion %d: %s — %s\n", pass ? "PASS" : "FAIL", criterion, title,
                detail.c_str());
    std::fflush(stdout);
    if (!pass) ++g_failures;
}

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* format, ...) {
    char buf[512];
    va_list args;
    va_start(args, format);
    std::vsnprintf(buf, sizeof(buf), format, args);
    va_end(args);
    return buf;
}

// Small structure-conformant architecture used where central differences
// must visit every parameter.
ArchSpec tiny_arch() {
    ArchSpec s;
    s.image.in_channels = 1;
    s.image.in_h = 6;
    s.image.in_w = 6;
    s.image.layers = {{2, 3, 1, 1, true}, {2, 3, 1, 1, true}};
    s.sign = s.image;
    s.spectrogram.in_channels = 1;
    s.spectrogram.in_h = 8;
    s.spectrogram.in_w = 8;
    s.spectrogram.layers = {
        {2, 3, 1, 1, false}, {2, 3, 1, 1, false}, {2, 3, 1, 1, true}, {2, 3, 1, 1, true}};
    s.hidden_width = 8;
    s.classes = 10;
    return s;
}

std::vector<AlignedSample> tiny_batch(const ArchSpec& arch, std::size_t n, Rng& rng) {
    std::vector<AlignedSample> batch(n);
    for (std::size_t i = 0; i < n; ++i) {
        batch[i].image =
            fdtest::distinct_tensor({arch.image.in_channels, arch.image.in_h, arch.image.in_w}, rng);
        batch[i].spectrogram = fdtest::distinct_tensor(
            {arch.spectrogram.in_channels, arch.spectrogram.in_h, arch.spectrogram.in_w}, rng);
        batch[i].sign =
            fdtest::distinct_tensor({arch.sign.in_channels, arch.sign.in_h, arch.sign.in_w}, rng);
        batch[i].label = static_cast<int>(rng.next_below(10));
    }
    return batch;
}

// One-parameter stub task (prediction = theta, mean squared error).
struct ScalarSample {
    double target = 0.0;
};

struct ScalarModel {
    double loss(const ParamSet& p, std::span<const ScalarSample* const> batch,
                const ModalityMask&) const {
        const double theta = p.tensor(0)[0];
        double s = 0.0;
        for (const ScalarSample* b : batch) s += (theta - b->target) * (theta - b->target);
        return s / static_cast<double>(batch.size());
    }
    LossGrad loss_and_grad(const ParamSet& p, std::span<const ScalarSample* const> batch,
                           const ModalityMask& mask) const {
        LossGrad out;
        out.loss = loss(p, batch, mask);
        const double theta = p.tensor(0)[0];
        double g = 0.0;
        for (const ScalarSample* b : batch) g += 2.0 * (theta - b->target);
        Tensor gt({1}, {g / static_cast<double>(batch.size())});
        out.grad.add("theta", std::move(gt));
        return out;
    }
};

ParamSet scalar_theta(double v) {
    ParamSet p;
    p.add("theta", Tensor({1}, {v}));
    return p;
}

// ---------------------------------------------------------------------------

void criterion_1_gradient_suite() {
    const auto t0 = std::chrono::steady_clock::now();
    const int trials = 20;
    const std::uint64_t seed = 77001;

    double worst = 0.0;
    bool pass = true;
    std::string failing;
    for (const auto& check :
         {fdtest::check_conv2d(trials, seed), fdtest::check_relu(trials, seed),
          fdtest::check_maxpool(trials, seed), fdtest::check_linear(trials, seed),
          fdtest::check_flatten_concat(trials, seed), fdtest::check_softmax_xent(trials, seed),
          fdtest::check_composite(trials, seed)}) {
        worst = std::max(worst, check.max_rel_err);
        if (!check.pass) {
            pass = false;
            failing += std::string(" ") + check.name;
        }
    }

    // the full three-branch network, every parameter, several seeds
    const MultiModalNet net(tiny_arch());
    for (std::uint64_t s = 0; s < 3; ++s) {
        Rng rng(mix_seed(seed, 99, s));
        const auto batch = tiny_batch(net.spec(), 3, rng);
        const ParamSet at = net.init_params(mix_seed(seed, 100, s));
        DifferentiableFn fn;
        fn.value = [&](const ParamSet& p) {
            return net.loss(
                p,
                [&] {
                    std::vector<const AlignedSample*> ptrs;
                    for (const auto& b : batch) ptrs.push_back(&b);
                    return ptrs;
                }(),
                ModalityMask::full());
        };
        fn.gradient = [&](const ParamSet& p) {
            return net
                .loss_and_grad(p, std::span<const AlignedSample>(batch.data(), batch.size()),
                               ModalityMask::full())
                .grad;
        };
        const GradCheckReport rep = grad_check(fn, at, fdtest::kFdStep, fdtest::kFdTol);
        worst = std::max(worst, rep.max_rel_err);
        if (!rep.pass) {
            pass = false;
            failing += " full-network";
        }
    }

    const double elapsed = seconds_since(t0);
    pass = pass && elapsed < 120.0;
    report(1, "finite-difference gradient suite", pass,
           fmt("max rel err %.3g (tol %.0e), %d trials per primitive + full network x3 seeds, "
               "%.1fs (budget 120s)%s",
               worst, fdtest::kFdTol, trials, elapsed,
               failing.empty() ? "" : (" failing:" + failing).c_str()));
}

void criterion_2_meta_update_equivalence() {
    bool pass = true;
    std::string detail;

    // scalar stub model
    {
        const ScalarModel model;
        std::vector<Shard<ScalarSample>> shards;
        Shard<ScalarSample> shard;
        shard.client_id = 0;
        shard.support = {{0.8}, {-0.3}, {0.5}};
        shard.query = {{1.2}, {0.4}};
        shards.push_back(shard);

        MetaConfig cfg;
        cfg.inner_lr = 0.1;
        cfg.outer_lr = 0.5;
        cfg.rounds = 1;
        cfg.local_epochs = 1;
        cfg.clients_total = 1;
        cfg.clients_per_round = 1;
        cfg.batch_size = 16;  // full-batch support
        cfg.seed = 5;

        GlobalState state;
        state.theta = scalar_theta(0.25);
        state = server_round(std::move(state), shards, model, cfg);

        std::vector<const ScalarSample*> sp, qp;
        for (const auto& s : shard.support) sp.push_back(&s);
        for (const auto& s : shard.query) qp.push_back(&s);
        const ParamSet theta0 = scalar_theta(0.25);
        const ParamSet adapted = sgd_step(
            theta0, model.loss_and_grad(theta0, sp, ModalityMask::full()).grad, cfg.inner_lr);
        const ParamSet expected = sgd_step(
            theta0, model.loss_and_grad(adapted, qp, ModalityMask::full()).grad, cfg.outer_lr);
        const double err = std::abs(state.theta.tensor(0)[0] - expected.tensor(0)[0]);
        if (err > 1e-12) pass = false;
        detail += fmt("scalar stub |err| = %.3g", err);
    }

    // full three-branch network, 8 samples
    {
        const MultiModalNet net(tiny_arch());
        Rng rng(91);
        const auto samples = tiny_batch(net.spec(), 8, rng);
        Shard<AlignedSample> shard;
        shard.client_id = 0;
        shard.support.assign(samples.begin(), samples.begin() + 3);
        shard.query.assign(samples.begin() + 3, samples.end());
        shard.support_mask = scenario_mask(Scenario::sp_sign);
        std::vector<Shard<AlignedSample>> shards{shard};

        MetaConfig cfg;
        cfg.inner_lr = 0.02;
        cfg.outer_lr = 0.01;
        cfg.rounds = 1;
        cfg.local_epochs = 1;
        cfg.clients_total = 1;
        cfg.clients_per_round = 1;
        cfg.batch_size = 8;  // full-batch support
        cfg.seed = 6;
        cfg.scenario = Scenario::sp_sign;

        GlobalState state;
        state.theta = net.init_params(17);
        const ParamSet theta0 = state.theta;
        state = server_round(std::move(state), shards, net, cfg);

        std::vector<const AlignedSample*> sp, qp;
        for (const auto& s : shard.support) sp.push_back(&s);
        for (const auto& s : shard.query) qp.push_back(&s);
        const ParamSet adapted = sgd_step(
            theta0, net.loss_and_grad(theta0, sp, shard.support_mask).grad, cfg.inner_lr);
        const ParamSet expected = sgd_step(
            theta0, net.loss_and_grad(adapted, qp, ModalityMask::full()).grad, cfg.outer_lr);

        double max_err = 0.0;
        for (std::size_t i = 0; i < expected.size(); ++i) {
            for (std::size_t k = 0; k < expected.tensor(i).numel(); ++k) {
                max_err = std::max(max_err,
                                   std::abs(state.theta.tensor(i)[k] - expected.tensor(i)[k]));
            }
        }
        if (max_err > 1e-12) pass = false;
        detail += fmt(", full network max|err| = %.3g (8 samples)", max_err);
    }

    report(2, "one-round engine update matches closed-form inner-then-outer computation", pass,
           detail + " (tol 1e-12)");
}

void criterion_3_aggregation_algebra() {
    const MultiModalNet net(tiny_arch());
    Rng rng(92);
    const auto samples = tiny_batch(net.spec(), 10, rng);

    Shard<AlignedSample> proto;
    proto.support.assign(samples.begin(), samples.begin() + 4);
    proto.query.assign(samples.begin() + 4, samples.end());
    proto.support_mask = scenario_mask(Scenario::img);

    // identical shards for a power-of-two client count
    std::vector<Shard<AlignedSample>> shards(2, proto);
    shards[0].client_id = 0;
    shards[1].client_id = 1;

    MetaConfig cfg;
    cfg.inner_lr = 0.01;
    cfg.outer_lr = 0.037;
    cfg.rounds = 1;
    cfg.local_epochs = 1;
    cfg.clients_total = 2;
    cfg.clients_per_round = 2;
    cfg.batch_size = 16;  // full batch, so identical shards give identical g_u
    cfg.seed = 7;
    cfg.scenario = Scenario::img;

    const ParamSet theta0 = net.init_params(18);

    GlobalState sum_state;
    sum_state.theta = theta0;
    cfg.aggregation = Aggregation::sum;
    sum_state = server_round(std::move(sum_state), shards, net, cfg);

    GlobalState mean_state;
    mean_state.theta = theta0;
    cfg.aggregation = Aggregation::mean;
    mean_state = server_round(std::move(mean_state), shards, net, cfg);

    // reconstruct the summed gradient exactly as the engine does, processing
    // the clients in reverse order on purpose
    std::vector<LocalResult> per_client(2);
    for (int id = 1; id >= 0; --id) {
        per_client[static_cast<std::size_t>(id)] = local_training(
            net, theta0, shards[static_cast<std::size_t>(id)], cfg.inner_lr, cfg.local_epochs,
            cfg.batch_size,
            mix_seed(cfg.seed, detail::kTagClientBatch, 1, static_cast<std::uint64_t>(id)), 1);
    }
    ParamSet grad_sum = theta0.zeros_like();
    for (const LocalResult& r : per_client) grad_sum.add_scaled(r.meta_grad, 1.0);

    const bool identical_g = per_client[0].meta_grad == per_client[1].meta_grad;
    const bool order_ok = sum_state.theta == sgd_step(theta0, grad_sum, cfg.outer_lr);
    const bool mean_ok = mean_state.theta == sgd_step(theta0, grad_sum, cfg.outer_lr / 2.0);

    // sum-mode update = m * mean-mode update, elementwise exactly
    bool scale_ok = true;
    const double beta = cfg.outer_lr;
    for (std::size_t i = 0; i < grad_sum.size() && scale_ok; ++i) {
        const Tensor& g = grad_sum.tensor(i);
        for (std::size_t k = 0; k < g.numel(); ++k) {
            if (beta * g[k] != 2.0 * ((beta / 2.0) * g[k])) {
                scale_ok = false;
                break;
            }
        }
    }

    report(3, "aggregation algebra (sum = m x mean, order independence)",
           identical_g && order_ok && mean_ok && scale_ok,
           fmt("identical g_u: %s, reverse-order round bitwise equal: %s, mean mode exact: %s, "
               "sum = 2 x mean elementwise: %s",
               identical_g ? "yes" : "NO", order_ok ? "yes" : "NO", mean_ok ? "yes" : "NO",
               scale_ok ? "yes" : "NO"));
}

void criterion_4_masking_invariance() {
    const MultiModalNet net(ArchSpec::compact());
    const ParamSet params = net.init_params(19);
    const AlignedDataset ds = synth_generate(10, 2, 0.05, 93);
    const std::vector<AlignedSample> batch(ds.samples.begin(), ds.samples.begin() + 6);

    bool pass = true;
    std::string bad;
    for (Scenario scenario : kMissingScenarios) {
        const ModalityMask mask = scenario_mask(scenario);

        auto perturbed = batch;
        Rng noise(mix_seed(94, static_cast<std::uint64_t>(scenario)));
        for (AlignedSample& s : perturbed) {
            auto scramble = [&noise](Tensor& t) {
                for (std::size_t i = 0; i < t.numel(); ++i) t[i] = noise.next_uniform(-9.0, 9.0);
            };
            if (!mask.image) scramble(s.image);
            if (!mask.spectrogram) scramble(s.spectrogram);
            if (!mask.sign) scramble(s.sign);
        }
        const Tensor a = net.forward(params, batch, mask);
        const Tensor b = net.forward(params, perturbed, mask);
        const bool invariant = a == b;

        const LossGrad res =
            net.loss_and_grad(params, std::span<const AlignedSample>(batch), mask);
        bool zeros = true;
        for (std::size_t i = 0; i < res.grad.size(); ++i) {
            if (!net.param_in_masked_branch(i, mask)) continue;
            for (std::size_t k = 0; k < res.grad.tensor(i).numel(); ++k) {
                if (res.grad.tensor(i)[k] != 0.0) zeros = false;
            }
        }
        if (!invariant || !zeros) {
            pass = false;
            bad += std::string(" ") + std::string(scenario_name(scenario)) +
                   (invariant ? "" : "(logits)") + (zeros ? "" : "(grads)");
        }
    }
    report(4, "masking invariance and exact gradient isolation across the 6 scenarios", pass,
           pass ? "logits bit-invariant to masked-input perturbations; masked-branch gradients "
                  "exactly zero"
                : "failing scenarios:" + bad);
}

void criterion_5_qualitative_reproduction() {
    const auto t0 = std::chrono::steady_clock::now();

    const MultiModalNet net(ArchSpec::compact());
    const AlignedDataset ds = synth_generate(10, 100, 0.05, 7);
    const TrainTestSplit tt = train_test_split(ds, 0.2, mix_seed(7, 50));

    const Scenario gaps[3] = {Scenario::sp, Scenario::sign, Scenario::sp_sign};

    auto run_baseline = [&](Scenario sc) {
        BaselineConfig cfg;
        cfg.lr = 0.02;
        cfg.epochs = 4;
        cfg.batch_size = 32;
        cfg.scenario = sc;
        cfg.seed = 42;
        return train_baseline(net, tt.train, tt.test, cfg).history.back().test_accuracy;
    };

    const double control = run_baseline(Scenario::full);
    double baseline_acc[3];
    for (int i = 0; i < 3; ++i) baseline_acc[i] = run_baseline(gaps[i]);

    bool collapse = control >= 0.95;
    for (double acc : baseline_acc) collapse = collapse && (acc <= control - 0.30);

    double fed_acc[3];
    for (int i = 0; i < 3; ++i) {
        MetaConfig cfg;
        cfg.outer_lr = 0.001;
        cfg.inner_lr = 0.00001;
        cfg.aggregation = Aggregation::sum;
        cfg.clients_total = 3;
        cfg.clients_per_round = 3;
        cfg.rounds = 50;
        cfg.local_epochs = 5;
        cfg.batch_size = 32;
        cfg.scenario = gaps[i];
        cfg.seed = 42;
        fed_acc[i] = run_fedmeta(net, tt.train, tt.test, cfg).history.back().test_accuracy;
    }

    int wins = 0;
    for (int i = 0; i < 3; ++i) {
        if (fed_acc[i] >= baseline_acc[i] + 0.20) ++wins;
    }

    const double elapsed = seconds_since(t0);
    const bool pass = collapse && wins >= 2 && elapsed < 900.0;
    report(5, "missing-modality baseline collapses; federated meta-learning recovers", pass,
           fmt("baseline full=%.3f sp=%.3f sign=%.3f sp/sign=%.3f | fedmeta sp=%.3f sign=%.3f "
               "sp/sign=%.3f | >=20pp wins: %d/3 (need 2), %.0fs (budget 900s)",
               control, baseline_acc[0], baseline_acc[1], baseline_acc[2], fed_acc[0], fed_acc[1],
               fed_acc[2], wins, elapsed));
}

void criterion_6_determinism() {
    const char* cfg_text =
        "method = fedmeta\n"
        "scenarios = [sp/sign, full]\n"
        "outer_lr = [0.002]\n"
        "inner_lr = [0.0001]\n"
        "clients = [2]\n"
        "rounds = 2\n"
        "local_epochs = 2\n"
        "batch_size = 8\n"
        "seed = 21\n"
        "synth_per_class = 6\n"
        "data_seed = 9\n";
    const ExperimentGrid grid = parse_config_text(cfg_text, "acceptance");

    const auto base = std::filesystem::temp_directory_path() / "fedmm_acceptance_grid";
    const auto dir_a = base / "a";
    const auto dir_b = base / "b";
    std::filesystem::remove_all(base);
    const GridSummary sa = run_grid(grid, dir_a);
    const GridSummary sb = run_grid(grid, dir_b);
    (void)sb;

    bool pass = true;
    std::size_t files = 0;
    std::string diff;
    for (const auto& entry : std::filesystem::directory_iterator(dir_a)) {
        const std::string name = entry.path().filename().string();
        if (name == "timing.log") continue;  // wall-clock lives there by design
        ++files;
        std::ifstream fa(entry.path(), std::ios::binary);
        std::ifstream fb(dir_b / name, std::ios::binary);
        std::stringstream ba, bb;
        ba << fa.rdbuf();
        bb << fb.rdbuf();
        if (ba.str() != bb.str() || ba.str().empty()) {
            pass = false;
            diff += " " + name;
        }
    }
    for (const RunOutcome& o : sa.outcomes) pass = pass && o.ok;
    pass = pass && files >= 2 * grid.runs.size() + 2;  // curves+metrics per run, two summaries
    std::filesystem::remove_all(base);
    report(6, "grid reruns produce byte-identical metrics and summary files", pass,
           pass ? fmt("%zu files byte-identical across reruns", files)
                : "differing files:" + diff);
}

void criterion_7_data_laws() {
    Rng rng(95);
    int trials = 0;
    bool pass = true;
    std::string detail;

    // partition laws
    for (int t = 0; t < 400; ++t, ++trials) {
        const std::size_t n = 2 + rng.next_below(300);
        const std::size_t m = 1 + rng.next_below(n);
        std::vector<int> data(n);
        for (std::size_t i = 0; i < n; ++i) data[i] = static_cast<int>(i);
        const auto shards = partition_clients<int>(data, m, rng.next_u64());
        std::set<int> seen;
        std::size_t lo = n, hi = 0;
        for (const auto& s : shards) {
            lo = std::min(lo, s.size());
            hi = std::max(hi, s.size());
            for (int v : s.query) {
                if (!seen.insert(v).second) pass = false;
            }
        }
        if (seen.size() != n || hi - lo > 1 || shards.size() != m) pass = false;
        if (!pass) {
            detail = fmt("partition law failed at trial %d (n=%zu m=%zu)", t, n, m);
            break;
        }
    }

    // support/query split laws, |support| = round(f*n)
    for (int t = 0; pass && t < 400; ++t, ++trials) {
        const std::size_t n = 5 + rng.next_below(400);
        const double f = 0.1 + 0.8 * rng.next_double();
        const std::size_t want = split_count(f, n);
        if (want == 0 || want == n) {
            --t;
            --trials;
            continue;
        }
        std::vector<int> data(n);
        for (std::size_t i = 0; i < n; ++i) data[i] = static_cast<int>(i);
        const auto sq = split_support_query<int>(data, f, rng.next_u64());
        std::set<int> seen(sq.support.begin(), sq.support.end());
        for (int v : sq.query) {
            if (!seen.insert(v).second) pass = false;
        }
        if (sq.support.size() != want || seen.size() != n) pass = false;
        if (!pass) detail = fmt("split law failed at trial %d (n=%zu f=%.3f)", t, n, f);
    }

    // alignment label-consistency: items encode their label in the payload
    for (int t = 0; pass && t < 200; ++t, ++trials) {
        LabeledModality src[3];
        for (int m = 0; m < 3; ++m) {
            const int count = 10 + static_cast<int>(rng.next_below(40));
            for (int i = 0; i < count; ++i) {
                const int label = static_cast<int>(rng.next_below(10));
                Tensor item({2});
                item[0] = 100.0 * m + label;
                item[1] = rng.next_double();
                src[m].items.push_back(std::move(item));
                src[m].labels.push_back(label);
            }
        }
        try {
            const AlignedDataset aligned = align_by_label(src[0], src[1], src[2], rng.next_u64());
            for (const AlignedSample& s : aligned.samples) {
                if (static_cast<int>(s.image[0]) % 100 != s.label ||
                    static_cast<int>(s.spectrogram[0]) % 100 != s.label ||
                    static_cast<int>(s.sign[0]) % 100 != s.label) {
                    pass = false;
                    detail = fmt("alignment consistency failed at trial %d", t);
                }
            }
        } catch (const DataError&) {
            // no common label is a legitimate outcome for random sources
        }
    }

    report(7, "randomized data-law trials (partition, split, alignment)", pass,
           pass ? fmt("%d randomized trials satisfied disjointness, exhaustiveness, size and "
                      "label-consistency laws",
                      trials)
                : detail);
}

void criterion_8_container_roundtrip() {
    const auto dir = std::filesystem::temp_directory_path() / "fedmm_acceptance_mmtf";
    std::filesystem::create_directories(dir);
    const auto path = dir / "t.mmtf";

    Rng rng(96);
    bool pass = true;
    std::string detail;
    for (int t = 0; pass && t < 30; ++t) {
        std::vector<mmtf::NamedTensor> tensors;
        const int count = static_cast<int>(rng.next_below(5));
        for (int i = 0; i < count; ++i) {
            std::vector<std::size_t> shape;
            const int nd = static_cast<int>(rng.next_below(4));
            for (int d = 0; d < nd; ++d) shape.push_back(1 + rng.next_below(6));
            Tensor tensor(shape);
            for (std::size_t k = 0; k < tensor.numel(); ++k) tensor[k] = rng.next_gaussian();
            tensors.emplace_back("tensor_" + std::to_string(i), std::move(tensor));
        }
        mmtf::write_file(path, tensors);
        const auto back = mmtf::read_file(path);
        if (back.size() != tensors.size()) pass = false;
        for (std::size_t i = 0; pass && i < back.size(); ++i) {
            if (!(back[i].first == tensors[i].first && back[i].second == tensors[i].second)) {
                pass = false;
            }
        }
        if (!pass) detail = fmt("round-trip mismatch at trial %d", t);
    }

    // corrupted files are rejected without partial results
    if (pass) {
        mmtf::write_file(path, std::vector<mmtf::NamedTensor>{{"x", Tensor::full({8, 8}, 2.5)}});
        std::ifstream in(path, std::ios::binary);
        const std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                                      std::istreambuf_iterator<char>());
        in.close();

        auto write_bytes = [&](const std::vector<char>& b) {
            std::ofstream out(path, std::ios::binary | std::ios::trunc);
            out.write(b.data(), static_cast<std::streamsize>(b.size()));
        };

        auto corrupted = bytes;
        corrupted[2] ^= 0x7F;
        write_bytes(corrupted);
        try {
            (void)mmtf::read_file(path);
            pass = false;
            detail = "bad magic was accepted";
        } catch (const FormatError&) {
        }

        corrupted = bytes;
        corrupted.resize(bytes.size() - 13);
        write_bytes(corrupted);
        try {
            (void)mmtf::read_file(path);
            pass = false;
            detail = "truncated payload was accepted";
        } catch (const CorruptionError&) {
        }
    }

    std::filesystem::remove_all(dir);
    report(8, "tensor container round-trip and corruption rejection", pass,
           pass ? "30 random tensor lists round-tripped bit-exactly; corrupted files rejected"
                : detail);
}

}  // namespace

int main() {
    const auto t0 = std::chrono::steady_clock::now();
    std::printf("fedmm acceptance suite\n");

    criterion_1_gradient_suite();
    criterion_2_meta_update_equivalence();
    criterion_3_aggregation_algebra();
    criterion_4_masking_invariance();
    criterion_5_qualitative_reproduction();
    criterion_6_determinism();
    criterion_7_data_laws();
    criterion_8_container_roundtrip();

    std::printf("%s (%d criterion(s) failed, %.0fs total)\n",
                g_failures == 0 ? "ALL CRITERIA PASSED" : "FAILURES PRESENT", g_failures,
                seconds_since(t0));
    return g_failures == 0 ? 0 : 1;
}
