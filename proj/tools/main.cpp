// SPDX-License-Identifier: Apache-2.0
//
// Command-line runner: synthetic data generation, baseline and federated
// meta-learning training, experiment grids and checkpoint inspection.
#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <iostream>

#include "fedmm/federated.hpp"
#include "fedmm/harness.hpp"
#include "fedmm/mmtf.hpp"
#include "fedmm/model.hpp"

namespace {

struct DataFlags {
    std::string data = "synth";
    int synth_classes = 10;
    int synth_per_class = 100;
    double synth_noise = 0.05;
    std::uint64_t data_seed = 7;
    double test_fraction = 0.2;

    fedmm::DatasetSource to_source() const {
        fedmm::DatasetSource s;
        if (data == "synth") {
            s.kind = fedmm::DatasetSource::Kind::synthetic;
        } else {
            s.kind = fedmm::DatasetSource::Kind::directory;
            s.dir = data;
        }
        s.synth_classes = synth_classes;
        s.synth_per_class = synth_per_class;
        s.synth_noise = synth_noise;
        s.data_seed = data_seed;
        s.test_fraction = test_fraction;
        return s;
    }
};

void add_data_flags(CLI::App* cmd, DataFlags& flags) {
    cmd->add_option("--data", flags.data,
                    "'synth' or a dataset directory written by synth-data");
    cmd->add_option("--synth-classes", flags.synth_classes, "synthetic class count");
    cmd->add_option("--synth-per-class", flags.synth_per_class, "synthetic samples per class");
    cmd->add_option("--synth-noise", flags.synth_noise, "synthetic noise sigma");
    cmd->add_option("--data-seed", flags.data_seed, "seed for generation/alignment and the split");
    cmd->add_option("--test-fraction", flags.test_fraction, "held-out test fraction");
}

fedmm::ArchSpec arch_of(const std::string& name) {
    if (name == "compact") return fedmm::ArchSpec::compact();
    if (name == "default") return fedmm::ArchSpec::defaults();
    throw fedmm::ConfigError("unknown arch '" + name + "' (expected compact or default)");
}

void write_run_outputs(const std::filesystem::path& out_dir, const std::string& run_id,
                       const std::vector<fedmm::CurvePoint>& points) {
    std::filesystem::create_directories(out_dir);
    fedmm::emit_curves(out_dir, run_id, points);
    fedmm::emit_metrics(out_dir, run_id, points);
    std::cout << "wrote " << (out_dir / (run_id + "_curves.csv")).string() << "\n";
    std::cout << "wrote " << (out_dir / (run_id + "_metrics.csv")).string() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"federated multimodal meta-learning simulator"};
    app.require_subcommand(1);

    // ---- synth-data ----
    auto* synth = app.add_subcommand("synth-data", "generate a synthetic dataset directory");
    std::string synth_out;
    int synth_classes = 10;
    int synth_per_class = 100;
    double synth_noise = 0.05;
    std::uint64_t synth_seed = 0;
    synth->add_option("--out", synth_out, "output directory")->required();
    synth->add_option("--classes", synth_classes, "class count (up to 10)");
    synth->add_option("--per-class", synth_per_class, "samples per class");
    synth->add_option("--noise", synth_noise, "noise sigma");
    synth->add_option("--seed", synth_seed, "generation seed")->required();

    // ---- baseline ----
    auto* baseline = app.add_subcommand("baseline", "centralized training with a scenario mask");
    DataFlags baseline_data;
    add_data_flags(baseline, baseline_data);
    std::string baseline_scenario = "full";
    std::string baseline_arch = "compact";
    std::string baseline_out = "out";
    fedmm::BaselineConfig baseline_cfg;
    baseline->add_option("--scenario", baseline_scenario,
                         "modalities available during training (img/sign, sp/sign, img/sp, img, "
                         "sp, sign, full)");
    baseline->add_option("--lr", baseline_cfg.lr, "learning rate");
    baseline->add_option("--epochs", baseline_cfg.epochs, "training epochs");
    baseline->add_option("--batch-size", baseline_cfg.batch_size, "mini-batch size");
    baseline->add_option("--seed", baseline_cfg.seed, "training seed")->required();
    baseline->add_option("--arch", baseline_arch, "compact or default");
    baseline->add_option("--out", baseline_out, "output directory");

    // ---- fedmeta ----
    auto* fedmeta = app.add_subcommand("fedmeta", "federated meta-learning rounds");
    DataFlags fedmeta_data;
    add_data_flags(fedmeta, fedmeta_data);
    std::string fedmeta_scenario = "full";
    std::string fedmeta_arch = "compact";
    std::string fedmeta_agg = "sum";
    std::string fedmeta_out = "out";
    std::string fedmeta_checkpoint;
    std::string fedmeta_resume;
    fedmm::MetaConfig meta_cfg;
    int clients_per_round = 0;  // 0 -> all clients
    fedmeta->add_option("--scenario", fedmeta_scenario, "support-set scenario");
    fedmeta->add_option("--clients", meta_cfg.clients_total, "number of clients");
    fedmeta->add_option("--clients-per-round", clients_per_round,
                        "sampled clients per round (default: all)");
    fedmeta->add_option("--rounds", meta_cfg.rounds, "communication rounds");
    fedmeta->add_option("--local-epochs", meta_cfg.local_epochs, "inner epochs per round");
    fedmeta->add_option("--outer-lr", meta_cfg.outer_lr, "server learning rate");
    fedmeta->add_option("--inner-lr", meta_cfg.inner_lr, "adaptation learning rate");
    fedmeta->add_option("--batch-size", meta_cfg.batch_size, "inner mini-batch size");
    fedmeta->add_option("--support-fraction", meta_cfg.support_fraction,
                        "fraction of each client's data used as support set");
    fedmeta->add_option("--aggregation", fedmeta_agg, "sum or mean");
    fedmeta->add_option("--seed", meta_cfg.seed, "run seed")->required();
    fedmeta->add_option("--arch", fedmeta_arch, "compact or default");
    fedmeta->add_option("--out", fedmeta_out, "output directory");
    fedmeta->add_option("--save-checkpoint", fedmeta_checkpoint,
                        "write <path>.mmtf / <path>.manifest after the final round");
    fedmeta->add_option("--resume", fedmeta_resume,
                        "resume from a checkpoint base path (same data flags required)");

    // ---- grid ----
    auto* grid_cmd = app.add_subcommand("grid", "run an experiment grid from a config file");
    std::string grid_config;
    std::string grid_out = "out";
    grid_cmd->add_option("--config", grid_config, "grid config file")->required();
    grid_cmd->add_option("--out", grid_out, "output directory");

    // ---- inspect-checkpoint ----
    auto* inspect = app.add_subcommand("inspect-checkpoint", "print checkpoint contents");
    std::string inspect_base;
    inspect->add_option("base", inspect_base, "checkpoint base path (without extension)")
        ->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) {
            const fedmm::AlignedDataset dataset =
                fedmm::synth_generate(synth_classes, synth_per_class, synth_noise, synth_seed);
            fedmm::write_dataset_dir(synth_out, dataset, fedmm::mix_seed(synth_seed, 60));
            std::cout << "wrote " << dataset.size() << " aligned samples as per-modality files in "
                      << synth_out << "\n";
            return 0;
        }

        if (baseline->parsed()) {
            baseline_cfg.scenario = fedmm::parse_scenario(baseline_scenario);
            const fedmm::MultiModalNet net(arch_of(baseline_arch));
            const fedmm::TrainTestSplit data = fedmm::load_source(baseline_data.to_source());
            std::cout << "train=" << data.train.size() << " test=" << data.test.size()
                      << " params=" << net.param_count() << "\n";
            const fedmm::BaselineResult result =
                fedmm::train_baseline(net, data.train, data.test, baseline_cfg);
            const fedmm::EpochReport& last = result.history.back();
            std::cout << "final test accuracy " << fedmm::format_percent(last.test_accuracy)
                      << "% (loss " << last.test_loss << ")\n";
            char run_id[128];
            std::snprintf(run_id, sizeof(run_id), "baseline_lr%g_e%d_%s_s%llu", baseline_cfg.lr,
                          baseline_cfg.epochs,
                          std::string(fedmm::scenario_name(baseline_cfg.scenario)).c_str(),
                          static_cast<unsigned long long>(baseline_cfg.seed));
            std::string id(run_id);
            for (char& c : id) {
                if (c == '/') c = '-';
            }
            write_run_outputs(baseline_out, id, fedmm::curves_of(result));
            return 0;
        }

        if (fedmeta->parsed()) {
            meta_cfg.scenario = fedmm::parse_scenario(fedmeta_scenario);
            meta_cfg.aggregation = fedmm::parse_aggregation(fedmeta_agg);
            meta_cfg.clients_per_round =
                clients_per_round > 0 ? clients_per_round : meta_cfg.clients_total;

            fedmm::ArchSpec arch = arch_of(fedmeta_arch);
            std::optional<fedmm::GlobalState> resume;
            if (!fedmeta_resume.empty()) {
                fedmm::Checkpoint ck = fedmm::load_checkpoint(fedmeta_resume);
                arch = ck.arch;
                meta_cfg = ck.cfg;
                fedmm::GlobalState state;
                state.round = ck.round;
                state.theta = std::move(ck.theta);
                resume = std::move(state);
                std::cout << "resuming from round " << ck.round << "\n";
            }
            const fedmm::MultiModalNet net(arch);
            const fedmm::TrainTestSplit data = fedmm::load_source(fedmeta_data.to_source());
            std::cout << "train=" << data.train.size() << " test=" << data.test.size()
                      << " params=" << net.param_count() << "\n";
            const fedmm::GlobalState state =
                fedmm::run_fedmeta(net, data.train, data.test, meta_cfg, std::move(resume));
            const fedmm::RoundReport& last = state.history.back();
            std::cout << "final test accuracy " << fedmm::format_percent(last.test_accuracy)
                      << "% (loss " << last.test_loss << ") after round " << state.round << "\n";

            char run_id[160];
            std::snprintf(run_id, sizeof(run_id), "fedmeta_c%d_o%g_i%g_%s_%s_s%llu",
                          meta_cfg.clients_total, meta_cfg.outer_lr, meta_cfg.inner_lr,
                          std::string(fedmm::aggregation_name(meta_cfg.aggregation)).c_str(),
                          std::string(fedmm::scenario_name(meta_cfg.scenario)).c_str(),
                          static_cast<unsigned long long>(meta_cfg.seed));
            std::string id(run_id);
            for (char& c : id) {
                if (c == '/') c = '-';
            }
            write_run_outputs(fedmeta_out, id, fedmm::curves_of(state));

            if (!fedmeta_checkpoint.empty()) {
                fedmm::save_checkpoint(fedmeta_checkpoint, state.theta, meta_cfg, net.spec(),
                                       state.round);
                std::cout << "wrote checkpoint " << fedmeta_checkpoint << ".mmtf / .manifest\n";
            }
            return 0;
        }

        if (grid_cmd->parsed()) {
            const fedmm::ExperimentGrid grid = fedmm::parse_config(grid_config);
            std::cout << "grid with " << grid.runs.size() << " runs -> " << grid_out << "\n";
            const fedmm::GridSummary summary = fedmm::run_grid(grid, grid_out);
            std::size_t failed = 0;
            for (const fedmm::RunOutcome& o : summary.outcomes) {
                if (!o.ok) ++failed;
            }
            std::cout << "summary written to " << (std::filesystem::path(grid_out) / "summary.txt").string()
                      << (failed ? " (" + std::to_string(failed) + " run(s) failed)" : "") << "\n";
            return failed == 0 ? 0 : 2;
        }

        if (inspect->parsed()) {
            const fedmm::Checkpoint ck = fedmm::load_checkpoint(inspect_base);
            std::cout << "round " << ck.round << ", scenario " << fedmm::scenario_name(ck.cfg.scenario)
                      << ", aggregation " << fedmm::aggregation_name(ck.cfg.aggregation)
                      << ", outer_lr " << ck.cfg.outer_lr << ", inner_lr " << ck.cfg.inner_lr
                      << ", clients " << ck.cfg.clients_total << ", seed " << ck.cfg.seed << "\n";
            std::cout << ck.theta.size() << " tensors, " << ck.theta.scalar_count()
                      << " parameters\n";
            for (const fedmm::ParamSet::Entry& e : ck.theta) {
                double lo = e.tensor.numel() ? e.tensor[0] : 0.0;
                double hi = lo;
                double sum = 0.0;
                for (std::size_t i = 0; i < e.tensor.numel(); ++i) {
                    lo = std::min(lo, e.tensor[i]);
                    hi = std::max(hi, e.tensor[i]);
                    sum += e.tensor[i];
                }
                std::cout << "  " << e.name << " " << e.tensor.shape_str() << "  min " << lo
                          << "  max " << hi << "  mean "
                          << sum / static_cast<double>(e.tensor.numel()) << "\n";
            }
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
