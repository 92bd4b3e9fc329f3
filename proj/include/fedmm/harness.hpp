// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fedmm/data.hpp"
#include "fedmm/federated.hpp"
#include "fedmm/model.hpp"

namespace fedmm {

/// Where the experiment data comes from: a synthetic spec or a dataset
/// directory written by write_dataset_dir.
struct DatasetSource {
    enum class Kind { synthetic, directory };
    Kind kind = Kind::synthetic;
    std::filesystem::path dir;
    int synth_classes = 10;
    int synth_per_class = 100;
    double synth_noise = 0.05;
    std::uint64_t data_seed = 7;
    double test_fraction = 0.2;
};

/// Loads (or generates) the aligned dataset and splits it into train/test.
TrainTestSplit load_source(const DatasetSource& source);

enum class RunMethod { fedmeta, baseline };

struct RunSpec {
    std::string id;  // filesystem-safe, derived from the fields below
    RunMethod method = RunMethod::fedmeta;
    MetaConfig meta;          // fedmeta runs
    BaselineConfig baseline;  // baseline runs (lr = outer_lr, epochs = rounds)
};

struct ExperimentGrid {
    RunMethod method = RunMethod::fedmeta;
    DatasetSource source;
    bool compact_arch = true;
    std::vector<RunSpec> runs;
};

/// Parses the line-oriented `key = value` / `key = [list]` grid config.
/// Unknown keys, bad values and duplicate expanded runs raise ConfigError
/// with the offending line where one exists.
ExperimentGrid parse_config(const std::filesystem::path& path);
ExperimentGrid parse_config_text(const std::string& text, const std::string& origin);

/// One (round, split) observation of a run.
struct MetricsRow {
    std::string run_id;
    int round = 0;
    std::string split;  // "train" or "test"
    double loss = 0.0;
    double accuracy = 0.0;
    double wall_time_s = 0.0;  // cumulative; written to the timing log only,
                               // so metrics files stay byte-reproducible
};

/// Per-round curve point in the shape of the emitted curve files.
struct CurvePoint {
    int round = 0;
    double train_loss = 0.0;
    double train_acc = 0.0;
    double test_loss = 0.0;
    double test_acc = 0.0;
};

std::vector<CurvePoint> curves_of(const GlobalState& state);
std::vector<CurvePoint> curves_of(const BaselineResult& result);

/// Writes "<run_id>_curves.csv": header plus one line per round, including
/// round 0.
void emit_curves(const std::filesystem::path& out_dir, const std::string& run_id,
                 const std::vector<CurvePoint>& points);

/// Writes "<run_id>_metrics.csv": the append-order MetricsRow stream.
void emit_metrics(const std::filesystem::path& out_dir, const std::string& run_id,
                  const std::vector<CurvePoint>& points);

struct RunOutcome {
    RunSpec spec;
    bool ok = false;
    std::string error;                // set when !ok
    double final_test_accuracy = 0.0; // fraction in [0, 1]
    double wall_time_s = 0.0;
};

struct GridSummary {
    std::vector<RunOutcome> outcomes;

    const RunOutcome* find(const std::string& run_id) const;
};

/// Executes every run in the grid sequentially, writing per-run metrics and
/// curve files plus summary.csv / summary.txt / timing.log into out_dir.
/// A failing run is recorded in the summary and the remaining runs continue.
GridSummary run_grid(const ExperimentGrid& grid, const std::filesystem::path& out_dir);

/// Accuracy cell formatting used in summaries: percent, three decimals.
std::string format_percent(double fraction);

}  // namespace fedmm
