// SPDX-License-Identifier: Apache-2.0
#include "fedmm/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

namespace fedmm {

TrainTestSplit load_source(const DatasetSource& source) {
    AlignedDataset dataset;
    if (source.kind == DatasetSource::Kind::synthetic) {
        dataset = synth_generate(source.synth_classes, source.synth_per_class, source.synth_noise,
                                 source.data_seed);
    } else {
        dataset = load_dataset_dir(source.dir, source.data_seed);
    }
    return train_test_split(dataset, source.test_fraction, mix_seed(source.data_seed, 50));
}

std::string format_percent(double fraction) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3f", fraction * 100.0);
    return buf;
}

namespace {

std::string format_g(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%g", v);
    return buf;
}

std::string format_metric(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

std::string sanitize(std::string s) {
    for (char& c : s) {
        if (c == '/' || c == ' ') c = '-';
    }
    return s;
}

std::string run_id_for(RunMethod method, const MetaConfig& cfg) {
    std::ostringstream os;
    if (method == RunMethod::baseline) {
        os << "baseline_lr" << format_g(cfg.outer_lr) << "_e" << cfg.rounds << "_"
           << sanitize(std::string(scenario_name(cfg.scenario))) << "_s" << cfg.seed;
    } else {
        os << "fedmeta_c" << cfg.clients_total << "_o" << format_g(cfg.outer_lr) << "_i"
           << format_g(cfg.inner_lr) << "_" << aggregation_name(cfg.aggregation) << "_"
           << sanitize(std::string(scenario_name(cfg.scenario))) << "_s" << cfg.seed;
    }
    return os.str();
}

// ---- config parser ---------------------------------------------------------

struct RawValue {
    std::vector<std::string> items;  // single value -> one item
    bool is_list = false;
    int line = 0;
};

class ConfigMap {
public:
    ConfigMap(const std::string& text, const std::string& origin) : origin_(origin) {
        std::istringstream is(text);
        std::string line;
        int line_no = 0;
        while (std::getline(is, line)) {
            ++line_no;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            const std::string trimmed = trim(line);
            if (trimmed.empty()) continue;
            const auto eq = trimmed.find('=');
            if (eq == std::string::npos) {
                fail(line_no, "expected 'key = value', got '" + trimmed + "'");
            }
            const std::string key = trim(trimmed.substr(0, eq));
            const std::string value = trim(trimmed.substr(eq + 1));
            if (key.empty()) fail(line_no, "empty key");
            if (values_.count(key)) fail(line_no, "duplicate key '" + key + "'");

            RawValue rv;
            rv.line = line_no;
            if (!value.empty() && value.front() == '[') {
                if (value.back() != ']') fail(line_no, "unterminated list for key '" + key + "'");
                rv.is_list = true;
                std::string body = value.substr(1, value.size() - 2);
                std::istringstream items(body);
                std::string item;
                while (std::getline(items, item, ',')) {
                    const std::string t = trim(item);
                    if (t.empty()) fail(line_no, "empty list item for key '" + key + "'");
                    rv.items.push_back(t);
                }
                if (rv.items.empty()) fail(line_no, "empty list for key '" + key + "'");
                std::set<std::string> uniq(rv.items.begin(), rv.items.end());
                if (uniq.size() != rv.items.size()) {
                    fail(line_no, "duplicate values in list for key '" + key + "'");
                }
            } else {
                if (value.empty()) fail(line_no, "empty value for key '" + key + "'");
                rv.items.push_back(value);
            }
            values_.emplace(key, std::move(rv));
        }
    }

    [[noreturn]] void fail(int line, const std::string& msg) const {
        throw ConfigError(origin_ + ":" + std::to_string(line) + ": " + msg);
    }

    bool has(const std::string& key) const { return values_.count(key) != 0; }

    const RawValue* raw(const std::string& key) const {
        auto it = values_.find(key);
        return it == values_.end() ? nullptr : &it->second;
    }

    std::string scalar(const std::string& key, const std::string& fallback) {
        const RawValue* rv = take(key);
        if (!rv) return fallback;
        if (rv->is_list) fail(rv->line, "key '" + key + "' expects a single value, got a list");
        return rv->items[0];
    }

    std::vector<std::string> list(const std::string& key, std::vector<std::string> fallback) {
        const RawValue* rv = take(key);
        if (!rv) return fallback;
        return rv->items;
    }

    double parse_double(const std::string& key, const std::string& text, int line) const {
        try {
            std::size_t pos = 0;
            const double v = std::stod(text, &pos);
            if (pos != text.size()) throw std::invalid_argument("trailing");
            return v;
        } catch (const std::exception&) {
            fail(line, "key '" + key + "': not a number: '" + text + "'");
        }
    }

    long long parse_int(const std::string& key, const std::string& text, int line) const {
        try {
            std::size_t pos = 0;
            const long long v = std::stoll(text, &pos);
            if (pos != text.size()) throw std::invalid_argument("trailing");
            return v;
        } catch (const std::exception&) {
            fail(line, "key '" + key + "': not an integer: '" + text + "'");
        }
    }

    void check_all_consumed() const {
        for (const auto& [key, rv] : values_) {
            if (!consumed_.count(key)) fail(rv.line, "unknown key '" + key + "'");
        }
    }

private:
    static std::string trim(const std::string& s) {
        const auto b = s.find_first_not_of(" \t\r");
        const auto e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    }

    const RawValue* take(const std::string& key) {
        consumed_.insert(key);
        auto it = values_.find(key);
        return it == values_.end() ? nullptr : &it->second;
    }

    std::string origin_;
    std::map<std::string, RawValue> values_;
    std::set<std::string> consumed_;
};

}  // namespace

ExperimentGrid parse_config_text(const std::string& text, const std::string& origin) {
    ConfigMap cm(text, origin);
    ExperimentGrid grid;

    const std::string method = cm.scalar("method", "fedmeta");
    if (method == "fedmeta") {
        grid.method = RunMethod::fedmeta;
    } else if (method == "baseline") {
        grid.method = RunMethod::baseline;
    } else {
        throw ConfigError(origin + ": unknown method '" + method + "' (expected fedmeta or baseline)");
    }

    auto required = [&](const char* key) {
        if (!cm.has(key)) throw ConfigError(origin + ": missing required key '" + key + "'");
    };
    required("scenarios");
    required("outer_lr");
    required("seed");
    if (grid.method == RunMethod::fedmeta) {
        required("inner_lr");
        required("clients");
    }

    auto line_of = [&](const char* key) { return cm.raw(key) ? cm.raw(key)->line : 0; };

    std::vector<Scenario> scenarios;
    for (const std::string& s : cm.list("scenarios", {})) {
        try {
            scenarios.push_back(parse_scenario(s));
        } catch (const ConfigError& e) {
            cm.fail(line_of("scenarios"), e.what());
        }
    }

    std::vector<double> outer_lrs;
    for (const std::string& s : cm.list("outer_lr", {})) {
        const double v = cm.parse_double("outer_lr", s, line_of("outer_lr"));
        if (!(v > 0.0)) cm.fail(line_of("outer_lr"), "learning rate must be positive: " + s);
        outer_lrs.push_back(v);
    }
    std::vector<double> inner_lrs{1e-5};
    if (cm.has("inner_lr")) {
        inner_lrs.clear();
        for (const std::string& s : cm.list("inner_lr", {})) {
            const double v = cm.parse_double("inner_lr", s, line_of("inner_lr"));
            if (!(v > 0.0)) cm.fail(line_of("inner_lr"), "learning rate must be positive: " + s);
            inner_lrs.push_back(v);
        }
    }
    std::vector<int> clients{3};
    if (cm.has("clients")) {
        clients.clear();
        for (const std::string& s : cm.list("clients", {})) {
            const long long v = cm.parse_int("clients", s, line_of("clients"));
            if (v < 1) cm.fail(line_of("clients"), "client count must be positive: " + s);
            clients.push_back(static_cast<int>(v));
        }
    }

    const Aggregation aggregation = parse_aggregation(cm.scalar("aggregation", "sum"));
    const long long rounds = cm.parse_int("rounds", cm.scalar("rounds", "50"), line_of("rounds"));
    const long long local_epochs =
        cm.parse_int("local_epochs", cm.scalar("local_epochs", "5"), line_of("local_epochs"));
    const long long batch_size =
        cm.parse_int("batch_size", cm.scalar("batch_size", "32"), line_of("batch_size"));
    const double support_fraction = cm.parse_double(
        "support_fraction", cm.scalar("support_fraction", "0.2"), line_of("support_fraction"));
    const long long seed = cm.parse_int("seed", cm.scalar("seed", "0"), line_of("seed"));
    const long long repetitions =
        cm.parse_int("repetitions", cm.scalar("repetitions", "1"), line_of("repetitions"));
    if (repetitions < 1) cm.fail(line_of("repetitions"), "repetitions must be positive");
    if (rounds < 0) cm.fail(line_of("rounds"), "rounds must be non-negative");

    const std::string arch = cm.scalar("arch", "compact");
    if (arch == "compact") {
        grid.compact_arch = true;
    } else if (arch == "default") {
        grid.compact_arch = false;
    } else {
        cm.fail(line_of("arch"), "unknown arch '" + arch + "' (expected compact or default)");
    }

    const std::string data = cm.scalar("data", "synth");
    if (data == "synth") {
        grid.source.kind = DatasetSource::Kind::synthetic;
    } else {
        grid.source.kind = DatasetSource::Kind::directory;
        grid.source.dir = data;
    }
    grid.source.synth_classes = static_cast<int>(
        cm.parse_int("synth_classes", cm.scalar("synth_classes", "10"), line_of("synth_classes")));
    grid.source.synth_per_class = static_cast<int>(cm.parse_int(
        "synth_per_class", cm.scalar("synth_per_class", "100"), line_of("synth_per_class")));
    grid.source.synth_noise = cm.parse_double("synth_noise", cm.scalar("synth_noise", "0.05"),
                                              line_of("synth_noise"));
    grid.source.data_seed = static_cast<std::uint64_t>(
        cm.parse_int("data_seed", cm.scalar("data_seed", "7"), line_of("data_seed")));
    grid.source.test_fraction = cm.parse_double(
        "test_fraction", cm.scalar("test_fraction", "0.2"), line_of("test_fraction"));

    cm.check_all_consumed();

    std::set<std::string> seen_ids;
    auto add_run = [&](const MetaConfig& meta) {
        RunSpec spec;
        spec.method = grid.method;
        spec.meta = meta;
        if (grid.method == RunMethod::baseline) {
            spec.baseline.lr = meta.outer_lr;
            spec.baseline.epochs = meta.rounds;
            spec.baseline.batch_size = meta.batch_size;
            spec.baseline.scenario = meta.scenario;
            spec.baseline.seed = meta.seed;
        }
        spec.id = run_id_for(grid.method, meta);
        if (!seen_ids.insert(spec.id).second) {
            throw ConfigError(origin + ": duplicate run '" + spec.id + "' in expanded grid");
        }
        grid.runs.push_back(std::move(spec));
    };

    for (int c : clients) {
        for (double outer : outer_lrs) {
            for (double inner : inner_lrs) {
                for (Scenario scenario : scenarios) {
                    for (long long rep = 0; rep < repetitions; ++rep) {
                        MetaConfig meta;
                        meta.inner_lr = inner;
                        meta.outer_lr = outer;
                        meta.rounds = static_cast<int>(rounds);
                        meta.local_epochs = static_cast<int>(local_epochs);
                        meta.clients_total = c;
                        meta.clients_per_round = c;
                        meta.batch_size = static_cast<int>(batch_size);
                        meta.support_fraction = support_fraction;
                        meta.scenario = scenario;
                        meta.aggregation = aggregation;
                        meta.seed = static_cast<std::uint64_t>(seed + rep);
                        if (grid.method == RunMethod::fedmeta) {
                            meta.validate();
                        }
                        add_run(meta);
                    }
                }
            }
        }
        // baseline runs do not vary with client count or inner rate
        if (grid.method == RunMethod::baseline) break;
    }
    if (grid.method == RunMethod::baseline) {
        // Collapse the inner_lr dimension: keep the first occurrence of each
        // (outer_lr, scenario, seed) combination.
        std::vector<RunSpec> unique;
        std::set<std::string> ids;
        for (RunSpec& r : grid.runs) {
            if (ids.insert(r.id).second) unique.push_back(std::move(r));
        }
        grid.runs = std::move(unique);
    }
    return grid;
}

ExperimentGrid parse_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str(), path.string());
}

std::vector<CurvePoint> curves_of(const GlobalState& state) {
    std::vector<CurvePoint> out;
    out.reserve(state.history.size());
    for (const RoundReport& r : state.history) {
        out.push_back({r.round, r.train_loss, r.train_accuracy, r.test_loss, r.test_accuracy});
    }
    return out;
}

std::vector<CurvePoint> curves_of(const BaselineResult& result) {
    std::vector<CurvePoint> out;
    out.reserve(result.history.size());
    for (const EpochReport& r : result.history) {
        out.push_back({r.epoch, r.train_loss, r.train_accuracy, r.test_loss, r.test_accuracy});
    }
    return out;
}

void emit_curves(const std::filesystem::path& out_dir, const std::string& run_id,
                 const std::vector<CurvePoint>& points) {
    const std::filesystem::path path = out_dir / (run_id + "_curves.csv");
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << "round,train_loss,train_acc,test_loss,test_acc\n";
    for (const CurvePoint& p : points) {
        out << p.round << "," << format_metric(p.train_loss) << "," << format_metric(p.train_acc)
            << "," << format_metric(p.test_loss) << "," << format_metric(p.test_acc) << "\n";
    }
}

void emit_metrics(const std::filesystem::path& out_dir, const std::string& run_id,
                  const std::vector<CurvePoint>& points) {
    const std::filesystem::path path = out_dir / (run_id + "_metrics.csv");
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << "run_id,round,split,loss,accuracy\n";
    for (const CurvePoint& p : points) {
        out << run_id << "," << p.round << ",train," << format_metric(p.train_loss) << ","
            << format_metric(p.train_acc) << "\n";
        out << run_id << "," << p.round << ",test," << format_metric(p.test_loss) << ","
            << format_metric(p.test_acc) << "\n";
    }
}

const RunOutcome* GridSummary::find(const std::string& run_id) const {
    for (const RunOutcome& o : outcomes) {
        if (o.spec.id == run_id) return &o;
    }
    return nullptr;
}

namespace {

std::vector<Scenario> scenario_columns(const ExperimentGrid& grid) {
    std::vector<Scenario> cols;
    for (Scenario s : kAllScenarios) {
        for (const RunSpec& r : grid.runs) {
            if (r.meta.scenario == s) {
                cols.push_back(s);
                break;
            }
        }
    }
    return cols;
}

struct SummaryRow {
    int clients = 0;
    double outer_lr = 0.0;
    double inner_lr = 0.0;
    std::uint64_t seed = 0;
    std::map<Scenario, std::string> cells;
};

void write_summary(const ExperimentGrid& grid, const GridSummary& summary,
                   const std::filesystem::path& out_dir) {
    const std::vector<Scenario> cols = scenario_columns(grid);

    // Rows keyed by (clients, outer, inner, seed), in first-appearance order.
    std::vector<SummaryRow> rows;
    for (const RunOutcome& o : summary.outcomes) {
        const MetaConfig& m = o.spec.meta;
        SummaryRow* row = nullptr;
        for (SummaryRow& r : rows) {
            if (r.clients == m.clients_total && r.outer_lr == m.outer_lr &&
                r.inner_lr == m.inner_lr && r.seed == m.seed) {
                row = &r;
                break;
            }
        }
        if (!row) {
            rows.push_back({m.clients_total, m.outer_lr, m.inner_lr, m.seed, {}});
            row = &rows.back();
        }
        row->cells[m.scenario] = o.ok ? format_percent(o.final_test_accuracy) : "error";
    }

    const bool is_baseline = grid.method == RunMethod::baseline;

    {
        std::ofstream csv(out_dir / "summary.csv");
        csv << "method,clients,outer_lr,inner_lr,seed";
        for (Scenario s : cols) csv << "," << scenario_name(s);
        csv << "\n";
        for (const SummaryRow& r : rows) {
            csv << (is_baseline ? "baseline" : "fedmeta") << ","
                << (is_baseline ? std::string("-") : std::to_string(r.clients)) << ","
                << format_g(r.outer_lr) << ","
                << (is_baseline ? std::string("-") : format_g(r.inner_lr)) << "," << r.seed;
            for (Scenario s : cols) {
                auto it = r.cells.find(s);
                csv << "," << (it == r.cells.end() ? "-" : it->second);
            }
            csv << "\n";
        }
    }

    {
        std::ofstream txt(out_dir / "summary.txt");
        txt << "Final-round full-modality test accuracy (percent)\n";
        int last_clients = -1;
        for (const SummaryRow& r : rows) {
            if (!is_baseline && r.clients != last_clients) {
                last_clients = r.clients;
                txt << "\n== clients = " << r.clients << " ==\n";
                char head[64];
                std::snprintf(head, sizeof(head), "%-12s %-12s %-6s", "outer_lr", "inner_lr",
                              "seed");
                txt << head;
                for (Scenario s : cols) {
                    char cell[32];
                    std::snprintf(cell, sizeof(cell), " %10s", std::string(scenario_name(s)).c_str());
                    txt << cell;
                }
                txt << "\n";
            } else if (is_baseline && last_clients == -1) {
                last_clients = 0;
                txt << "\n== baseline ==\n";
                char head[64];
                std::snprintf(head, sizeof(head), "%-12s %-12s %-6s", "lr", "-", "seed");
                txt << head;
                for (Scenario s : cols) {
                    char cell[32];
                    std::snprintf(cell, sizeof(cell), " %10s", std::string(scenario_name(s)).c_str());
                    txt << cell;
                }
                txt << "\n";
            }
            char lead[64];
            std::snprintf(lead, sizeof(lead), "%-12s %-12s %-6llu", format_g(r.outer_lr).c_str(),
                          is_baseline ? "-" : format_g(r.inner_lr).c_str(),
                          static_cast<unsigned long long>(r.seed));
            txt << lead;
            for (Scenario s : cols) {
                auto it = r.cells.find(s);
                char cell[32];
                std::snprintf(cell, sizeof(cell), " %10s",
                              it == r.cells.end() ? "-" : it->second.c_str());
                txt << cell;
            }
            txt << "\n";
        }
    }
}

}  // namespace

GridSummary run_grid(const ExperimentGrid& grid, const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    const TrainTestSplit data = load_source(grid.source);
    const MultiModalNet net(grid.compact_arch ? ArchSpec::compact() : ArchSpec::defaults());

    GridSummary summary;
    std::size_t index = 0;
    for (const RunSpec& spec : grid.runs) {
        ++index;
        RunOutcome outcome;
        outcome.spec = spec;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            std::vector<CurvePoint> points;
            if (spec.method == RunMethod::fedmeta) {
                const GlobalState state = run_fedmeta(net, data.train, data.test, spec.meta);
                points = curves_of(state);
            } else {
                const BaselineResult result =
                    train_baseline(net, data.train, data.test, spec.baseline);
                points = curves_of(result);
            }
            emit_curves(out_dir, spec.id, points);
            emit_metrics(out_dir, spec.id, points);
            outcome.ok = true;
            outcome.final_test_accuracy = points.back().test_acc;
        } catch (const std::exception& e) {
            outcome.ok = false;
            outcome.error = e.what();
        }
        outcome.wall_time_s =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::cout << "[" << index << "/" << grid.runs.size() << "] " << spec.id << ": "
                  << (outcome.ok ? "acc=" + format_percent(outcome.final_test_accuracy) + "%"
                                 : "error: " + outcome.error)
                  << "  (" << format_g(outcome.wall_time_s) << "s)" << std::endl;
        summary.outcomes.push_back(std::move(outcome));
    }

    write_summary(grid, summary, out_dir);

    {
        // Wall-clock timings are non-reproducible by nature, so they live in
        // their own log instead of the metrics or summary files.
        std::ofstream log(out_dir / "timing.log");
        double total = 0.0;
        for (const RunOutcome& o : summary.outcomes) {
            log << o.spec.id << " " << format_g(o.wall_time_s) << "s"
                << (o.ok ? "" : " (failed)") << "\n";
            total += o.wall_time_s;
        }
        log << "total " << format_g(total) << "s\n";
    }
    return summary;
}

}  // namespace fedmm
