// SPDX-License-Identifier: Apache-2.0
#include "fedmm/data.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <sstream>

#include "fedmm/errors.hpp"
#include "fedmm/mmtf.hpp"

namespace fedmm {

namespace detail {

void check_split_args(std::size_t n, double fraction) {
    if (!(fraction > 0.0 && fraction < 1.0)) {
        throw ConfigError("split fraction must lie in (0, 1), got " + std::to_string(fraction));
    }
    if (n < 2) {
        throw ConfigError("cannot split " + std::to_string(n) + " samples into two non-empty sides");
    }
}

void throw_empty_side(std::size_t n, double fraction, std::size_t k) {
    std::ostringstream os;
    os << "support fraction " << fraction << " of " << n << " samples leaves an empty "
       << (k == 0 ? "support" : "query") << " side";
    throw ConfigError(os.str());
}

void check_partition_args(std::size_t n, std::size_t clients) {
    if (clients == 0) throw ConfigError("client count must be positive");
    if (clients > n) {
        throw ConfigError("cannot partition " + std::to_string(n) + " samples across " +
                          std::to_string(clients) + " clients");
    }
}

}  // namespace detail

void Manifest::set(std::string key, std::string value) {
    for (auto& kv : entries) {
        if (kv.first == key) {
            kv.second = std::move(value);
            return;
        }
    }
    entries.emplace_back(std::move(key), std::move(value));
}

const std::string* Manifest::get(std::string_view key) const {
    for (const auto& kv : entries) {
        if (kv.first == key) return &kv.second;
    }
    return nullptr;
}

std::string Manifest::to_text() const {
    std::ostringstream os;
    for (const auto& kv : entries) os << kv.first << " = " << kv.second << "\n";
    for (std::size_t i = 0; i < warnings.size(); ++i) {
        os << "warning." << i << " = " << warnings[i] << "\n";
    }
    return os.str();
}

Manifest Manifest::from_text(const std::string& text) {
    Manifest m;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.rfind("warning.", 0) == 0) {
            m.warnings.push_back(std::move(value));
        } else {
            m.entries.emplace_back(std::move(key), std::move(value));
        }
    }
    return m;
}

std::vector<ClientShard> make_client_shards(std::span<const AlignedSample> samples,
                                            std::size_t num_clients, double support_fraction,
                                            Scenario scenario, std::uint64_t seed) {
    std::vector<ClientShard> shards =
        partition_clients<AlignedSample>(samples, num_clients, mix_seed(seed, /*tag=*/1));
    for (ClientShard& s : shards) {
        split_shard_support_query(s, support_fraction,
                                  mix_seed(seed, /*tag=*/2, static_cast<std::uint64_t>(s.client_id)));
    }
    apply_scenario(shards, scenario);
    return shards;
}

namespace {

void check_labels(const LabeledModality& m, const char* which) {
    if (m.items.size() != m.labels.size()) {
        throw DataError(std::string(which) + " source has " + std::to_string(m.items.size()) +
                        " tensors but " + std::to_string(m.labels.size()) + " labels");
    }
    for (std::size_t i = 0; i < m.labels.size(); ++i) {
        if (m.labels[i] < 0 || m.labels[i] >= kNumClasses) {
            throw DataError(std::string(which) + " label " + std::to_string(m.labels[i]) +
                            " at entry " + std::to_string(i) + " outside [0, " +
                            std::to_string(kNumClasses) + ")");
        }
    }
}

std::array<std::vector<std::size_t>, kNumClasses> indices_by_class(const LabeledModality& m) {
    std::array<std::vector<std::size_t>, kNumClasses> by_class;
    for (std::size_t i = 0; i < m.labels.size(); ++i) {
        by_class[static_cast<std::size_t>(m.labels[i])].push_back(i);
    }
    return by_class;
}

}  // namespace

AlignedDataset align_by_label(const LabeledModality& images, const LabeledModality& spectrograms,
                              const LabeledModality& signs, std::uint64_t seed) {
    check_labels(images, "image");
    check_labels(spectrograms, "spectrogram");
    check_labels(signs, "sign");

    auto img_cls = indices_by_class(images);
    auto sp_cls = indices_by_class(spectrograms);
    auto sg_cls = indices_by_class(signs);

    AlignedDataset out;
    out.provenance.set("builder", "align_by_label");
    out.provenance.set("seed", std::to_string(seed));

    for (int c = 0; c < kNumClasses; ++c) {
        auto& ii = img_cls[static_cast<std::size_t>(c)];
        auto& si = sp_cls[static_cast<std::size_t>(c)];
        auto& gi = sg_cls[static_cast<std::size_t>(c)];
        const std::size_t k = std::min({ii.size(), si.size(), gi.size()});
        if (k == 0) {
            std::ostringstream os;
            os << "label " << c << " skipped: counts image=" << ii.size() << " spectrogram="
               << si.size() << " sign=" << gi.size();
            out.provenance.warnings.push_back(os.str());
        } else {
            Rng(mix_seed(seed, 10, static_cast<std::uint64_t>(c))).shuffle(ii);
            Rng(mix_seed(seed, 11, static_cast<std::uint64_t>(c))).shuffle(si);
            Rng(mix_seed(seed, 12, static_cast<std::uint64_t>(c))).shuffle(gi);
            for (std::size_t i = 0; i < k; ++i) {
                AlignedSample s;
                s.image = images.items[ii[i]];
                s.spectrogram = spectrograms.items[si[i]];
                s.sign = signs.items[gi[i]];
                s.label = c;
                out.samples.push_back(std::move(s));
            }
        }
        out.provenance.set("class_count." + std::to_string(c), std::to_string(k));
    }
    if (out.samples.empty()) {
        throw DataError("alignment produced no samples: no label exists in all three sources");
    }
    out.provenance.set("total", std::to_string(out.samples.size()));
    return out;
}

Tensor synth_template(int modality, int cls, std::uint64_t seed) {
    // The image modality carries a much stronger, zero-mean signal than the
    // other two, mirroring the source datasets this stands in for; a model
    // trained without the image modality is visibly disrupted when the
    // untrained image branch comes back at evaluation time.
    static constexpr double kBlockHigh[3] = {24.0, 0.3, 0.6};
    static constexpr double kBlockLow[3] = {-24.0, 0.0, 0.0};
    static constexpr int kGrid = 8;
    const std::vector<std::size_t>& shape =
        modality == 0 ? kImageShape : (modality == 1 ? kSpectrogramShape : kSignShape);
    const std::size_t h = shape[1];
    const std::size_t w = shape[2];

    // One bit per grid cell decides high/low; the pattern is a pure function
    // of (seed, modality, class).
    Rng rng(mix_seed(seed, 100 + static_cast<std::uint64_t>(modality),
                     static_cast<std::uint64_t>(cls)));
    std::array<bool, kGrid * kGrid> bits{};
    for (auto& b : bits) b = rng.next_double() < 0.5;

    Tensor t(shape);
    double* d = t.data();
    for (std::size_t y = 0; y < h; ++y) {
        const std::size_t by = y * kGrid / h;
        for (std::size_t x = 0; x < w; ++x) {
            const std::size_t bx = x * kGrid / w;
            d[y * w + x] = bits[by * kGrid + bx] ? kBlockHigh[modality] : kBlockLow[modality];
        }
    }
    return t;
}

AlignedDataset synth_generate(int classes, int per_class, double noise_sigma, std::uint64_t seed) {
    if (classes < 1 || classes > kNumClasses) {
        throw ConfigError("synthetic class count must lie in [1, " + std::to_string(kNumClasses) +
                          "], got " + std::to_string(classes));
    }
    if (per_class < 1) throw ConfigError("per-class sample count must be positive");
    if (noise_sigma < 0.0) throw ConfigError("noise sigma must be non-negative");

    AlignedDataset out;
    out.provenance.set("builder", "synth_generate");
    out.provenance.set("seed", std::to_string(seed));
    out.provenance.set("classes", std::to_string(classes));
    out.provenance.set("per_class", std::to_string(per_class));
    out.provenance.set("noise_sigma", std::to_string(noise_sigma));

    for (int c = 0; c < classes; ++c) {
        const Tensor img_t = synth_template(0, c, seed);
        const Tensor sp_t = synth_template(1, c, seed);
        const Tensor sg_t = synth_template(2, c, seed);
        Rng noise(mix_seed(seed, 200, static_cast<std::uint64_t>(c)));
        for (int i = 0; i < per_class; ++i) {
            AlignedSample s;
            s.label = c;
            s.image = img_t;
            s.spectrogram = sp_t;
            s.sign = sg_t;
            if (noise_sigma > 0.0) {
                for (Tensor* t : {&s.image, &s.spectrogram, &s.sign}) {
                    double* d = t->data();
                    for (std::size_t k = 0; k < t->numel(); ++k) {
                        d[k] += noise_sigma * noise.next_gaussian();
                    }
                }
            }
            out.samples.push_back(std::move(s));
        }
        out.provenance.set("class_count." + std::to_string(c), std::to_string(per_class));
    }
    out.provenance.set("total", std::to_string(out.samples.size()));
    return out;
}

TrainTestSplit train_test_split(const AlignedDataset& dataset, double test_fraction,
                                std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
        throw ConfigError("test fraction must lie in (0, 1), got " + std::to_string(test_fraction));
    }
    std::array<std::vector<std::size_t>, kNumClasses> by_class;
    for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
        const int label = dataset.samples[i].label;
        if (label < 0 || label >= kNumClasses) {
            throw DataError("sample " + std::to_string(i) + " has label " + std::to_string(label) +
                            " outside [0, " + std::to_string(kNumClasses) + ")");
        }
        by_class[static_cast<std::size_t>(label)].push_back(i);
    }

    TrainTestSplit out;
    for (int c = 0; c < kNumClasses; ++c) {
        auto& idx = by_class[static_cast<std::size_t>(c)];
        if (idx.empty()) continue;
        if (idx.size() < 2) {
            throw ConfigError("class " + std::to_string(c) + " has only " +
                              std::to_string(idx.size()) + " sample(s); cannot split");
        }
        Rng(mix_seed(seed, 20, static_cast<std::uint64_t>(c))).shuffle(idx);
        const std::size_t k = split_count(test_fraction, idx.size());
        for (std::size_t i = 0; i < idx.size(); ++i) {
            (i < k ? out.test : out.train).push_back(dataset.samples[idx[i]]);
        }
    }
    if (out.train.empty() || out.test.empty()) {
        throw ConfigError("train/test split produced an empty side");
    }
    return out;
}

std::vector<int> read_labels(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open label file " + path.string());
    std::vector<int> labels;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        try {
            std::size_t pos = 0;
            const int v = std::stoi(line, &pos);
            if (pos != line.size()) throw std::invalid_argument("trailing");
            labels.push_back(v);
        } catch (const std::exception&) {
            throw DataError("label file " + path.string() + " line " + std::to_string(line_no) +
                            ": not an integer: '" + line + "'");
        }
    }
    return labels;
}

void write_labels(const std::filesystem::path& path, std::span<const int> labels) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write label file " + path.string());
    for (int v : labels) out << v << "\n";
}

LabeledModality read_labeled_modality(const std::filesystem::path& tensors_path,
                                      const std::filesystem::path& labels_path) {
    LabeledModality m;
    for (auto& [name, tensor] : mmtf::read_file(tensors_path)) {
        m.items.push_back(std::move(tensor));
    }
    m.labels = read_labels(labels_path);
    if (m.items.size() != m.labels.size()) {
        throw DataError(tensors_path.string() + " holds " + std::to_string(m.items.size()) +
                        " tensors but " + labels_path.string() + " holds " +
                        std::to_string(m.labels.size()) + " labels");
    }
    return m;
}

namespace {

const std::array<const char*, 3> kModalityFiles = {"images", "spectrograms", "signs"};

}  // namespace

void write_dataset_dir(const std::filesystem::path& dir, const AlignedDataset& dataset,
                       std::uint64_t shuffle_seed) {
    std::filesystem::create_directories(dir);
    for (int m = 0; m < 3; ++m) {
        // Each modality is written in its own shuffled order, so loading has
        // to re-align by label just like with independently collected sources.
        Rng rng(mix_seed(shuffle_seed, 30, static_cast<std::uint64_t>(m)));
        std::vector<std::size_t> order = rng.permutation(dataset.samples.size());

        std::vector<mmtf::NamedTensor> tensors;
        std::vector<int> labels;
        tensors.reserve(order.size());
        labels.reserve(order.size());
        for (std::size_t pos = 0; pos < order.size(); ++pos) {
            const AlignedSample& s = dataset.samples[order[pos]];
            const Tensor& t = m == 0 ? s.image : (m == 1 ? s.spectrogram : s.sign);
            char name[32];
            std::snprintf(name, sizeof(name), "%s_%06zu", kModalityFiles[m], pos);
            tensors.emplace_back(name, t);
            labels.push_back(s.label);
        }
        mmtf::write_file(dir / (std::string(kModalityFiles[m]) + ".mmtf"), tensors);
        write_labels(dir / (std::string(kModalityFiles[m]) + ".labels"), labels);
    }

    Manifest manifest = dataset.provenance;
    manifest.set("shuffle_seed", std::to_string(shuffle_seed));
    for (int m = 0; m < 3; ++m) {
        manifest.set(std::string("source.") + kModalityFiles[m],
                     std::string(kModalityFiles[m]) + ".mmtf");
    }
    std::ofstream out(dir / "manifest.txt");
    if (!out) throw DataError("cannot write manifest in " + dir.string());
    out << manifest.to_text();
}

AlignedDataset load_dataset_dir(const std::filesystem::path& dir, std::uint64_t align_seed) {
    LabeledModality mods[3];
    for (int m = 0; m < 3; ++m) {
        mods[m] = read_labeled_modality(dir / (std::string(kModalityFiles[m]) + ".mmtf"),
                                        dir / (std::string(kModalityFiles[m]) + ".labels"));
    }
    AlignedDataset out = align_by_label(mods[0], mods[1], mods[2], align_seed);
    out.provenance.set("source_dir", dir.string());
    return out;
}

}  // namespace fedmm
