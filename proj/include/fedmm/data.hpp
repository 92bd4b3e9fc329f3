// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fedmm/modality.hpp"
#include "fedmm/rng.hpp"
#include "fedmm/tensor.hpp"

namespace fedmm {

inline constexpr int kNumClasses = 10;

inline const std::vector<std::size_t> kImageShape = {1, 28, 28};
inline const std::vector<std::size_t> kSpectrogramShape = {1, 64, 64};
inline const std::vector<std::size_t> kSignShape = {1, 64, 64};

/// One multimodal data point. The three modalities carry the same label by
/// construction of every pipeline that produces these.
struct AlignedSample {
    Tensor image;        // [1,28,28]
    Tensor spectrogram;  // [1,64,64]
    Tensor sign;         // [1,64,64]
    int label = 0;
};

/// Ordered key-value provenance record written next to datasets.
struct Manifest {
    std::vector<std::pair<std::string, std::string>> entries;
    std::vector<std::string> warnings;

    void set(std::string key, std::string value);
    const std::string* get(std::string_view key) const;
    std::string to_text() const;
    static Manifest from_text(const std::string& text);
};

struct AlignedDataset {
    std::vector<AlignedSample> samples;
    Manifest provenance;

    std::size_t size() const { return samples.size(); }
};

/// One source modality: items[i] carries labels[i].
struct LabeledModality {
    std::vector<Tensor> items;
    std::vector<int> labels;
};

/// One client's data. The mask applies to the support side only; query and
/// evaluation always run full-modality.
template <typename SampleT>
struct Shard {
    int client_id = 0;
    std::vector<SampleT> support;
    std::vector<SampleT> query;
    ModalityMask support_mask = ModalityMask::full();

    std::size_t size() const { return support.size() + query.size(); }
};

using ClientShard = Shard<AlignedSample>;

/// Split size rule used everywhere: round half away from zero.
inline std::size_t split_count(double fraction, std::size_t n) {
    return static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
}

template <typename SampleT>
struct SupportQuery {
    std::vector<SampleT> support;
    std::vector<SampleT> query;
};

/// Seeded shuffle, first round(fraction*n) samples to support, rest to query.
/// Both sides must end up non-empty.
template <typename SampleT>
SupportQuery<SampleT> split_support_query(std::span<const SampleT> samples, double support_fraction,
                                          std::uint64_t seed);

/// Seeded shuffle then contiguous near-equal split (sizes differ by <= 1).
/// Every sample lands in the shard's query pool; run split_shard_support_query
/// afterwards to carve out the support set.
template <typename SampleT>
std::vector<Shard<SampleT>> partition_clients(std::span<const SampleT> dataset,
                                              std::size_t num_clients, std::uint64_t seed);

template <typename SampleT>
void split_shard_support_query(Shard<SampleT>& shard, double support_fraction, std::uint64_t seed);

/// Sets every shard's support mask to the scenario's available modalities.
template <typename SampleT>
void apply_scenario(std::vector<Shard<SampleT>>& shards, Scenario scenario) {
    for (Shard<SampleT>& s : shards) s.support_mask = scenario_mask(scenario);
}

/// partition + per-shard support/query split + scenario mask, in one call.
std::vector<ClientShard> make_client_shards(std::span<const AlignedSample> samples,
                                            std::size_t num_clients, double support_fraction,
                                            Scenario scenario, std::uint64_t seed);

/// Pairs samples of equal label across the three sources: per label, each
/// source's class list is shuffled with a seeded stream and the lists are
/// zipped up to the smallest count. Labels with no matchable samples are
/// skipped with a manifest warning; an empty result is a DataError.
AlignedDataset align_by_label(const LabeledModality& images, const LabeledModality& spectrograms,
                              const LabeledModality& signs, std::uint64_t seed);

/// Deterministic separable synthetic dataset: per (modality, class) a fixed
/// block-pattern template derived from the seed, plus i.i.d. Gaussian noise.
AlignedDataset synth_generate(int classes, int per_class, double noise_sigma, std::uint64_t seed);

/// The template tensor synth_generate uses for (modality, class). modality:
/// 0 = image, 1 = spectrogram, 2 = sign.
Tensor synth_template(int modality, int cls, std::uint64_t seed);

struct TrainTestSplit {
    std::vector<AlignedSample> train;
    std::vector<AlignedSample> test;
};

/// Stratified by label: per class, round(test_fraction * count) samples go to
/// the test side. A class with fewer than 2 samples is a ConfigError.
TrainTestSplit train_test_split(const AlignedDataset& dataset, double test_fraction,
                                std::uint64_t seed);

// ---- file interfaces -------------------------------------------------------

/// One integer label per line, same order as the tensor entries.
std::vector<int> read_labels(const std::filesystem::path& path);
void write_labels(const std::filesystem::path& path, std::span<const int> labels);

/// Reads a tensor container plus its label file into a LabeledModality.
LabeledModality read_labeled_modality(const std::filesystem::path& tensors_path,
                                      const std::filesystem::path& labels_path);

/// Writes a dataset directory: per-modality tensor containers and label
/// files, each modality independently shuffled, plus a manifest. A dataset
/// written this way round-trips through load_dataset_dir + align_by_label.
void write_dataset_dir(const std::filesystem::path& dir, const AlignedDataset& dataset,
                       std::uint64_t shuffle_seed);

/// Loads the three modality files from `dir` and aligns them by label.
AlignedDataset load_dataset_dir(const std::filesystem::path& dir, std::uint64_t align_seed);

// ---- template implementations ---------------------------------------------

namespace detail {
void check_split_args(std::size_t n, double fraction);
[[noreturn]] void throw_empty_side(std::size_t n, double fraction, std::size_t k);
void check_partition_args(std::size_t n, std::size_t clients);
}  // namespace detail

template <typename SampleT>
SupportQuery<SampleT> split_support_query(std::span<const SampleT> samples, double support_fraction,
                                          std::uint64_t seed) {
    detail::check_split_args(samples.size(), support_fraction);
    const std::size_t n = samples.size();
    const std::size_t k = split_count(support_fraction, n);
    if (k == 0 || k == n) detail::throw_empty_side(n, support_fraction, k);

    Rng rng(seed);
    std::vector<std::size_t> idx = rng.permutation(n);
    SupportQuery<SampleT> out;
    out.support.reserve(k);
    out.query.reserve(n - k);
    for (std::size_t i = 0; i < n; ++i) {
        (i < k ? out.support : out.query).push_back(samples[idx[i]]);
    }
    return out;
}

template <typename SampleT>
std::vector<Shard<SampleT>> partition_clients(std::span<const SampleT> dataset,
                                              std::size_t num_clients, std::uint64_t seed) {
    detail::check_partition_args(dataset.size(), num_clients);
    Rng rng(seed);
    std::vector<std::size_t> idx = rng.permutation(dataset.size());

    std::vector<Shard<SampleT>> shards(num_clients);
    const std::size_t base = dataset.size() / num_clients;
    const std::size_t extra = dataset.size() % num_clients;
    std::size_t cursor = 0;
    for (std::size_t c = 0; c < num_clients; ++c) {
        shards[c].client_id = static_cast<int>(c);
        const std::size_t take = base + (c < extra ? 1 : 0);
        shards[c].query.reserve(take);
        for (std::size_t i = 0; i < take; ++i) {
            shards[c].query.push_back(dataset[idx[cursor++]]);
        }
    }
    return shards;
}

template <typename SampleT>
void split_shard_support_query(Shard<SampleT>& shard, double support_fraction,
                               std::uint64_t seed) {
    std::vector<SampleT> pool;
    pool.reserve(shard.size());
    for (SampleT& s : shard.support) pool.push_back(std::move(s));
    for (SampleT& s : shard.query) pool.push_back(std::move(s));
    SupportQuery<SampleT> sq =
        split_support_query<SampleT>(pool, support_fraction, seed);
    shard.support = std::move(sq.support);
    shard.query = std::move(sq.query);
}

}  // namespace fedmm
