// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <set>

#include "fedmm/data.hpp"

using namespace fedmm;

namespace {

LabeledModality make_source(const std::vector<int>& labels, double base, Rng& rng) {
    LabeledModality m;
    for (int label : labels) {
        Tensor t({2, 2});
        for (std::size_t i = 0; i < 4; ++i) t[i] = base + label + rng.next_double();
        m.items.push_back(std::move(t));
        m.labels.push_back(label);
    }
    return m;
}

std::vector<int> ints(std::span<const int> v) { return {v.begin(), v.end()}; }

}  // namespace

TEST_CASE("split_count rounds half away from zero") {
    CHECK(split_count(0.2, 100) == 20);
    CHECK(split_count(0.2, 10) == 2);
    CHECK(split_count(0.2, 7) == 1);   // round(1.4) = 1
    CHECK(split_count(0.25, 10) == 3); // round(2.5) = 3, away from zero
    CHECK(split_count(0.2, 8) == 2);   // round(1.6) = 2
}

TEST_CASE("split_support_query sizes and determinism") {
    std::vector<int> samples(100);
    for (int i = 0; i < 100; ++i) samples[static_cast<std::size_t>(i)] = i;

    const auto sq = split_support_query<int>(samples, 0.2, 5);
    CHECK(sq.support.size() == 20);
    CHECK(sq.query.size() == 80);

    // disjoint and exhaustive
    std::set<int> all(sq.support.begin(), sq.support.end());
    for (int v : sq.query) CHECK(all.insert(v).second);
    CHECK(all.size() == 100);

    const auto sq2 = split_support_query<int>(samples, 0.2, 5);
    CHECK(sq.support == sq2.support);
    CHECK(sq.query == sq2.query);

    std::vector<int> ten(10);
    for (int i = 0; i < 10; ++i) ten[static_cast<std::size_t>(i)] = i;
    const auto sq10 = split_support_query<int>(ten, 0.2, 1);
    CHECK(sq10.support.size() == 2);
    CHECK(sq10.query.size() == 8);

    std::vector<int> seven(7, 0);
    const auto sq7 = split_support_query<int>(seven, 0.2, 1);
    CHECK(sq7.support.size() == 1);
    CHECK(sq7.query.size() == 6);
}

TEST_CASE("split_support_query rejects degenerate configurations") {
    std::vector<int> tiny = {1, 2, 3};
    CHECK_THROWS_AS(split_support_query<int>(tiny, 0.0, 1), ConfigError);
    CHECK_THROWS_AS(split_support_query<int>(tiny, 1.0, 1), ConfigError);
    CHECK_THROWS_AS(split_support_query<int>(tiny, 0.01, 1), ConfigError);  // empty support
    std::vector<int> one = {1};
    CHECK_THROWS_AS(split_support_query<int>(one, 0.5, 1), ConfigError);
}

TEST_CASE("partition_clients near-equal sizes") {
    std::vector<int> ten(10);
    for (int i = 0; i < 10; ++i) ten[static_cast<std::size_t>(i)] = i;
    const auto shards = partition_clients<int>(ten, 3, 9);
    REQUIRE(shards.size() == 3);
    CHECK(shards[0].size() == 4);
    CHECK(shards[1].size() == 3);
    CHECK(shards[2].size() == 3);

    const auto single = partition_clients<int>(ten, 1, 9);
    REQUIRE(single.size() == 1);
    CHECK(single[0].size() == 10);

    CHECK_THROWS_AS(partition_clients<int>(ten, 11, 9), ConfigError);
    CHECK_THROWS_AS(partition_clients<int>(ten, 0, 9), ConfigError);
}

TEST_CASE("partition laws over random cases") {
    Rng rng(31);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 2 + rng.next_below(200);
        const std::size_t m = 1 + rng.next_below(n);
        std::vector<int> samples(n);
        for (std::size_t i = 0; i < n; ++i) samples[i] = static_cast<int>(i);
        const auto shards = partition_clients<int>(samples, m, rng.next_u64());

        std::set<int> seen;
        std::size_t min_size = n, max_size = 0;
        for (const auto& s : shards) {
            min_size = std::min(min_size, s.size());
            max_size = std::max(max_size, s.size());
            for (int v : s.query) CHECK(seen.insert(v).second);
            CHECK(s.support.empty());
        }
        CHECK(seen.size() == n);
        CHECK(max_size - min_size <= 1);
    }
}

TEST_CASE("align_by_label uses the per-class minimum") {
    Rng rng(41);
    // class 0: counts (5, 3, 4) -> 3 aligned samples
    const LabeledModality img = make_source({0, 0, 0, 0, 0}, 0.0, rng);
    const LabeledModality sp = make_source({0, 0, 0}, 10.0, rng);
    const LabeledModality sg = make_source({0, 0, 0, 0}, 20.0, rng);
    const AlignedDataset ds = align_by_label(img, sp, sg, 77);
    CHECK(ds.size() == 3);
    for (const AlignedSample& s : ds.samples) CHECK(s.label == 0);
    // nine skipped labels produce warnings
    CHECK(ds.provenance.warnings.size() == 9);

    // same seed -> identical pairing
    const AlignedDataset ds2 = align_by_label(img, sp, sg, 77);
    REQUIRE(ds2.size() == ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) {
        CHECK(ds.samples[i].image == ds2.samples[i].image);
        CHECK(ds.samples[i].spectrogram == ds2.samples[i].spectrogram);
        CHECK(ds.samples[i].sign == ds2.samples[i].sign);
    }
}

TEST_CASE("align_by_label of balanced sources keeps every pairing") {
    Rng rng(42);
    std::vector<int> labels;
    for (int c = 0; c < 10; ++c) {
        for (int i = 0; i < 20; ++i) labels.push_back(c);
    }
    const LabeledModality img = make_source(labels, 0.0, rng);
    const LabeledModality sp = make_source(labels, 10.0, rng);
    const LabeledModality sg = make_source(labels, 20.0, rng);
    const AlignedDataset ds = align_by_label(img, sp, sg, 3);
    CHECK(ds.size() == 200);
    CHECK(ds.provenance.warnings.empty());
    // label consistency: sources encode their label in the value range
    for (const AlignedSample& s : ds.samples) {
        CHECK(static_cast<int>(s.image[0]) % 10 == s.label);
        CHECK(static_cast<int>(s.spectrogram[0] - 10.0) % 10 == s.label);
        CHECK(static_cast<int>(s.sign[0] - 20.0) % 10 == s.label);
    }
}

TEST_CASE("align_by_label with no common labels is a data error") {
    Rng rng(43);
    const LabeledModality img = make_source({0, 0}, 0.0, rng);
    const LabeledModality sp = make_source({1, 1}, 0.0, rng);
    const LabeledModality sg = make_source({2, 2}, 0.0, rng);
    CHECK_THROWS_AS(align_by_label(img, sp, sg, 1), DataError);

    LabeledModality bad = make_source({0}, 0.0, rng);
    bad.labels[0] = 12;
    CHECK_THROWS_AS(align_by_label(bad, sp, sg, 1), DataError);
}

TEST_CASE("scenario parsing and masks") {
    CHECK(parse_scenario("sp/sign") == Scenario::sp_sign);
    CHECK(parse_scenario("spect/sign") == Scenario::sp_sign);
    CHECK(parse_scenario("spectrogram") == Scenario::sp);
    CHECK_THROWS_AS(parse_scenario("audio"), ConfigError);

    const ModalityMask m = scenario_mask(Scenario::sp_sign);
    CHECK_FALSE(m.image);
    CHECK(m.spectrogram);
    CHECK(m.sign);
    CHECK(scenario_mask(Scenario::img) == ModalityMask{true, false, false});
    CHECK(scenario_mask(Scenario::full).all_on());

    for (Scenario s : kAllScenarios) {
        CHECK(parse_scenario(scenario_name(s)) == s);
    }
}

TEST_CASE("apply_scenario masks supports only") {
    std::vector<Shard<int>> shards(3);
    apply_scenario(shards, Scenario::sp_sign);
    for (const auto& s : shards) {
        CHECK(s.support_mask == scenario_mask(Scenario::sp_sign));
    }
    apply_scenario(shards, Scenario::full);
    for (const auto& s : shards) CHECK(s.support_mask.all_on());
}

TEST_CASE("synthetic dataset determinism and structure") {
    const AlignedDataset noiseless = synth_generate(10, 2, 0.0, 5);
    CHECK(noiseless.size() == 20);
    // zero noise: every sample equals its class template
    for (const AlignedSample& s : noiseless.samples) {
        CHECK(s.image == synth_template(0, s.label, 5));
        CHECK(s.spectrogram == synth_template(1, s.label, 5));
        CHECK(s.sign == synth_template(2, s.label, 5));
    }

    const AlignedDataset a = synth_generate(10, 20, 0.05, 5);
    const AlignedDataset b = synth_generate(10, 20, 0.05, 5);
    CHECK(a.size() == 200);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a.samples[i].image == b.samples[i].image);
        CHECK(a.samples[i].label == b.samples[i].label);
    }

    int per_label[10] = {0};
    for (const AlignedSample& s : a.samples) ++per_label[s.label];
    for (int c = 0; c < 10; ++c) CHECK(per_label[c] == 20);

    CHECK_THROWS_AS(synth_generate(11, 1, 0.0, 1), ConfigError);
    CHECK_THROWS_AS(synth_generate(10, 0, 0.0, 1), ConfigError);
    CHECK_THROWS_AS(synth_generate(10, 1, -0.1, 1), ConfigError);
}

TEST_CASE("synthetic dataset is separable by a nearest-template classifier") {
    const std::uint64_t seed = 6;
    const AlignedDataset ds = synth_generate(10, 10, 0.05, seed);
    for (int modality = 0; modality < 3; ++modality) {
        Tensor templates[10];
        for (int c = 0; c < 10; ++c) templates[c] = synth_template(modality, c, seed);
        std::size_t correct = 0;
        for (const AlignedSample& s : ds.samples) {
            const Tensor& x =
                modality == 0 ? s.image : (modality == 1 ? s.spectrogram : s.sign);
            int best = -1;
            double best_d = 0.0;
            for (int c = 0; c < 10; ++c) {
                double d = 0.0;
                for (std::size_t i = 0; i < x.numel(); ++i) {
                    const double diff = x[i] - templates[c][i];
                    d += diff * diff;
                }
                if (best < 0 || d < best_d) {
                    best = c;
                    best_d = d;
                }
            }
            if (best == s.label) ++correct;
        }
        CHECK(correct == ds.size());
    }
}

TEST_CASE("train_test_split stratifies by label") {
    const AlignedDataset ds = synth_generate(10, 20, 0.01, 8);
    const TrainTestSplit tt = train_test_split(ds, 0.2, 9);
    CHECK(tt.test.size() == 40);
    CHECK(tt.train.size() == 160);
    int per_label[10] = {0};
    for (const AlignedSample& s : tt.test) ++per_label[s.label];
    for (int c = 0; c < 10; ++c) CHECK(per_label[c] == 4);

    const TrainTestSplit tt2 = train_test_split(ds, 0.2, 9);
    REQUIRE(tt.train.size() == tt2.train.size());
    for (std::size_t i = 0; i < tt.train.size(); ++i) {
        CHECK(tt.train[i].image == tt2.train[i].image);
    }

    AlignedDataset tiny;
    tiny.samples.push_back(ds.samples[0]);
    CHECK_THROWS_AS(train_test_split(tiny, 0.2, 1), ConfigError);
    CHECK_THROWS_AS(train_test_split(ds, 0.0, 1), ConfigError);
}

TEST_CASE("make_client_shards composes partition, split and scenario") {
    const AlignedDataset ds = synth_generate(10, 12, 0.02, 10);
    const auto shards = make_client_shards(ds.samples, 3, 0.2, Scenario::sign, 11);
    REQUIRE(shards.size() == 3);
    std::size_t total = 0;
    for (const ClientShard& s : shards) {
        total += s.size();
        CHECK(s.support.size() == split_count(0.2, s.size()));
        CHECK(s.support_mask == scenario_mask(Scenario::sign));
        CHECK_FALSE(s.support.empty());
        CHECK_FALSE(s.query.empty());
    }
    CHECK(total == ds.size());
}

TEST_CASE("dataset directories round-trip through label re-alignment") {
    const auto dir = std::filesystem::temp_directory_path() / "fedmm_dataset_dir_test";
    std::filesystem::remove_all(dir);

    const AlignedDataset original = synth_generate(10, 5, 0.02, 61);
    write_dataset_dir(dir, original, 62);
    CHECK(std::filesystem::exists(dir / "images.mmtf"));
    CHECK(std::filesystem::exists(dir / "spectrograms.labels"));
    CHECK(std::filesystem::exists(dir / "manifest.txt"));

    const AlignedDataset loaded = load_dataset_dir(dir, 63);
    CHECK(loaded.size() == original.size());
    int per_label[10] = {0};
    for (const AlignedSample& s : loaded.samples) {
        ++per_label[s.label];
        // every tensor is close to its class template, so the pairing kept
        // the labels consistent across modalities
        const Tensor tmpl = synth_template(1, s.label, 61);
        double err = 0.0;
        for (std::size_t i = 0; i < tmpl.numel(); ++i) {
            err = std::max(err, std::abs(s.spectrogram[i] - tmpl[i]));
        }
        CHECK(err < 0.2);
    }
    for (int c = 0; c < 10; ++c) CHECK(per_label[c] == 5);
    std::filesystem::remove_all(dir);
}

TEST_CASE("manifest round-trips key-values and warnings") {
    Manifest m;
    m.set("alpha", "1");
    m.set("beta", "two words");
    m.warnings.push_back("something odd");
    const Manifest back = Manifest::from_text(m.to_text());
    REQUIRE(back.get("alpha") != nullptr);
    CHECK(*back.get("alpha") == "1");
    CHECK(*back.get("beta") == "two words");
    REQUIRE(back.warnings.size() == 1);
    CHECK(back.warnings[0] == "something odd");
}

TEST_CASE("label files round-trip and reject garbage") {
    const auto dir = std::filesystem::temp_directory_path() / "fedmm_label_test";
    std::filesystem::create_directories(dir);
    const auto path = dir / "labels.txt";
    const std::vector<int> labels = {3, 1, 4, 1, 5};
    write_labels(path, labels);
    CHECK(ints(read_labels(path)) == labels);

    {
        std::ofstream bad(path);
        bad << "1\nx\n";
    }
    CHECK_THROWS_AS(read_labels(path), DataError);
    std::filesystem::remove_all(dir);
}
