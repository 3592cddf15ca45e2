#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "test_util.hpp"
#include "triphash/dataset.hpp"
#include "triphash/error.hpp"
#include "triphash/hashing.hpp"
#include "triphash/io.hpp"

using namespace triphash;

namespace {

BlobSpec small_spec() {
    BlobSpec spec;
    spec.classes = 4;
    spec.dim = 8;
    spec.samples_per_class = 25;
    spec.center_scale = 2.0;
    spec.noise_sigma = 0.5;
    spec.seed = 42;
    return spec;
}

} // namespace

TEST(GenerateBlobs, SameSpecGivesBitIdenticalDatasets) {
    const Dataset a = generate_blobs(small_spec());
    const Dataset b = generate_blobs(small_spec());
    EXPECT_TRUE(a.features == b.features);
    EXPECT_EQ(a.labels, b.labels);
}

TEST(GenerateBlobs, CountsAndLabelLayout) {
    BlobSpec spec;
    spec.classes = 10;
    spec.dim = 64;
    spec.samples_per_class = 200;
    const Dataset ds = generate_blobs(spec);
    ASSERT_EQ(ds.n(), 2000u);
    ASSERT_EQ(ds.dim(), 64u);
    std::map<std::uint32_t, int> counts;
    for (auto label : ds.labels) counts[label]++;
    ASSERT_EQ(counts.size(), 10u);
    for (const auto& [label, count] : counts) EXPECT_EQ(count, 200);
}

TEST(GenerateBlobs, PerClassMeanNearRecordedCenter) {
    BlobSpec spec;
    spec.classes = 10;
    spec.dim = 64;
    spec.samples_per_class = 200;
    spec.center_scale = 1.0;
    spec.noise_sigma = 0.8;
    spec.seed = 1;
    const BlobResult blob = generate_blobs_with_centers(spec);

    const double bound = 4.0 * spec.noise_sigma / std::sqrt(double(spec.samples_per_class));
    for (std::uint32_t c = 0; c < spec.classes; ++c) {
        for (std::size_t j = 0; j < spec.dim; ++j) {
            double mean = 0.0;
            std::size_t count = 0;
            for (std::size_t i = 0; i < blob.data.n(); ++i)
                if (blob.data.labels[i] == c) {
                    mean += blob.data.features(i, j);
                    ++count;
                }
            mean /= double(count);
            EXPECT_NEAR(mean, blob.centers(c, j), bound)
                << "class " << c << " coordinate " << j;
        }
    }
}

TEST(GenerateBlobs, RejectsInvalidSpecs) {
    BlobSpec spec = small_spec();
    spec.classes = 1;
    EXPECT_THROW(generate_blobs(spec), std::invalid_argument);
    spec = small_spec();
    spec.noise_sigma = 0.0;
    EXPECT_THROW(generate_blobs(spec), std::invalid_argument);
    spec = small_spec();
    spec.samples_per_class = 0;
    EXPECT_THROW(generate_blobs(spec), std::invalid_argument);
}

TEST(Split, ExactStratification) {
    BlobSpec spec;
    spec.classes = 10;
    spec.dim = 4;
    spec.samples_per_class = 100;
    const Dataset ds = generate_blobs(spec);
    const SplitResult parts = split(ds, 0.2, 99);
    EXPECT_EQ(parts.test.n(), 200u);
    EXPECT_EQ(parts.train.n(), 800u);
    std::map<std::uint32_t, int> test_counts;
    for (auto label : parts.test.labels) test_counts[label]++;
    for (const auto& [label, count] : test_counts) EXPECT_EQ(count, 20);
}

TEST(Split, DeterministicAndPartitions) {
    const Dataset ds = generate_blobs(small_spec());
    const SplitResult a = split(ds, 0.25, 5);
    const SplitResult b = split(ds, 0.25, 5);
    EXPECT_TRUE(a.train.features == b.train.features);
    EXPECT_TRUE(a.test.features == b.test.features);
    EXPECT_EQ(a.train.labels, b.train.labels);

    // Union of rows equals the source multiset; sides are disjoint by size.
    ASSERT_EQ(a.train.n() + a.test.n(), ds.n());
    std::multiset<std::vector<float>> source, combined;
    for (std::size_t i = 0; i < ds.n(); ++i) {
        auto row = ds.features.row(i);
        source.insert(std::vector<float>(row.begin(), row.end()));
    }
    for (const Dataset* part : {&a.train, &a.test})
        for (std::size_t i = 0; i < part->n(); ++i) {
            auto row = part->features.row(i);
            combined.insert(std::vector<float>(row.begin(), row.end()));
        }
    EXPECT_EQ(source, combined);
}

TEST(Split, Errors) {
    const Dataset ds = generate_blobs(small_spec());
    EXPECT_THROW(split(ds, 0.0, 1), std::invalid_argument);
    EXPECT_THROW(split(ds, 1.0, 1), std::invalid_argument);

    Dataset tiny;
    tiny.features = MatrixF(3, 2, 0.0f);
    tiny.labels = {0, 0, 1}; // class 1 has a single sample
    tiny.num_classes = 2;
    EXPECT_THROW(split(tiny, 0.5, 1), std::invalid_argument);
}

TEST(FeatBin, RoundTripIsBitExact) {
    testutil::TempDir dir;
    for (std::uint64_t seed : {1, 2, 3}) {
        BlobSpec spec = small_spec();
        spec.seed = seed;
        const Dataset ds = generate_blobs(spec);
        const auto path = dir / ("roundtrip_" + std::to_string(seed) + ".feat");
        write_features(ds, path, FeatureFormat::FeatBin);
        const Dataset back = read_features(path, FeatureFormat::FeatBin);
        EXPECT_TRUE(ds.features == back.features);
        EXPECT_EQ(ds.labels, back.labels);
        EXPECT_EQ(back.num_classes, spec.classes);
    }
}

TEST(FeatBin, HeaderIsTwentyBytesAndWritesAreDeterministic) {
    testutil::TempDir dir;
    Dataset empty;
    empty.features = MatrixF(0, 5);
    const auto empty_path = dir / "empty.feat";
    write_features(empty, empty_path, FeatureFormat::FeatBin);
    EXPECT_EQ(std::filesystem::file_size(empty_path), 20u);
    const Dataset back = read_features(empty_path, FeatureFormat::FeatBin);
    EXPECT_EQ(back.n(), 0u);
    EXPECT_EQ(back.dim(), 5u);

    const Dataset ds = generate_blobs(small_spec());
    const auto p1 = dir / "a.feat";
    const auto p2 = dir / "b.feat";
    write_features(ds, p1, FeatureFormat::FeatBin);
    write_features(ds, p2, FeatureFormat::FeatBin);
    EXPECT_EQ(testutil::read_bytes(p1), testutil::read_bytes(p2));
    EXPECT_EQ(std::filesystem::file_size(p1), 20u + ds.n() * ds.dim() * 4 + ds.n() * 4);
}

TEST(FeatBin, ReadErrors) {
    testutil::TempDir dir;
    const auto bad_magic = dir / "bad_magic.feat";
    testutil::write_bytes(bad_magic, {'F', 'O', 'O', 'D', 1, 0, 0, 0});
    EXPECT_THROW(read_features(bad_magic, FeatureFormat::FeatBin), IoError);

    const Dataset ds = generate_blobs(small_spec());
    const auto good = dir / "good.feat";
    write_features(ds, good, FeatureFormat::FeatBin);
    auto bytes = testutil::read_bytes(good);
    bytes.resize(bytes.size() - 3); // chop the payload
    const auto truncated = dir / "truncated.feat";
    testutil::write_bytes(truncated, bytes);
    EXPECT_THROW(read_features(truncated, FeatureFormat::FeatBin), IoError);

    EXPECT_THROW(read_features(dir / "missing.feat", FeatureFormat::FeatBin), IoError);
}

TEST(Csv, ParsesLabeledRows) {
    testutil::TempDir dir;
    const auto path = dir / "rows.csv";
    {
        std::ofstream out(path);
        out << "3,0.5,-1.25\n";
        out << "0,1,2\n";
        out << "1,0,0\n";
        out << "2,5,6\n";
    }
    const Dataset ds = read_features(path, FeatureFormat::Csv);
    ASSERT_EQ(ds.n(), 4u);
    ASSERT_EQ(ds.dim(), 2u);
    EXPECT_EQ(ds.labels[0], 3u);
    EXPECT_FLOAT_EQ(ds.features(0, 0), 0.5f);
    EXPECT_FLOAT_EQ(ds.features(0, 1), -1.25f);
    EXPECT_EQ(ds.num_classes, 4u);
}

TEST(Csv, RoundTripThroughWriter) {
    testutil::TempDir dir;
    const Dataset ds = generate_blobs(small_spec());
    const auto path = dir / "ds.csv";
    write_features(ds, path, FeatureFormat::Csv);
    const Dataset back = read_features(path, FeatureFormat::Csv);
    ASSERT_EQ(back.n(), ds.n());
    ASSERT_EQ(back.dim(), ds.dim());
    EXPECT_EQ(back.labels, ds.labels);
    EXPECT_TRUE(back.features == ds.features); // %.9g preserves every float exactly
}

TEST(Csv, RejectsMalformedInput) {
    testutil::TempDir dir;
    const auto non_numeric = dir / "non_numeric.csv";
    {
        std::ofstream out(non_numeric);
        out << "0,1.5,oops\n";
    }
    EXPECT_THROW(read_features(non_numeric, FeatureFormat::Csv), IoError);

    const auto negative_label = dir / "neg.csv";
    {
        std::ofstream out(negative_label);
        out << "-1,1.5,2.5\n";
    }
    EXPECT_THROW(read_features(negative_label, FeatureFormat::Csv), IoError);

    const auto ragged = dir / "ragged.csv";
    {
        std::ofstream out(ragged);
        out << "0,1,2\n";
        out << "1,1\n";
    }
    EXPECT_THROW(read_features(ragged, FeatureFormat::Csv), IoError);
}

TEST(Ingestion, RejectsLabelGaps) {
    testutil::TempDir dir;
    Dataset ds;
    ds.features = MatrixF(2, 1, 0.0f);
    ds.labels = {0, 2}; // class 1 missing
    ds.num_classes = 3;
    const auto path = dir / "gaps.feat";
    write_features(ds, path, FeatureFormat::FeatBin);
    EXPECT_THROW(read_features(path, FeatureFormat::FeatBin), IoError);
}

namespace {

PackedCodes random_codes(std::size_t n, std::uint32_t nbits, std::uint64_t seed) {
    Rng rng(seed);
    PackedCodes codes;
    codes.n = n;
    codes.nbits = nbits;
    codes.words.resize(n * codes.words_per_row());
    const std::uint32_t tail = nbits % 64;
    for (std::size_t i = 0; i < codes.words.size(); ++i) {
        std::uint64_t word = rng.next_u64();
        if (tail != 0 && (i + 1) % codes.words_per_row() == 0)
            word &= (1ULL << tail) - 1;
        codes.words[i] = word;
    }
    return codes;
}

} // namespace

TEST(Bcod, RoundTripIsBitExact) {
    testutil::TempDir dir;
    for (std::uint32_t nbits : {8u, 48u, 64u, 100u}) {
        const PackedCodes codes = random_codes(17, nbits, nbits);
        std::vector<std::uint32_t> labels(codes.n);
        for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = std::uint32_t(i % 3);
        const auto path = dir / ("codes_" + std::to_string(nbits) + ".bcod");
        write_codes(codes, labels, path);
        const auto [back, back_labels] = read_codes(path);
        EXPECT_EQ(back, codes);
        EXPECT_EQ(back_labels, labels);
    }
}

TEST(Bcod, FortyEightBitsUseOneWordPerRow) {
    const PackedCodes codes = random_codes(5, 48, 11);
    EXPECT_EQ(codes.words_per_row(), 1u);
    for (std::size_t i = 0; i < codes.n; ++i)
        EXPECT_EQ(codes.row(i)[0] >> 48, 0u) << "unused high bits must stay zero";
}

TEST(Bcod, ReadErrors) {
    testutil::TempDir dir;
    const auto bad_magic = dir / "bad.bcod";
    testutil::write_bytes(bad_magic, {'B', 'A', 'D', '!', 1, 0, 0, 0});
    EXPECT_THROW(read_codes(bad_magic), IoError);

    const PackedCodes codes = random_codes(9, 64, 3);
    std::vector<std::uint32_t> labels(9, 0);
    const auto good = dir / "good.bcod";
    write_codes(codes, labels, good);
    auto bytes = testutil::read_bytes(good);
    bytes.resize(bytes.size() - 2);
    const auto truncated = dir / "truncated.bcod";
    testutil::write_bytes(truncated, bytes);
    EXPECT_THROW(read_codes(truncated), IoError);

    // Junk in the unused tail bits violates the packed-code invariant.
    PackedCodes dirty = random_codes(2, 48, 4);
    dirty.words[0] |= 1ULL << 60;
    const auto dirty_path = dir / "dirty.bcod";
    EXPECT_THROW(write_codes(dirty, {0, 0}, dirty_path), std::invalid_argument);
}

TEST(SniffFile, IdentifiesFormats) {
    testutil::TempDir dir;
    const Dataset ds = generate_blobs(small_spec());
    const auto feat = dir / "x.feat";
    write_features(ds, feat, FeatureFormat::FeatBin);
    EXPECT_EQ(sniff_file(feat), FileKind::FeatBin);

    const auto csv = dir / "x.csv";
    write_features(ds, csv, FeatureFormat::Csv);
    EXPECT_EQ(sniff_file(csv), FileKind::Csv);

    const PackedCodes codes = random_codes(3, 64, 5);
    const auto bcod = dir / "x.bcod";
    write_codes(codes, {0, 1, 2}, bcod);
    EXPECT_EQ(sniff_file(bcod), FileKind::Bcod);
}
