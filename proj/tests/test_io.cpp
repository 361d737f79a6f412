#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "normalnorm/checkpoint.hpp"
#include "normalnorm/dataio.hpp"
#include "normalnorm/errors.hpp"
#include "normalnorm/mlp.hpp"
#include "normalnorm/noise_rng.hpp"

using namespace normalnorm;

namespace {

std::string temp_dir(const std::string& tag) {
    const auto dir = std::filesystem::temp_directory_path() / ("normalnorm_test_" + tag);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir.string();
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in);
    return std::string((std::istreambuf_iterator<char>(in)),
                       std::istreambuf_iterator<char>());
}

} // namespace

TEST_CASE("csv round trip preserves values and schema") {
    const std::string dir = temp_dir("csv");
    CsvTable t;
    t.names = {"a", "b", "label"};
    t.columns = {{1.5, -2.25, 1e-17}, {3.0, 4.0, 5.0}, {0, 1, 1}};
    write_csv(dir + "/x.csv", t);
    const CsvTable u = read_csv(dir + "/x.csv");
    CHECK(u.names == t.names);
    REQUIRE(u.columns.size() == t.columns.size());
    for (std::size_t c = 0; c < t.columns.size(); ++c) {
        REQUIRE(u.columns[c].size() == t.columns[c].size());
        for (std::size_t r = 0; r < t.columns[c].size(); ++r) {
            CHECK(u.columns[c][r] == t.columns[c][r]); // %.17g is lossless
        }
    }

    const Dataset ds = dataset_from_csv(u);
    CHECK(ds.n() == 3);
    CHECK(ds.dim() == 2);
    CHECK(ds.num_classes == 2);
    CHECK(ds.labels == std::vector<int>{0, 1, 1});
    CHECK(ds.X.at(1, 0) == -2.25);
}

TEST_CASE("csv error paths") {
    const std::string dir = temp_dir("csverr");
    CHECK_THROWS_AS(read_csv(dir + "/missing.csv"), DomainError);
    {
        std::ofstream out(dir + "/bad.csv");
        out << "a,b\n1,2\n3,oops\n";
    }
    CHECK_THROWS_AS(read_csv(dir + "/bad.csv"), DomainError);
    {
        std::ofstream out(dir + "/ragged.csv");
        out << "a,b\n1\n";
    }
    CHECK_THROWS_AS(read_csv(dir + "/ragged.csv"), DomainError);
    {
        std::ofstream out(dir + "/nolabel.csv");
        out << "a,b\n1,2\n";
    }
    CHECK_THROWS_AS(dataset_from_csv(read_csv(dir + "/nolabel.csv")), DomainError);
}

TEST_CASE("idx round trip with the big-endian magics") {
    const std::string dir = temp_dir("idx");
    std::vector<std::uint8_t> pixels = {0, 128, 255, 64, 32, 16, 8, 4,
                                        2,  1,   0,  255};
    write_idx_images(dir + "/img.idx", pixels, 3, 2, 2);
    write_idx_labels(dir + "/lab.idx", {2, 0, 1});

    // magic bytes on disk
    const std::string raw = read_file(dir + "/img.idx");
    CHECK(static_cast<unsigned char>(raw[2]) == 0x08);
    CHECK(static_cast<unsigned char>(raw[3]) == 0x03);
    const std::string rawl = read_file(dir + "/lab.idx");
    CHECK(static_cast<unsigned char>(rawl[2]) == 0x08);
    CHECK(static_cast<unsigned char>(rawl[3]) == 0x01);

    const Dataset ds = load_idx_dataset(dir + "/img.idx", dir + "/lab.idx");
    CHECK(ds.n() == 3);
    CHECK(ds.dim() == 4);
    CHECK(ds.num_classes == 3);
    CHECK(ds.X.at(0, 1) == doctest::Approx(128.0 / 255.0));
    CHECK(ds.labels == std::vector<int>{2, 0, 1});

    CHECK_THROWS_AS(read_idx_images(dir + "/lab.idx"), DomainError);
    CHECK_THROWS_AS(read_idx_labels(dir + "/img.idx"), DomainError);
}

TEST_CASE("checkpoint round trip restores the model") {
    const std::string dir = temp_dir("ckpt");
    auto spec = MlpSpec::uniform({6, 8, 4}, NormKind::normality);
    spec.grouping = {GroupingMode::batch, 32};
    spec.xi = 0.2;
    spec.alpha = 0.75;
    Mlp model = build_mlp(spec, 41);

    // give the running stats non-default values by training a little
    const Dataset data = synth_dataset(DataKind::skewed_features, 256, 3);
    Dataset trimmed = data;
    trimmed.X = Tensor({256, 6});
    for (std::int64_t r = 0; r < 256; ++r)
        for (std::int64_t c = 0; c < 6; ++c) trimmed.X.at(r, c) = data.X.at(r, c);
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.seed = 4;
    train(model, trimmed, trimmed, cfg);

    save_checkpoint(model, dir);
    const Mlp loaded = load_checkpoint(dir);

    CHECK(loaded.spec.widths == model.spec.widths);
    CHECK(loaded.spec.alpha == model.spec.alpha);
    CHECK(loaded.spec.xi == model.spec.xi);
    REQUIRE(loaded.params.size() == model.params.size());
    for (std::size_t p = 0; p < model.params.size(); ++p) {
        CHECK(loaded.params[p].name == model.params[p].name);
        for (std::int64_t i = 0; i < model.params[p].value.numel(); ++i) {
            // float32 quantization on disk
            const float want = static_cast<float>(model.params[p].value[i]);
            CHECK(static_cast<float>(loaded.params[p].value[i]) == want);
        }
    }
    const NormLayer* ln = loaded.norms[0].get();
    const NormLayer* mn = model.norms[0].get();
    REQUIRE(ln != nullptr);
    CHECK(ln->state().num_batches_tracked == mn->state().num_batches_tracked);
    for (std::size_t c = 0; c < ln->state().running_mu.size(); ++c) {
        CHECK(static_cast<float>(ln->state().running_mu[c]) ==
              static_cast<float>(mn->state().running_mu[c]));
        CHECK(static_cast<float>(ln->state().running_lambda[c]) ==
              static_cast<float>(mn->state().running_lambda[c]));
    }

    // eval outputs agree to float precision
    Tensor X({16, 6});
    NoiseStream s{9, 0, 0};
    for (std::int64_t i = 0; i < X.numel(); ++i) {
        X[i] = gaussian_at(s, static_cast<std::uint64_t>(i));
    }
    const Tensor a = eval_logits(model, X);
    const Tensor b = eval_logits(loaded, X);
    for (std::int64_t i = 0; i < a.numel(); ++i) {
        CHECK(std::fabs(a[i] - b[i]) <= 1e-4 * std::max(1.0, std::fabs(a[i])));
    }
}

TEST_CASE("checkpoint saves are byte identical for identical models") {
    const std::string d1 = temp_dir("ckpt_a");
    const std::string d2 = temp_dir("ckpt_b");
    auto spec = MlpSpec::uniform({4, 6, 2}, NormKind::conventional);
    const Mlp m1 = build_mlp(spec, 77);
    const Mlp m2 = build_mlp(spec, 77);
    save_checkpoint(m1, d1);
    save_checkpoint(m2, d2);
    CHECK(read_file(d1 + "/manifest.json") == read_file(d2 + "/manifest.json"));
    CHECK(read_file(d1 + "/weights.bin") == read_file(d2 + "/weights.bin"));
}

TEST_CASE("loading a missing checkpoint fails cleanly") {
    CHECK_THROWS_AS(load_checkpoint("/nonexistent/checkpoint/dir"), DomainError);
}
