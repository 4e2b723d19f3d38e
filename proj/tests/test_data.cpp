#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "fnr/data.hpp"

using fnr::Dataset;
using fnr::EmbeddingRecord;
using fnr::Split;

namespace {

namespace fs = std::filesystem;

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("fnr_test_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

Dataset tiny_dataset(std::size_t n = 10, std::size_t d = 4) {
  Dataset ds;
  ds.meta.name = "tiny";
  ds.meta.d_in = d;
  std::mt19937_64 rng(1);
  for (std::size_t i = 0; i < n; ++i) {
    EmbeddingRecord r;
    r.id = "rec-" + std::to_string(i);
    r.split = i % 3 == 0 ? Split::kTest : Split::kTrain;
    r.label = static_cast<int>(i % 2);
    for (std::size_t j = 0; j < d; ++j) {
      r.text_embedding.push_back(float((rng() >> 11) * 0x1.0p-53) - 0.5f);
      r.image_embedding.push_back(float((rng() >> 11) * 0x1.0p-53) - 0.5f);
    }
    ds.records.push_back(std::move(r));
    ds.meta.counts[ds.records.back().split == Split::kTrain ? 0 : 1]
                  [ds.records.back().label]++;
  }
  return ds;
}

bool records_equal(const std::vector<EmbeddingRecord>& a,
                   const std::vector<EmbeddingRecord>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].id != b[i].id || a[i].split != b[i].split ||
        a[i].label != b[i].label ||
        a[i].text_embedding != b[i].text_embedding ||
        a[i].image_embedding != b[i].image_embedding)
      return false;
  return true;
}

}  // namespace

TEST_CASE("save/load round trip is identity on records") {
  TempDir tmp;
  auto ds = tiny_dataset();
  for (const char* format : {"jsonl", "bin"}) {
    auto manifest = fnr::save_dataset(tmp.path / format, ds, format);
    auto loaded = fnr::load_dataset(manifest);
    CHECK(records_equal(loaded.records, ds.records));
    CHECK(loaded.meta.d_in == ds.meta.d_in);
    CHECK(loaded.meta.total() == ds.records.size());
  }
}

TEST_CASE("load rejects bad records") {
  TempDir tmp;
  SECTION("NaN embedding entry is rejected with the record id") {
    auto ds = tiny_dataset();
    ds.records[3].text_embedding[1] = std::nanf("");
    fnr::save_records_binary(tmp.path / "records.fnrb", ds.records,
                             ds.meta.d_in);
    std::ofstream os(tmp.path / "manifest.json");
    os << R"({"name":"bad","d_in":4,"format":"bin","records":"records.fnrb"})";
    os.close();
    CHECK_THROWS_WITH(fnr::load_dataset(tmp.path / "manifest.json"),
                      Catch::Matchers::ContainsSubstring("rec-3"));
  }
  SECTION("missing modality is rejected") {
    std::ofstream os(tmp.path / "records.jsonl");
    os << R"({"id":"a","split":"train","label":0,"text":[1,2]})" << "\n";
    os.close();
    std::ofstream m(tmp.path / "manifest.json");
    m << R"({"name":"x","d_in":2,"format":"jsonl","records":"records.jsonl"})";
    m.close();
    CHECK_THROWS_WITH(fnr::load_dataset(tmp.path / "manifest.json"),
                      Catch::Matchers::ContainsSubstring("missing a modality"));
  }
  SECTION("malformed jsonl line reports its line number") {
    std::ofstream os(tmp.path / "records.jsonl");
    os << R"({"id":"a","split":"train","label":0,"text":[1],"image":[1]})"
       << "\n";
    os << "not json\n";
    os.close();
    std::ofstream m(tmp.path / "manifest.json");
    m << R"({"name":"x","d_in":1,"format":"jsonl","records":"records.jsonl"})";
    m.close();
    CHECK_THROWS_WITH(fnr::load_dataset(tmp.path / "manifest.json"),
                      Catch::Matchers::ContainsSubstring(":2"));
  }
  SECTION("inconsistent d_in is a data error") {
    auto ds = tiny_dataset(4, 3);
    ds.meta.d_in = 5;
    auto manifest = fnr::save_dataset(tmp.path / "wrong", ds, "jsonl");
    CHECK_THROWS_AS(fnr::load_dataset(manifest), fnr::DataError);
  }
  SECTION("duplicate id is a data error") {
    auto ds = tiny_dataset(4, 2);
    ds.records[2].id = ds.records[0].id;
    auto manifest = fnr::save_dataset(tmp.path / "dup", ds, "jsonl");
    CHECK_THROWS_WITH(fnr::load_dataset(manifest),
                      Catch::Matchers::ContainsSubstring("duplicate"));
  }
}

TEST_CASE("dataset-shaped counts match the published distribution table") {
  // Twitter-shaped manifest: train fake 6649 / real 4599, test fake 545 /
  // real 444; all data 12237.
  TempDir tmp;
  Dataset ds;
  ds.meta.name = "twitter-shaped";
  ds.meta.d_in = 2;
  auto add = [&](Split split, int label, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
      EmbeddingRecord r;
      r.id = split_name(split) + std::to_string(label) + "-" +
             std::to_string(i);
      r.split = split;
      r.label = label;
      r.text_embedding = {0.f, 1.f};
      r.image_embedding = {1.f, 0.f};
      ds.records.push_back(std::move(r));
    }
  };
  add(Split::kTrain, 1, 6649);
  add(Split::kTrain, 0, 4599);
  add(Split::kTest, 1, 545);
  add(Split::kTest, 0, 444);
  auto manifest = fnr::save_dataset(tmp.path / "tw", ds, "bin");
  auto loaded = fnr::load_dataset(manifest);
  CHECK(loaded.meta.counts[0][1] == 6649);
  CHECK(loaded.meta.counts[0][0] == 4599);
  CHECK(loaded.meta.counts[1][1] == 545);
  CHECK(loaded.meta.counts[1][0] == 444);
  CHECK(loaded.meta.total() == 12237);
}

TEST_CASE("compute_alpha") {
  auto labels = [](std::size_t real, std::size_t fake) {
    std::vector<int> v(real, 0);
    v.insert(v.end(), fake, 1);
    return v;
  };
  SECTION("Twitter-shaped ratio") {
    auto cw = fnr::compute_alpha(labels(4599, 6649));
    CHECK_THAT(cw.alpha, Catch::Matchers::WithinAbs(1.4458, 1e-4));
    CHECK(cw.minority == 0);
    CHECK(cw.w[0] == cw.alpha);
    CHECK(cw.w[1] == 1.0);
  }
  SECTION("Weibo-shaped ratio") {
    auto cw = fnr::compute_alpha(labels(3758, 3748));
    CHECK_THAT(cw.alpha, Catch::Matchers::WithinAbs(1.0027, 1e-4));
    CHECK(cw.minority == 1);
  }
  SECTION("balanced gives alpha 1") {
    auto cw = fnr::compute_alpha(labels(50, 50));
    CHECK(cw.alpha == 1.0);
    CHECK(cw.minority == -1);
  }
  SECTION("ratio is symmetric under label swap") {
    auto a = fnr::compute_alpha(labels(120, 80));
    auto b = fnr::compute_alpha(labels(80, 120));
    CHECK(a.alpha == b.alpha);
    CHECK(a.alpha >= 1.0);
  }
  SECTION("absent class is a data error") {
    CHECK_THROWS_AS(fnr::compute_alpha(labels(10, 0)), fnr::DataError);
  }
}

TEST_CASE("split_validation") {
  auto ds = [&] {
    Dataset d;
    d.meta.d_in = 2;
    for (std::size_t i = 0; i < 100; ++i) {
      EmbeddingRecord r;
      r.id = std::to_string(i);
      r.label = static_cast<int>(i % 2);
      r.text_embedding = {0.f, 0.f};
      r.image_embedding = {0.f, 0.f};
      d.records.push_back(std::move(r));
    }
    return d;
  }();
  SECTION("stratified 10% of 50/50 gives 5 of each class") {
    auto [fit, val] = fnr::split_validation(ds.records, 0.1, 7);
    CHECK(val.size() == 10);
    std::size_t val_real = 0;
    for (auto& r : val) val_real += r.label == 0;
    CHECK(val_real == 5);
  }
  SECTION("deterministic and a partition") {
    auto [fit1, val1] = fnr::split_validation(ds.records, 0.2, 9);
    auto [fit2, val2] = fnr::split_validation(ds.records, 0.2, 9);
    CHECK(records_equal(fit1, fit2));
    CHECK(records_equal(val1, val2));
    std::set<std::string> ids;
    for (auto& r : fit1) ids.insert(r.id);
    for (auto& r : val1) ids.insert(r.id);
    CHECK(ids.size() == 100);
    CHECK(fit1.size() + val1.size() == 100);
  }
  SECTION("fraction bounds") {
    CHECK_THROWS_AS(fnr::split_validation(ds.records, 0.5, 1),
                    fnr::ContractError);
    CHECK_THROWS_AS(fnr::split_validation(ds.records, 0.0, 1),
                    fnr::ContractError);
  }
}

TEST_CASE("make_batches") {
  auto ds = tiny_dataset(10, 3);
  SECTION("10 records at b=4 give 4,4,2") {
    auto batches = fnr::make_batches<double>(ds.records, 4, 0, false);
    REQUIRE(batches.size() == 3);
    CHECK(batches[0].labels.size() == 4);
    CHECK(batches[1].labels.size() == 4);
    CHECK(batches[2].labels.size() == 2);
  }
  SECTION("9 records at b=4 merge the singleton into 4,5") {
    auto nine = ds;
    nine.records.pop_back();
    auto batches = fnr::make_batches<double>(nine.records, 4, 0, false);
    REQUIRE(batches.size() == 2);
    CHECK(batches[0].labels.size() == 4);
    CHECK(batches[1].labels.size() == 5);
  }
  SECTION("shuffle off preserves input order") {
    auto batches = fnr::make_batches<double>(ds.records, 4, 123, false);
    std::size_t idx = 0;
    for (auto& b : batches)
      for (std::size_t i = 0; i < b.labels.size(); ++i, ++idx) {
        CHECK(b.labels[i] == ds.records[idx].label);
        CHECK(b.text.at(i, 0) ==
              double(ds.records[idx].text_embedding[0]));
      }
  }
  SECTION("shuffled batches recover the record multiset") {
    auto batches = fnr::make_batches<double>(ds.records, 3, 55, true);
    std::multiset<double> seen, expect;
    for (auto& r : ds.records) expect.insert(double(r.text_embedding[0]));
    std::size_t total_rows = 0;
    for (auto& b : batches) {
      CHECK(b.text.rows == b.labels.size());
      CHECK(b.image.rows == b.labels.size());
      total_rows += b.labels.size();
      for (std::size_t i = 0; i < b.labels.size(); ++i)
        seen.insert(b.text.at(i, 0));
    }
    CHECK(total_rows == ds.records.size());
    CHECK(seen == expect);
  }
  SECTION("b < 2 is a contract error") {
    CHECK_THROWS_AS(fnr::make_batches<double>(ds.records, 1, 0, false),
                    fnr::ContractError);
  }
}

TEST_CASE("gen_synthetic_xor") {
  SECTION("single-modality sign carries no label information") {
    auto ds = fnr::gen_synthetic_xor(10000, 4, 3);
    double n = double(ds.records.size());
    double mean_s = 0, mean_y = 0;
    for (auto& r : ds.records) {
      mean_s += r.text_embedding[0] > 0 ? 1 : -1;
      mean_y += r.label;
    }
    mean_s /= n;
    mean_y /= n;
    double cov = 0, var_s = 0, var_y = 0;
    for (auto& r : ds.records) {
      double s = (r.text_embedding[0] > 0 ? 1 : -1) - mean_s;
      double y = r.label - mean_y;
      cov += s * y;
      var_s += s * s;
      var_y += y * y;
    }
    double corr = cov / std::sqrt(var_s * var_y);
    CHECK(std::abs(corr) < 0.05);
  }
  SECTION("labels are balanced up to sampling noise") {
    auto ds = fnr::gen_synthetic_xor(10000, 4, 5);
    std::size_t fake = 0;
    for (auto& r : ds.records) fake += r.label;
    CHECK(std::abs(double(fake) / 10000.0 - 0.5) < 0.03);
  }
  SECTION("deterministic under a fixed seed") {
    auto a = fnr::gen_synthetic_xor(64, 4, 11);
    auto b = fnr::gen_synthetic_xor(64, 4, 11);
    CHECK(records_equal(a.records, b.records));
  }
  SECTION("preconditions") {
    CHECK_THROWS_AS(fnr::gen_synthetic_xor(7, 4, 1), fnr::ContractError);
    CHECK_THROWS_AS(fnr::gen_synthetic_xor(16, 1, 1), fnr::ContractError);
  }
}

TEST_CASE("gen_synthetic_clusters") {
  auto centroid_accuracy = [](const Dataset& ds) {
    // nearest-centroid oracle on the concatenated modalities
    std::size_t d = ds.meta.d_in;
    std::vector<double> c0(2 * d, 0.0), c1(2 * d, 0.0);
    std::size_t n0 = 0, n1 = 0;
    for (auto& r : ds.records) {
      auto& c = r.label == 0 ? c0 : c1;
      (r.label == 0 ? n0 : n1)++;
      for (std::size_t j = 0; j < d; ++j) {
        c[j] += r.text_embedding[j];
        c[d + j] += r.image_embedding[j];
      }
    }
    for (auto& v : c0) v /= double(n0);
    for (auto& v : c1) v /= double(n1);
    std::size_t correct = 0;
    for (auto& r : ds.records) {
      double d0 = 0, d1 = 0;
      for (std::size_t j = 0; j < d; ++j) {
        double xt = r.text_embedding[j], xi = r.image_embedding[j];
        d0 += (xt - c0[j]) * (xt - c0[j]) + (xi - c0[d + j]) * (xi - c0[d + j]);
        d1 += (xt - c1[j]) * (xt - c1[j]) + (xi - c1[d + j]) * (xi - c1[d + j]);
      }
      correct += (d1 < d0 ? 1 : 0) == r.label;
    }
    return double(correct) / double(ds.records.size());
  };
  SECTION("6-sigma separation is nearest-centroid separable") {
    CHECK(centroid_accuracy(fnr::gen_synthetic_clusters(2000, 8, 2, 6.0)) >=
          0.99);
  }
  SECTION("zero separation is chance level") {
    double acc = centroid_accuracy(fnr::gen_synthetic_clusters(2000, 8, 2, 0.0));
    CHECK(acc > 0.4);
    CHECK(acc < 0.6);
  }
  SECTION("deterministic under a fixed seed") {
    auto a = fnr::gen_synthetic_clusters(64, 4, 11, 3.0);
    auto b = fnr::gen_synthetic_clusters(64, 4, 11, 3.0);
    CHECK(records_equal(a.records, b.records));
  }
}
