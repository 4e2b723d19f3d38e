#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "fnr/errors.hpp"
#include "fnr/model.hpp"
#include "fnr/tensor.hpp"

namespace fnr {

enum class Split { kTrain, kTest };

inline std::string split_name(Split s) {
  return s == Split::kTrain ? "train" : "test";
}

/// One news item with both encoders pre-applied. Embeddings are stored as
/// 32-bit floats, matching the binary record layout.
struct EmbeddingRecord {
  std::string id;
  Split split = Split::kTrain;
  int label = 0;  // 0=real, 1=fake
  std::vector<float> text_embedding;
  std::vector<float> image_embedding;
};

struct DatasetMeta {
  std::string name;
  std::size_t d_in = 0;
  // counts[split][label]
  std::size_t counts[2][2] = {{0, 0}, {0, 0}};
  // declared source dimensions, documentation only
  std::size_t text_len = 0;
  std::size_t image_width = 0, image_height = 0, image_depth = 0;

  std::size_t total() const {
    return counts[0][0] + counts[0][1] + counts[1][0] + counts[1][1];
  }
};

struct Dataset {
  std::vector<EmbeddingRecord> records;
  DatasetMeta meta;
};

namespace detail {

inline void validate_record(const EmbeddingRecord& r, std::size_t d_in,
                            const std::string& where) {
  if (r.label != 0 && r.label != 1)
    throw DataError(where + ": record '" + r.id + "' has label " +
                    std::to_string(r.label) + ", expected 0 or 1");
  if (r.text_embedding.empty() || r.image_embedding.empty())
    throw DataError(where + ": record '" + r.id + "' is missing a modality");
  if (r.text_embedding.size() != d_in || r.image_embedding.size() != d_in)
    throw DataError(where + ": record '" + r.id + "' embedding length " +
                    std::to_string(r.text_embedding.size()) + "/" +
                    std::to_string(r.image_embedding.size()) +
                    " inconsistent with d_in " + std::to_string(d_in));
  for (float v : r.text_embedding)
    if (!std::isfinite(v))
      throw DataError(where + ": record '" + r.id +
                      "' has a non-finite text embedding entry");
  for (float v : r.image_embedding)
    if (!std::isfinite(v))
      throw DataError(where + ": record '" + r.id +
                      "' has a non-finite image embedding entry");
}

template <typename POD>
void write_pod(std::ostream& os, POD v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename POD>
POD read_pod(std::istream& is) {
  POD v{};
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!is) throw DataError("unexpected end of binary record file");
  return v;
}

}  // namespace detail

constexpr char kBinaryMagic[4] = {'F', 'N', 'R', 'B'};
constexpr std::uint32_t kBinaryVersion = 1;

/// Line-delimited JSON record file; one object per line.
inline void save_records_jsonl(const std::filesystem::path& path,
                               const std::vector<EmbeddingRecord>& records) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write " + path.string());
  for (const auto& r : records) {
    nlohmann::json j;
    j["id"] = r.id;
    j["split"] = split_name(r.split);
    j["label"] = r.label;
    j["text"] = r.text_embedding;
    j["image"] = r.image_embedding;
    os << j.dump() << "\n";
  }
}

/// Dense binary layout: magic "FNRB", u32 version, u32 d_in, u64 count, then
/// per record: u32 id length, id bytes, u8 split, u8 label, d_in little-endian
/// f32 text values, d_in f32 image values.
inline void save_records_binary(const std::filesystem::path& path,
                                const std::vector<EmbeddingRecord>& records,
                                std::size_t d_in) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write " + path.string());
  os.write(kBinaryMagic, 4);
  detail::write_pod<std::uint32_t>(os, kBinaryVersion);
  detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(d_in));
  detail::write_pod<std::uint64_t>(os, records.size());
  for (const auto& r : records) {
    detail::write_pod<std::uint32_t>(os,
                                     static_cast<std::uint32_t>(r.id.size()));
    os.write(r.id.data(), static_cast<std::streamsize>(r.id.size()));
    detail::write_pod<std::uint8_t>(os, r.split == Split::kTrain ? 0 : 1);
    detail::write_pod<std::uint8_t>(os, static_cast<std::uint8_t>(r.label));
    os.write(reinterpret_cast<const char*>(r.text_embedding.data()),
             static_cast<std::streamsize>(d_in * sizeof(float)));
    os.write(reinterpret_cast<const char*>(r.image_embedding.data()),
             static_cast<std::streamsize>(d_in * sizeof(float)));
  }
}

inline std::vector<EmbeddingRecord> load_records_jsonl(
    const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot read " + path.string());
  std::vector<EmbeddingRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
      EmbeddingRecord r;
      r.id = j.at("id").get<std::string>();
      std::string sp = j.at("split").get<std::string>();
      if (sp != "train" && sp != "test")
        throw DataError("split '" + sp + "' not in {train,test}");
      r.split = sp == "train" ? Split::kTrain : Split::kTest;
      r.label = j.at("label").get<int>();
      if (j.contains("text")) r.text_embedding = j["text"].get<std::vector<float>>();
      if (j.contains("image"))
        r.image_embedding = j["image"].get<std::vector<float>>();
      out.push_back(std::move(r));
    } catch (const DataError&) {
      throw;
    } catch (const std::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) +
                      ": malformed record: " + e.what());
    }
  }
  return out;
}

inline std::vector<EmbeddingRecord> load_records_binary(
    const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot read " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kBinaryMagic, 4) != 0)
    throw DataError(path.string() + ": bad magic, not an FNRB record file");
  auto version = detail::read_pod<std::uint32_t>(is);
  if (version != kBinaryVersion)
    throw DataError(path.string() + ": unsupported record file version " +
                    std::to_string(version));
  auto d_in = detail::read_pod<std::uint32_t>(is);
  auto count = detail::read_pod<std::uint64_t>(is);
  std::vector<EmbeddingRecord> out;
  out.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    EmbeddingRecord r;
    auto id_len = detail::read_pod<std::uint32_t>(is);
    r.id.resize(id_len);
    is.read(r.id.data(), id_len);
    auto split = detail::read_pod<std::uint8_t>(is);
    r.split = split == 0 ? Split::kTrain : Split::kTest;
    r.label = detail::read_pod<std::uint8_t>(is);
    r.text_embedding.resize(d_in);
    is.read(reinterpret_cast<char*>(r.text_embedding.data()),
            static_cast<std::streamsize>(d_in * sizeof(float)));
    r.image_embedding.resize(d_in);
    is.read(reinterpret_cast<char*>(r.image_embedding.data()),
            static_cast<std::streamsize>(d_in * sizeof(float)));
    if (!is)
      throw DataError(path.string() + ": truncated at record " +
                      std::to_string(i));
    out.push_back(std::move(r));
  }
  return out;
}

/// Loads a dataset given its manifest path, validates every record, and
/// recomputes the per-(split, label) counts.
inline Dataset load_dataset(const std::filesystem::path& manifest_path) {
  std::ifstream is(manifest_path);
  if (!is) throw DataError("cannot read manifest " + manifest_path.string());
  nlohmann::json j;
  try {
    is >> j;
  } catch (const std::exception& e) {
    throw DataError(manifest_path.string() + ": malformed manifest: " +
                    e.what());
  }
  Dataset ds;
  try {
    ds.meta.name = j.at("name").get<std::string>();
    ds.meta.d_in = j.at("d_in").get<std::size_t>();
    ds.meta.text_len = j.value("text_len", 0);
    ds.meta.image_width = j.value("image_width", 0);
    ds.meta.image_height = j.value("image_height", 0);
    ds.meta.image_depth = j.value("image_depth", 0);
    std::string format = j.at("format").get<std::string>();
    std::filesystem::path records_path =
        manifest_path.parent_path() / j.at("records").get<std::string>();
    if (format == "jsonl")
      ds.records = load_records_jsonl(records_path);
    else if (format == "bin")
      ds.records = load_records_binary(records_path);
    else
      throw DataError("unknown record format '" + format + "'");
  } catch (const DataError&) {
    throw;
  } catch (const std::exception& e) {
    throw DataError(manifest_path.string() + ": " + e.what());
  }
  std::set<std::string> ids;
  for (const auto& r : ds.records) {
    detail::validate_record(r, ds.meta.d_in, ds.meta.name);
    if (!ids.insert(r.id).second)
      throw DataError(ds.meta.name + ": duplicate record id '" + r.id + "'");
    ds.meta.counts[r.split == Split::kTrain ? 0 : 1][r.label]++;
  }
  return ds;
}

/// Writes manifest + record file into `dir`; returns the manifest path.
inline std::filesystem::path save_dataset(const std::filesystem::path& dir,
                                          const Dataset& ds,
                                          const std::string& format = "bin") {
  std::filesystem::create_directories(dir);
  std::string records_name =
      "records." + std::string(format == "bin" ? "fnrb" : "jsonl");
  if (format == "bin")
    save_records_binary(dir / records_name, ds.records, ds.meta.d_in);
  else if (format == "jsonl")
    save_records_jsonl(dir / records_name, ds.records);
  else
    throw DataError("unknown record format '" + format + "'");
  nlohmann::json j;
  j["name"] = ds.meta.name;
  j["d_in"] = ds.meta.d_in;
  j["format"] = format;
  j["records"] = records_name;
  if (ds.meta.text_len) j["text_len"] = ds.meta.text_len;
  if (ds.meta.image_width) {
    j["image_width"] = ds.meta.image_width;
    j["image_height"] = ds.meta.image_height;
    j["image_depth"] = ds.meta.image_depth;
  }
  auto manifest = dir / "manifest.json";
  std::ofstream os(manifest);
  os << j.dump(2) << "\n";
  return manifest;
}

/// alpha = majority count / minority count over the training labels, with the
/// minority class identified for weighting. Requires both classes present.
template <typename T = double>
ClassWeights<T> compute_alpha(const std::vector<int>& train_labels) {
  std::size_t n0 = 0, n1 = 0;
  for (int y : train_labels) (y == 0 ? n0 : n1)++;
  if (n0 == 0 || n1 == 0)
    throw DataError("compute_alpha: a class is absent from the train split (" +
                    std::to_string(n0) + " real, " + std::to_string(n1) +
                    " fake)");
  ClassWeights<T> cw;
  cw.alpha = T(std::max(n0, n1)) / T(std::min(n0, n1));
  if (n0 != n1) {
    cw.minority = n0 < n1 ? 0 : 1;
    cw.w[cw.minority] = cw.alpha;
  }
  return cw;
}

namespace detail {

// Portable Fisher-Yates; std::shuffle's draw sequence is not pinned by the
// standard.
template <typename V>
void seeded_shuffle(V& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i)
    std::swap(v[i - 1], v[rng() % i]);
}

template <typename T>
inline T normal01(std::mt19937_64& rng) {
  // Box-Muller; avoids the unpinned std::normal_distribution.
  double u1 = ((rng() >> 11) + 0.5) * 0x1.0p-53;
  double u2 = (rng() >> 11) * 0x1.0p-53;
  return T(std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2));
}

}  // namespace detail

/// Stratified validation split: per label, a seeded shuffle then the first
/// round(frac * count) records go to val. Deterministic, disjoint, exhaustive.
inline std::pair<std::vector<EmbeddingRecord>, std::vector<EmbeddingRecord>>
split_validation(const std::vector<EmbeddingRecord>& train, double frac,
                 std::uint64_t seed) {
  if (!(frac > 0.0 && frac < 0.5))
    throw ContractError("split_validation: frac must be in (0, 0.5)");
  std::vector<std::size_t> by_label[2];
  for (std::size_t i = 0; i < train.size(); ++i)
    by_label[train[i].label].push_back(i);
  for (int y : {0, 1})
    if (by_label[y].size() < 2)
      throw DataError("split_validation: class " + std::to_string(y) +
                      " has fewer than 2 records");
  std::mt19937_64 rng(seed);
  std::vector<bool> in_val(train.size(), false);
  for (int y : {0, 1}) {
    auto& idx = by_label[y];
    detail::seeded_shuffle(idx, rng);
    auto take = static_cast<std::size_t>(std::llround(frac * idx.size()));
    for (std::size_t i = 0; i < take; ++i) in_val[idx[i]] = true;
  }
  std::pair<std::vector<EmbeddingRecord>, std::vector<EmbeddingRecord>> out;
  for (std::size_t i = 0; i < train.size(); ++i)
    (in_val[i] ? out.second : out.first).push_back(train[i]);
  return out;
}

/// Stacks records into batch tensors. Epoch-seeded shuffle; a final singleton
/// batch is merged into the previous one (the b x b similarity matrix is
/// degenerate at b=1).
template <typename T>
std::vector<Batch<T>> make_batches(const std::vector<EmbeddingRecord>& records,
                                   std::size_t b, std::uint64_t seed,
                                   bool shuffle) {
  if (b < 2) throw ContractError("make_batches: batch size must be >= 2");
  std::vector<std::size_t> order(records.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  if (shuffle) {
    std::mt19937_64 rng(seed);
    detail::seeded_shuffle(order, rng);
  }
  // batch boundaries: full batches of b; a remainder of 1 joins the last one
  std::vector<std::size_t> sizes;
  std::size_t n = records.size();
  while (n >= b) {
    sizes.push_back(b);
    n -= b;
  }
  if (n == 1 && !sizes.empty())
    sizes.back() += 1;
  else if (n > 0)
    sizes.push_back(n);

  std::vector<Batch<T>> out;
  std::size_t pos = 0;
  for (std::size_t sz : sizes) {
    Batch<T> batch;
    const std::size_t d_in = records.empty() ? 0 : records[0].text_embedding.size();
    batch.text = Tensor2<T>(sz, d_in);
    batch.image = Tensor2<T>(sz, d_in);
    batch.labels.resize(sz);
    for (std::size_t i = 0; i < sz; ++i) {
      const auto& r = records[order[pos + i]];
      batch.labels[i] = r.label;
      for (std::size_t j = 0; j < d_in; ++j) {
        batch.text.at(i, j) = T(r.text_embedding[j]);
        batch.image.at(i, j) = T(r.image_embedding[j]);
      }
    }
    out.push_back(std::move(batch));
    pos += sz;
  }
  return out;
}

/// XOR construction: each modality carries an independent random sign along a
/// fixed direction and the label is the XOR of the two signs, so neither
/// modality alone predicts the label. First 80% of records are train.
inline Dataset gen_synthetic_xor(std::size_t n, std::size_t d,
                                 std::uint64_t seed) {
  if (n < 8 || n % 2 != 0)
    throw ContractError("gen_synthetic_xor: n must be even and >= 8");
  if (d < 2) throw ContractError("gen_synthetic_xor: d must be >= 2");
  const float mu = 1.0f, sigma = 0.3f;
  std::mt19937_64 rng(seed);
  Dataset ds;
  ds.meta.name = "synthetic-xor";
  ds.meta.d_in = d;
  std::size_t n_train = (n * 8) / 10;
  for (std::size_t i = 0; i < n; ++i) {
    EmbeddingRecord r;
    r.id = "xor-" + std::to_string(i);
    r.split = i < n_train ? Split::kTrain : Split::kTest;
    bool s_t = rng() & 1;
    bool s_i = rng() & 1;
    r.label = (s_t != s_i) ? 1 : 0;
    r.text_embedding.resize(d);
    r.image_embedding.resize(d);
    for (std::size_t j = 0; j < d; ++j) {
      r.text_embedding[j] = sigma * detail::normal01<float>(rng);
      r.image_embedding[j] = sigma * detail::normal01<float>(rng);
    }
    r.text_embedding[0] += s_t ? mu : -mu;
    r.image_embedding[0] += s_i ? mu : -mu;
    ds.records.push_back(std::move(r));
  }
  for (const auto& r : ds.records)
    ds.meta.counts[r.split == Split::kTrain ? 0 : 1][r.label]++;
  return ds;
}

/// Two Gaussian clusters per modality (unit sigma), consistent across
/// modalities; linearly separable when separation is large. First 80% train.
inline Dataset gen_synthetic_clusters(std::size_t n, std::size_t d,
                                      std::uint64_t seed, double separation) {
  if (n < 8) throw ContractError("gen_synthetic_clusters: n must be >= 8");
  if (separation < 0)
    throw ContractError("gen_synthetic_clusters: separation must be >= 0");
  std::mt19937_64 rng(seed);
  Dataset ds;
  ds.meta.name = "synthetic-clusters";
  ds.meta.d_in = d;
  std::size_t n_train = (n * 8) / 10;
  const float offset = static_cast<float>(separation / 2.0);
  for (std::size_t i = 0; i < n; ++i) {
    EmbeddingRecord r;
    r.id = "cluster-" + std::to_string(i);
    r.split = i < n_train ? Split::kTrain : Split::kTest;
    r.label = static_cast<int>(rng() & 1);
    float center = r.label == 1 ? offset : -offset;
    r.text_embedding.resize(d);
    r.image_embedding.resize(d);
    for (std::size_t j = 0; j < d; ++j) {
      r.text_embedding[j] = detail::normal01<float>(rng);
      r.image_embedding[j] = detail::normal01<float>(rng);
    }
    r.text_embedding[0] += center;
    r.image_embedding[0] += center;
    ds.records.push_back(std::move(r));
  }
  for (const auto& r : ds.records)
    ds.meta.counts[r.split == Split::kTrain ? 0 : 1][r.label]++;
  return ds;
}

inline std::vector<EmbeddingRecord> split_records(const Dataset& ds,
                                                  Split split) {
  std::vector<EmbeddingRecord> out;
  for (const auto& r : ds.records)
    if (r.split == split) out.push_back(r);
  return out;
}

}  // namespace fnr
