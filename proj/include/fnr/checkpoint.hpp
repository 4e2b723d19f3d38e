#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "fnr/errors.hpp"
#include "fnr/model.hpp"
#include "fnr/optimizer.hpp"

namespace fnr {

// Versioned binary checkpoint container.
//
// Layout (all integers little-endian):
//   magic   "FNRC" (4 bytes)
//   u32     container version (currently 1)
//   u64     d_in, u64 k, u64 h
//   f64     dropout_rate, f64 lambda
//   u8      mode (0 text_only, 1 image_only, 2 fused_ws, 3 fused_s)
//   u64     seed
//   u32     tensor count
//   per tensor: u32 name length, name bytes, u64 rows, u64 cols,
//               rows*cols f64 values
//   u8      has_optimizer_state
//   if set: u64 step count, u32 moment tensor count, tensors as above
//           (names "<param>.m" / "<param>.v")
//   u32     CRC-32 of every preceding byte
constexpr char kCheckpointMagic[4] = {'F', 'N', 'R', 'C'};
constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline std::uint32_t crc32(const std::string& bytes) {
  static const auto table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k)
        c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  std::uint32_t c = 0xFFFFFFFFu;
  for (unsigned char b : bytes) c = table[(c ^ b) & 0xFF] ^ (c >> 8);
  return c ^ 0xFFFFFFFFu;
}

struct ByteWriter {
  std::string buf;

  template <typename POD>
  void pod(POD v) {
    buf.append(reinterpret_cast<const char*>(&v), sizeof v);
  }
  void str(const std::string& s) {
    pod<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    buf.append(s);
  }
  void tensor(const std::string& name, const Tensor2<double>& t) {
    str(name);
    pod<std::uint64_t>(t.rows);
    pod<std::uint64_t>(t.cols);
    buf.append(reinterpret_cast<const char*>(t.data.data()),
               t.data.size() * sizeof(double));
  }
};

struct ByteReader {
  const std::string& buf;
  std::size_t pos = 0;

  template <typename POD>
  POD pod() {
    POD v{};
    if (pos + sizeof v > buf.size())
      throw DataError("checkpoint: truncated");
    std::memcpy(&v, buf.data() + pos, sizeof v);
    pos += sizeof v;
    return v;
  }
  std::string str() {
    auto len = pod<std::uint32_t>();
    if (pos + len > buf.size()) throw DataError("checkpoint: truncated");
    std::string s = buf.substr(pos, len);
    pos += len;
    return s;
  }
  std::pair<std::string, Tensor2<double>> tensor() {
    std::string name = str();
    auto rows = pod<std::uint64_t>();
    auto cols = pod<std::uint64_t>();
    Tensor2<double> t(rows, cols);
    std::size_t bytes = t.data.size() * sizeof(double);
    if (pos + bytes > buf.size()) throw DataError("checkpoint: truncated");
    std::memcpy(t.data.data(), buf.data() + pos, bytes);
    pos += bytes;
    return {std::move(name), std::move(t)};
  }
};

}  // namespace detail

inline void save_checkpoint(const std::filesystem::path& path,
                            Model<double>& model,
                            AdamW<double>* optimizer = nullptr) {
  detail::ByteWriter w;
  w.buf.append(kCheckpointMagic, 4);
  w.pod<std::uint32_t>(kCheckpointVersion);
  const auto& c = model.config;
  w.pod<std::uint64_t>(c.d_in);
  w.pod<std::uint64_t>(c.k);
  w.pod<std::uint64_t>(c.h);
  w.pod<double>(c.dropout_rate);
  w.pod<double>(c.lambda);
  w.pod<std::uint8_t>(static_cast<std::uint8_t>(c.mode));
  w.pod<std::uint64_t>(c.seed);

  auto refs = model.param_refs();
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(refs.size()));
  for (auto& r : refs) w.tensor(r.name, *r.tensor);

  if (optimizer) {
    w.pod<std::uint8_t>(1);
    w.pod<std::uint64_t>(optimizer->step_count());
    auto moments = optimizer->moments();
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(2 * moments.size()));
    for (auto& mv : moments) {
      w.tensor(mv.name + ".m", *mv.m);
      w.tensor(mv.name + ".v", *mv.v);
    }
  } else {
    w.pod<std::uint8_t>(0);
  }

  std::uint32_t crc = detail::crc32(w.buf);
  w.pod<std::uint32_t>(crc);

  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write checkpoint " + path.string());
  os.write(w.buf.data(), static_cast<std::streamsize>(w.buf.size()));
}

inline Model<double> load_checkpoint(const std::filesystem::path& path,
                                     AdamW<double>* optimizer = nullptr) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot read checkpoint " + path.string());
  std::string buf((std::istreambuf_iterator<char>(is)),
                  std::istreambuf_iterator<char>());
  if (buf.size() < 8 || std::memcmp(buf.data(), kCheckpointMagic, 4) != 0)
    throw DataError(path.string() + ": not an FNRC checkpoint");
  std::uint32_t stored_crc;
  std::memcpy(&stored_crc, buf.data() + buf.size() - 4, 4);
  std::string body = buf.substr(0, buf.size() - 4);
  if (detail::crc32(body) != stored_crc)
    throw DataError(path.string() + ": checksum mismatch, file is corrupt");

  detail::ByteReader r{body, 4};
  auto version = r.pod<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw DataError(path.string() + ": unsupported checkpoint version " +
                    std::to_string(version));
  ModelConfig cfg;
  cfg.d_in = r.pod<std::uint64_t>();
  cfg.k = r.pod<std::uint64_t>();
  cfg.h = r.pod<std::uint64_t>();
  cfg.dropout_rate = r.pod<double>();
  cfg.lambda = r.pod<double>();
  cfg.mode = static_cast<Mode>(r.pod<std::uint8_t>());
  cfg.seed = r.pod<std::uint64_t>();

  Model<double> model(cfg);
  auto refs = model.param_refs();
  auto count = r.pod<std::uint32_t>();
  if (count != refs.size())
    throw DataError(path.string() + ": expected " +
                    std::to_string(refs.size()) + " tensors, found " +
                    std::to_string(count));
  for (auto& ref : refs) {
    auto [name, t] = r.tensor();
    if (name != ref.name)
      throw DataError(path.string() + ": tensor '" + name +
                      "' out of order, expected '" + ref.name + "'");
    if (!t.same_shape(*ref.tensor))
      throw DataError(path.string() + ": tensor '" + name + "' has shape " +
                      t.shape_str() + ", expected " +
                      ref.tensor->shape_str());
    *ref.tensor = std::move(t);
  }

  auto has_opt = r.pod<std::uint8_t>();
  if (has_opt && optimizer) {
    optimizer->set_step_count(r.pod<std::uint64_t>());
    auto n = r.pod<std::uint32_t>();
    auto moments = optimizer->moments();
    if (n != 2 * moments.size())
      throw DataError(path.string() + ": optimizer state tensor count " +
                      std::to_string(n) + " unexpected");
    for (auto& mv : moments) {
      auto [mn, mt] = r.tensor();
      if (mn != mv.name + ".m")
        throw DataError(path.string() + ": unexpected moment tensor '" + mn +
                        "'");
      *mv.m = std::move(mt);
      auto [vn, vt] = r.tensor();
      if (vn != mv.name + ".v")
        throw DataError(path.string() + ": unexpected moment tensor '" + vn +
                        "'");
      *mv.v = std::move(vt);
    }
  }
  return model;
}

}  // namespace fnr
