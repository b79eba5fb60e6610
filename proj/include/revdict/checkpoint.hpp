#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "revdict/error.hpp"
#include "revdict/model.hpp"
#include "revdict/scoring.hpp"

namespace revdict {

// Layout:
//   8 bytes   magic "RDCKPT01"
//   uint64    header length (little-endian)
//   header    JSON {config, meta, tensors:[{name, shape:[r,c], offset}]}
//   data      float32 little-endian, row-major, offsets in floats
inline constexpr char kCheckpointMagic[8] = {'R', 'D', 'C', 'K', 'P', 'T', '0', '1'};

template <typename Scalar>
void write_checkpoint(std::ostream& out, const EncoderParams<Scalar>& p,
                      const nlohmann::json& meta = nlohmann::json::object()) {
  nlohmann::json tensors = nlohmann::json::array();
  std::uint64_t offset = 0;
  for_each_tensor(p, [&](const std::string& name, const Mat<Scalar>& t) {
    tensors.push_back({{"name", name}, {"shape", {t.rows(), t.cols()}}, {"offset", offset}});
    offset += static_cast<std::uint64_t>(t.size());
  });
  nlohmann::json header = {{"config", p.config}, {"meta", meta}, {"tensors", tensors}};
  const std::string h = header.dump();
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  detail::write_le<std::uint64_t>(out, h.size());
  out.write(h.data(), static_cast<std::streamsize>(h.size()));
  for_each_tensor(p, [&](const std::string&, const Mat<Scalar>& t) {
    for (Eigen::Index i = 0; i < t.size(); ++i) detail::write_le<float>(out, static_cast<float>(t.data()[i]));
  });
}

template <typename Scalar>
void save_checkpoint(const std::string& path, const EncoderParams<Scalar>& p,
                     const nlohmann::json& meta = nlohmann::json::object()) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint: " + path, "io_error");
  write_checkpoint(out, p, meta);
  if (!out) throw Error("write failed: " + path, "io_error");
}

template <typename Scalar>
struct LoadedCheckpoint {
  EncoderParams<Scalar> params;
  nlohmann::json meta;
};

template <typename Scalar = float>
LoadedCheckpoint<Scalar> read_checkpoint(std::istream& in) {
  char magic[sizeof(kCheckpointMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    throw Error("not a revdict checkpoint (bad magic)", "invalid_checkpoint");
  }
  const auto hlen = detail::read_le<std::uint64_t>(in);
  if (hlen > (1u << 26)) throw Error("checkpoint header too large", "invalid_checkpoint");
  std::string h(hlen, '\0');
  in.read(h.data(), static_cast<std::streamsize>(hlen));
  if (!in) throw Error("truncated checkpoint header", "invalid_checkpoint");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(h);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("checkpoint header: ") + e.what(), "invalid_checkpoint");
  }
  const auto cfg = header.at("config").get<ModelConfig>();
  cfg.validate();
  LoadedCheckpoint<Scalar> out;
  out.params = zeros_like_config<Scalar>(cfg);
  out.meta = header.value("meta", nlohmann::json::object());
  std::map<std::string, nlohmann::json> described;
  for (const auto& t : header.at("tensors")) described[t.at("name").get<std::string>()] = t;

  // Data is read in the header's offset order, which need not match ours.
  std::vector<std::pair<std::uint64_t, Mat<Scalar>*>> order;
  std::size_t expected = 0;
  for_each_tensor(out.params, [&](const std::string& name, Mat<Scalar>& t) {
    auto it = described.find(name);
    if (it == described.end()) throw Error("checkpoint lacks tensor " + name, "invalid_checkpoint");
    const auto shape = it->second.at("shape").get<std::vector<Eigen::Index>>();
    if (shape.size() != 2 || shape[0] != t.rows() || shape[1] != t.cols()) {
      throw Error("checkpoint tensor " + name + " has the wrong shape", "invalid_checkpoint");
    }
    order.emplace_back(it->second.at("offset").get<std::uint64_t>(), &t);
    ++expected;
  });
  if (described.size() != expected) throw Error("checkpoint has unknown tensors", "invalid_checkpoint");
  std::sort(order.begin(), order.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  std::uint64_t pos = 0;
  for (auto& [offset, t] : order) {
    if (offset != pos) throw Error("checkpoint tensor offsets are not contiguous", "invalid_checkpoint");
    for (Eigen::Index i = 0; i < t->size(); ++i) {
      const float v = detail::read_le<float>(in);
      if (!std::isfinite(v)) throw Error("checkpoint contains non-finite values", "non_finite");
      t->data()[i] = static_cast<Scalar>(v);
    }
    pos += static_cast<std::uint64_t>(t->size());
  }
  return out;
}

template <typename Scalar = float>
LoadedCheckpoint<Scalar> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint: " + path, "io_error");
  return read_checkpoint<Scalar>(in);
}

}  // namespace revdict
