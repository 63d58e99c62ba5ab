#pragma once

// Binary checkpoint of one agent's PolicyParams<float>.
//
// Layout (all integers little-endian):
//   "LLMSCKPT" | u32 format=1 | u64 payload_bytes
//   str schema_version | str config_hash | str obs_schema | u32 agent_id | u32 obs_dim
//   u32 n_arrays, then per array: str name | u32 rank | u32 dims[rank] | u32 crc32 | f32 data[]
// where str = u32 length + bytes.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <vector>

#include "llmshape/config.hpp"
#include "llmshape/errors.hpp"
#include "llmshape/obs_encode.hpp"
#include "llmshape/ppo.hpp"

namespace llmshape {

struct CheckpointHeader {
  std::string schema_version;
  std::string config_hash;
  std::string obs_schema_version;
  int agent_id = 0;
  int obs_dim = 0;
};

struct LoadedCheckpoint {
  CheckpointHeader header;
  PolicyParams<float> params;
  /// Set when the stored config hash differs from the expected one.
  bool config_hash_mismatch = false;
};

namespace detail {

inline constexpr char kCheckpointMagic[8] = {'L', 'L', 'M', 'S', 'C', 'K', 'P', 'T'};

class ByteWriter {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    buf_.append(s);
  }
  void raw(std::string_view s) { buf_.append(s); }
  std::string& bytes() { return buf_; }

 private:
  std::string buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string_view data) : data_(data) {}
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[pos_ + static_cast<std::size_t>(i)])) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + static_cast<std::size_t>(i)])) << (8 * i);
    pos_ += 8;
    return v;
  }
  std::string str() {
    const auto n = u32();
    return std::string(raw(n));
  }
  std::string_view raw(std::size_t n) {
    need(n);
    auto out = data_.substr(pos_, n);
    pos_ += n;
    return out;
  }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw IntegrityError("checkpoint truncated");
  }
  std::string_view data_;
  std::size_t pos_ = 0;
};

inline std::string f32_bytes(const std::vector<float>& v) {
  std::string out;
  out.reserve(v.size() * 4);
  for (float f : v) {
    const auto bits = std::bit_cast<std::uint32_t>(f);
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
  }
  return out;
}

inline std::vector<float> f32_from_bytes(std::string_view b) {
  std::vector<float> out(b.size() / 4);
  for (std::size_t k = 0; k < out.size(); ++k) {
    std::uint32_t bits = 0;
    for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(b[k * 4 + static_cast<std::size_t>(i)])) << (8 * i);
    out[k] = std::bit_cast<float>(bits);
  }
  return out;
}

inline void write_array(ByteWriter& w, const std::string& name, const std::vector<std::uint32_t>& dims,
                        const std::vector<float>& data) {
  w.str(name);
  w.u32(static_cast<std::uint32_t>(dims.size()));
  for (auto d : dims) w.u32(d);
  const std::string bytes = f32_bytes(data);
  w.u32(crc32_of(bytes));
  w.raw(bytes);
}

inline std::vector<float> read_array(ByteReader& r, const std::string& expect_name,
                                     const std::vector<std::uint32_t>& expect_dims) {
  const std::string name = r.str();
  if (name != expect_name) throw SchemaError("checkpoint array '" + name + "' where '" + expect_name + "' expected");
  const auto rank = r.u32();
  std::vector<std::uint32_t> dims(rank);
  std::uint64_t count = 1;
  for (auto& d : dims) {
    d = r.u32();
    count *= d;
  }
  if (dims != expect_dims) throw SchemaError("checkpoint array '" + name + "' has mismatched shape");
  const auto crc = r.u32();
  const auto bytes = r.raw(count * 4);
  if (crc32_of(bytes) != crc) throw IntegrityError("checkpoint array '" + name + "' fails its checksum");
  return f32_from_bytes(bytes);
}

template <typename F>
void for_each_array(const PolicyParams<float>& p, F&& f) {
  auto net = [&](const Mlp<float>& m, const char* prefix) {
    for (std::size_t k = 0; k < m.layers.size(); ++k) {
      const auto& l = m.layers[k];
      const std::string base = std::string(prefix) + "." + std::to_string(k);
      f(base + ".weight", std::vector<std::uint32_t>{static_cast<std::uint32_t>(l.in), static_cast<std::uint32_t>(l.out)},
        l.weight);
      f(base + ".bias", std::vector<std::uint32_t>{static_cast<std::uint32_t>(l.out)}, l.bias);
    }
  };
  net(p.policy, "policy");
  net(p.value, "value");
}

}  // namespace detail

inline std::string serialize_checkpoint(const PolicyParams<float>& params, const CheckpointHeader& header) {
  detail::ByteWriter body;
  body.str(header.schema_version);
  body.str(header.config_hash);
  body.str(header.obs_schema_version);
  body.u32(static_cast<std::uint32_t>(header.agent_id));
  body.u32(static_cast<std::uint32_t>(header.obs_dim));
  // Layer count per network so the loader can rebuild the shapes.
  body.u32(static_cast<std::uint32_t>(params.policy.layers.size()));
  body.u32(static_cast<std::uint32_t>(params.value.layers.size()));
  for (const auto& l : params.policy.layers) body.u32(static_cast<std::uint32_t>(l.out));
  for (const auto& l : params.value.layers) body.u32(static_cast<std::uint32_t>(l.out));
  std::uint32_t n_arrays = 0;
  detail::for_each_array(params, [&](auto&&...) { ++n_arrays; });
  body.u32(n_arrays);
  detail::for_each_array(params, [&](const std::string& name, const std::vector<std::uint32_t>& dims,
                                     const std::vector<float>& data) { detail::write_array(body, name, dims, data); });

  detail::ByteWriter out;
  out.raw(std::string_view(detail::kCheckpointMagic, 8));
  out.u32(1);
  out.u64(body.bytes().size());
  out.raw(body.bytes());
  return std::move(out.bytes());
}

/// Parses a checkpoint. `expected_obs_dim` <= 0 skips the shape check; an
/// empty `expected_config_hash` skips the hash comparison.
inline LoadedCheckpoint deserialize_checkpoint(std::string_view data, int expected_obs_dim = 0,
                                               std::string_view expected_config_hash = {}) {
  detail::ByteReader r(data);
  if (r.raw(8) != std::string_view(detail::kCheckpointMagic, 8)) throw IntegrityError("not a checkpoint file");
  if (r.u32() != 1) throw SchemaError("unsupported checkpoint format version");
  const auto payload = r.u64();
  if (payload != r.remaining()) throw IntegrityError("checkpoint length does not match its header");

  LoadedCheckpoint out;
  auto& h = out.header;
  h.schema_version = r.str();
  h.config_hash = r.str();
  h.obs_schema_version = r.str();
  h.agent_id = static_cast<int>(r.u32());
  h.obs_dim = static_cast<int>(r.u32());
  if (h.schema_version != kPolicySchemaVersion) throw SchemaError("checkpoint policy schema '" + h.schema_version + "' unsupported");
  if (h.obs_schema_version != kObsSchemaVersion)
    throw SchemaError("checkpoint observation schema '" + h.obs_schema_version + "' does not match '" +
                      std::string(kObsSchemaVersion) + "'");
  if (expected_obs_dim > 0 && h.obs_dim != expected_obs_dim)
    throw SchemaError("checkpoint obs_dim " + std::to_string(h.obs_dim) + " does not match expected " +
                      std::to_string(expected_obs_dim));
  out.config_hash_mismatch = !expected_config_hash.empty() && expected_config_hash != h.config_hash;

  const auto n_pi = r.u32();
  const auto n_vf = r.u32();
  if (n_pi == 0 || n_vf == 0 || n_pi > 64 || n_vf > 64) throw IntegrityError("checkpoint layer counts are corrupt");
  std::vector<int> pi_out(n_pi), vf_out(n_vf);
  for (auto& v : pi_out) v = static_cast<int>(r.u32());
  for (auto& v : vf_out) v = static_cast<int>(r.u32());
  const auto n_arrays = r.u32();
  if (n_arrays != 2 * (n_pi + n_vf)) throw IntegrityError("checkpoint array count is corrupt");

  auto read_net = [&](Mlp<float>& m, const std::vector<int>& outs, const char* prefix) {
    int in = h.obs_dim;
    for (std::size_t k = 0; k < outs.size(); ++k) {
      DenseLayer<float> l;
      l.in = in;
      l.out = outs[k];
      const std::string base = std::string(prefix) + "." + std::to_string(k);
      l.weight = detail::read_array(r, base + ".weight", {static_cast<std::uint32_t>(l.in), static_cast<std::uint32_t>(l.out)});
      l.bias = detail::read_array(r, base + ".bias", {static_cast<std::uint32_t>(l.out)});
      m.layers.push_back(std::move(l));
      in = outs[k];
    }
  };
  read_net(out.params.policy, pi_out, "policy");
  read_net(out.params.value, vf_out, "value");
  if (r.remaining() != 0) throw IntegrityError("checkpoint has trailing bytes");
  if (out.params.num_actions() != kNumActions) throw SchemaError("checkpoint policy head does not have 6 actions");
  out.params.schema_version = h.schema_version;
  return out;
}

inline void save_checkpoint(const std::string& path, const PolicyParams<float>& params, const CheckpointHeader& header) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write checkpoint '" + path + "'");
  const auto bytes = serialize_checkpoint(params, header);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("failed writing checkpoint '" + path + "'");
}

inline LoadedCheckpoint load_checkpoint(const std::string& path, int expected_obs_dim = 0,
                                        std::string_view expected_config_hash = {}) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint '" + path + "'");
  const std::string data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(data, expected_obs_dim, expected_config_hash);
}

}  // namespace llmshape
