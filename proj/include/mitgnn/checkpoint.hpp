#pragma once

// Binary checkpoint layout (all integers and floats little-endian):
//   "MITG" | u32 version | u64 N S M d T L | u64 section count |
//   sections: u32 name length, name bytes, u64 rows, u64 cols, f64 values (row-major)
// Optimizer moments are stored as extra sections "adam.m/<param>",
// "adam.v/<param>" and "adam.step".

#include <bit>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "mitgnn/error.hpp"
#include "mitgnn/model.hpp"
#include "mitgnn/optimizer.hpp"

namespace mitgnn {

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr char kCheckpointMagic[4] = {'M', 'I', 'T', 'G'};

namespace detail {

inline void put_u32(std::ostream& out, std::uint32_t v) {
  for (int k = 0; k < 4; ++k) out.put(static_cast<char>((v >> (8 * k)) & 0xFF));
}
inline void put_u64(std::ostream& out, std::uint64_t v) {
  for (int k = 0; k < 8; ++k) out.put(static_cast<char>((v >> (8 * k)) & 0xFF));
}
inline void put_f64(std::ostream& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

inline std::uint64_t get_bytes(std::istream& in, int n) {
  std::uint64_t v = 0;
  for (int k = 0; k < n; ++k) {
    const int c = in.get();
    if (c == std::char_traits<char>::eof()) throw Error(ErrorKind::format, "truncated checkpoint");
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * k);
  }
  return v;
}
inline std::uint32_t get_u32(std::istream& in) { return static_cast<std::uint32_t>(get_bytes(in, 4)); }
inline std::uint64_t get_u64(std::istream& in) { return get_bytes(in, 8); }
inline double get_f64(std::istream& in) { return std::bit_cast<double>(get_u64(in)); }

inline void put_section(std::ostream& out, const std::string& name, const Tensor& t) {
  put_u32(out, static_cast<std::uint32_t>(name.size()));
  out.write(name.data(), static_cast<std::streamsize>(name.size()));
  put_u64(out, t.rows());
  put_u64(out, t.cols());
  for (double v : t.data()) put_f64(out, v);
}

}  // namespace detail

struct Checkpoint {
  ModelParams params;
  std::optional<Adam> optimizer;
};

inline void save_checkpoint(std::ostream& out, const ModelParams& params,
                            const Adam* optimizer = nullptr) {
  const ModelDims& d = params.dims();
  out.write(kCheckpointMagic, 4);
  detail::put_u32(out, kCheckpointVersion);
  for (std::size_t v : {d.users, d.baskets, d.items, d.dim, d.intents, d.layers}) detail::put_u64(out, v);
  const auto& all = params.store().all();
  std::uint64_t sections = all.size();
  if (optimizer) sections += 2 * all.size() + 1;
  detail::put_u64(out, sections);
  for (const Param& p : all) detail::put_section(out, p.name, p.value);
  if (optimizer) {
    for (std::size_t k = 0; k < all.size(); ++k) {
      detail::put_section(out, "adam.m/" + all[k].name, optimizer->first_moment(k));
      detail::put_section(out, "adam.v/" + all[k].name, optimizer->second_moment(k));
    }
    detail::put_section(out, "adam.step", Tensor(1, 1, static_cast<double>(optimizer->steps())));
  }
  if (!out) throw Error(ErrorKind::io, "failed writing checkpoint");
}

inline void save_checkpoint(const std::string& path, const ModelParams& params,
                            const Adam* optimizer = nullptr) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::io, "cannot write " + path);
  save_checkpoint(out, params, optimizer);
}

inline Checkpoint load_checkpoint(std::istream& in, const std::optional<ModelDims>& expected = {}) {
  char magic[4] = {};
  in.read(magic, 4);
  if (!in || std::string(magic, 4) != std::string(kCheckpointMagic, 4)) {
    throw Error(ErrorKind::format, "not a checkpoint (bad magic bytes)");
  }
  const std::uint32_t version = detail::get_u32(in);
  if (version != kCheckpointVersion) {
    throw Error(ErrorKind::format, "unsupported checkpoint version " + std::to_string(version) +
                                       " (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  ModelDims dims;
  dims.users = detail::get_u64(in);
  dims.baskets = detail::get_u64(in);
  dims.items = detail::get_u64(in);
  dims.dim = detail::get_u64(in);
  dims.intents = detail::get_u64(in);
  dims.layers = detail::get_u64(in);
  if (expected && !(*expected == dims)) {
    throw Error(ErrorKind::shape, "checkpoint dims " + dims.describe() + " do not match expected " +
                                      expected->describe());
  }
  Checkpoint ck{ModelParams(dims), std::nullopt};
  const std::uint64_t count = detail::get_u64(in);
  std::map<std::string, Tensor> extra;
  std::size_t params_seen = 0;
  for (std::uint64_t s = 0; s < count; ++s) {
    const std::uint32_t len = detail::get_u32(in);
    if (len > 4096) throw Error(ErrorKind::format, "implausible section name length");
    std::string name(len, '\0');
    in.read(name.data(), len);
    const std::uint64_t rows = detail::get_u64(in);
    const std::uint64_t cols = detail::get_u64(in);
    if (rows != 0 && cols > (std::uint64_t{1} << 40) / rows) {
      throw Error(ErrorKind::format, "implausible section shape for " + name);
    }
    Tensor t(rows, cols);
    for (double& v : t.data()) v = detail::get_f64(in);
    if (ck.params.store().contains(name)) {
      Param& p = ck.params.param(name);
      if (!p.value.same_shape(t)) {
        throw Error(ErrorKind::shape, "section " + name + " has shape " + t.shape_string() +
                                          ", expected " + p.value.shape_string());
      }
      p.value = std::move(t);
      ++params_seen;
    } else if (name.rfind("adam.", 0) == 0) {
      extra.emplace(name, std::move(t));
    } else {
      throw Error(ErrorKind::format, "unknown checkpoint section " + name);
    }
  }
  if (params_seen != ck.params.store().size()) {
    throw Error(ErrorKind::format, "checkpoint is missing parameter sections");
  }
  if (!extra.empty()) {
    Adam adam(ck.params.store(), AdamOptions{});
    const auto& all = ck.params.store().all();
    for (std::size_t k = 0; k < all.size(); ++k) {
      auto m = extra.find("adam.m/" + all[k].name);
      auto v = extra.find("adam.v/" + all[k].name);
      if (m == extra.end() || v == extra.end()) {
        throw Error(ErrorKind::format, "incomplete optimizer state for " + all[k].name);
      }
      adam.set_moments(k, std::move(m->second), std::move(v->second));
    }
    auto step = extra.find("adam.step");
    if (step == extra.end()) throw Error(ErrorKind::format, "optimizer state lacks step counter");
    adam.set_steps(static_cast<std::uint64_t>(step->second(0, 0)));
    ck.optimizer = std::move(adam);
  }
  return ck;
}

inline Checkpoint load_checkpoint(const std::string& path,
                                  const std::optional<ModelDims>& expected = {}) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path);
  return load_checkpoint(in, expected);
}

}  // namespace mitgnn
