#pragma once

// Model container, little-endian throughout:
//   "HNET" | u32 version | u64 config length | config text
//   then, until end of file, slots of
//   u32 name length | name | u64 element count | f64 values
// Learnable parameters come first in store order. Running statistics use
// the prefix "buffer/", Adam moments "adam.m/" and "adam.v/", and the
// optimizer scalars the single slot "optim/state".

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "hnet/graph.hpp"
#include "hnet/model.hpp"
#include "hnet/optim.hpp"

namespace hnet {

inline constexpr std::uint32_t kFormatVersion = 1;

namespace detail {

static_assert(std::endian::native == std::endian::little, "serializer assumes a little-endian host");

template <class U>
void put(std::ostream& out, U v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class U>
U get(std::istream& in, const char* what) {
  U v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw std::runtime_error(std::string("truncated model: ") + what);
  return v;
}

template <class V>
void put_slot(std::ostream& out, const std::string& name, const V& values) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
  out.write(name.data(), static_cast<std::streamsize>(name.size()));
  put<std::uint64_t>(out, values.size());
  for (auto v : values) put<double>(out, static_cast<double>(v));
}

}  // namespace detail

template <class T>
void save_model(std::ostream& out, const Model<T>& model, const OptimState* optim = nullptr) {
  out.write("HNET", 4);
  detail::put<std::uint32_t>(out, kFormatVersion);
  const std::string& cfg = model.graph().source;
  detail::put<std::uint64_t>(out, cfg.size());
  out.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
  for (const auto& s : model.params().slots()) detail::put_slot(out, s.name, s.value);
  for (const auto& [name, v] : model.buffers()) detail::put_slot(out, "buffer/" + name, v);
  if (optim != nullptr) {
    for (const auto& s : model.params().slots()) detail::put_slot(out, "adam.m/" + s.name, s.moment1);
    for (const auto& s : model.params().slots()) detail::put_slot(out, "adam.v/" + s.name, s.moment2);
    const std::vector<double> st{static_cast<double>(optim->step), optim->lr, static_cast<double>(optim->plateau),
                                 optim->best, static_cast<double>(optim->patience), optim->decay,
                                 static_cast<double>(optim->epoch)};
    detail::put_slot(out, "optim/state", st);
  }
}

template <class T>
void save_model(const std::string& path, const Model<T>& model, const OptimState* optim = nullptr) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  save_model(out, model, optim);
  if (!out) throw std::runtime_error("write failed for " + path);
}

template <class T>
struct LoadedModel {
  Model<T> model;
  bool has_optim = false;
  OptimState optim;
};

/// Rebuilds the graph from the embedded config and restores every slot.
/// Throws ConfigError for a bad embedded config, std::runtime_error for a
/// malformed container.
template <class T>
LoadedModel<T> load_model(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "HNET", 4) != 0) throw std::runtime_error("not an HNET model file");
  const auto version = detail::get<std::uint32_t>(in, "version");
  if (version != kFormatVersion) throw std::runtime_error("unsupported model format version " + std::to_string(version));
  const auto len = detail::get<std::uint64_t>(in, "config length");
  std::string cfg(len, '\0');
  if (!in.read(cfg.data(), static_cast<std::streamsize>(len))) throw std::runtime_error("truncated model: config");
  LoadedModel<T> out{Model<T>(parse_config(cfg), 0), false, {}};
  auto& m = out.model;
  std::size_t learnable_seen = 0;
  while (in.peek() != std::char_traits<char>::eof()) {
    const auto nlen = detail::get<std::uint32_t>(in, "slot name length");
    std::string name(nlen, '\0');
    if (!in.read(name.data(), nlen)) throw std::runtime_error("truncated model: slot name");
    const auto count = detail::get<std::uint64_t>(in, "slot size");
    std::vector<double> vals(count);
    for (auto& v : vals) v = detail::get<double>(in, "slot values");
    auto assign = [&](std::vector<T>& dst) {
      if (dst.size() != vals.size()) {
        throw std::runtime_error("slot '" + name + "' has " + std::to_string(vals.size()) + " values, model expects " +
                                 std::to_string(dst.size()));
      }
      for (std::size_t i = 0; i < vals.size(); ++i) dst[i] = static_cast<T>(vals[i]);
    };
    auto strip = [&](const std::string& prefix) { return name.substr(prefix.size()); };
    if (name == "optim/state") {
      if (vals.size() != 7) throw std::runtime_error("optim/state must hold 7 values");
      out.has_optim = true;
      out.optim = {static_cast<std::int64_t>(vals[0]), vals[1], static_cast<int>(vals[2]), vals[3],
                   static_cast<int>(vals[4]), vals[5], static_cast<int>(vals[6])};
    } else if (name.starts_with("buffer/")) {
      const auto it = m.buffers().find(strip("buffer/"));
      if (it == m.buffers().end()) throw std::runtime_error("unknown buffer slot '" + name + "'");
      assign(it->second);
    } else if (name.starts_with("adam.m/")) {
      assign(m.params().slot(strip("adam.m/")).moment1);
    } else if (name.starts_with("adam.v/")) {
      assign(m.params().slot(strip("adam.v/")).moment2);
    } else {
      if (!m.params().contains(name)) throw std::runtime_error("unknown parameter slot '" + name + "'");
      assign(m.params().slot(name).value);
      ++learnable_seen;
    }
  }
  if (learnable_seen != m.params().size()) throw std::runtime_error("model file is missing parameter slots");
  return out;
}

template <class T>
LoadedModel<T> load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return load_model<T>(in);
}

}  // namespace hnet
