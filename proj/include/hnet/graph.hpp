#pragma once

// Declarative network description, static checks, and parameter accounting.
//
// Config format, one directive per line, '#' starts a comment:
//
//   input <height> <width> <channels>
//   streams <order> [<order> ...]        default stream orders of hconv layers
//   target_order <M>
//   classes <n>
//   resample sigma=<s> angular=<n>       Gaussian ring resampling (optional)
//   hconv channels=<c> kernel=<k> [orders=a,b] [phase=yes|no] [edges=n>p:m,...]
//   crelu | cbn | readout
//   meanpool window=<w> stride=<s> [blur=auto|none|<sigma>]
//   blur sigma=<s>
//   conv channels=<c> kernel=<k> [pad=same|valid]
//   relu | bn
//   maxpool window=<w> stride=<s>

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "hnet/block.hpp"
#include "hnet/conv.hpp"
#include "hnet/filters.hpp"
#include "hnet/ops.hpp"

namespace hnet {

class ConfigError : public std::runtime_error {
 public:
  ConfigError(int line, const std::string& msg)
      : std::runtime_error(line > 0 ? "config line " + std::to_string(line) + ": " + msg : msg), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

enum class LayerKind { HConv, CReLU, CBatchNorm, MeanPool, Blur, Readout, Conv, ReLU, BatchNorm, MaxPool };

inline const char* layer_name(LayerKind k) {
  switch (k) {
    case LayerKind::HConv: return "hconv";
    case LayerKind::CReLU: return "crelu";
    case LayerKind::CBatchNorm: return "cbn";
    case LayerKind::MeanPool: return "meanpool";
    case LayerKind::Blur: return "blur";
    case LayerKind::Readout: return "readout";
    case LayerKind::Conv: return "conv";
    case LayerKind::ReLU: return "relu";
    case LayerKind::BatchNorm: return "bn";
    case LayerKind::MaxPool: return "maxpool";
  }
  return "?";
}

struct LayerSpec {
  LayerKind kind = LayerKind::HConv;
  int channels = 0;
  int kernel = 0;
  int window = 0;
  int stride = 1;
  double sigma = 0.0;
  bool phase = true;
  Padding padding = Padding::Same;
  std::vector<int> out_orders;    // hconv
  std::vector<StreamEdge> edges;  // hconv; filled with defaults by parse_config
  int line = 0;
};

struct NetworkGraph {
  int height = 28;
  int width = 28;
  int in_channels = 1;
  std::vector<int> stream_orders{0, 1};
  int target_order = 0;
  int n_classes = 10;
  double resample_sigma = kDefaultResampleSigma;
  int resample_angular = 0;
  std::vector<LayerSpec> layers;
  std::string source;  // config text verbatim

  bool harmonic() const {
    return std::any_of(layers.begin(), layers.end(), [](const LayerSpec& l) { return l.kind == LayerKind::HConv; });
  }
};

std::string layer_label(const NetworkGraph& g, std::size_t i);

/// Activation extent at a layer boundary.
struct ActivationInfo {
  int h = 0;
  int w = 0;
  bool complex = false;
  std::vector<int> orders;  // complex only
  int channels = 0;         // per stream for complex maps

  int total_channels() const { return complex ? static_cast<int>(orders.size()) * 2 * channels : channels; }
};

namespace detail {

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    if (ch == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

inline int parse_int(const std::string& s, int line, const std::string& what) {
  try {
    std::size_t pos = 0;
    const int v = std::stoi(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(line, "expected integer for " + what + ", got '" + s + "'");
  }
}

inline double parse_double(const std::string& s, int line, const std::string& what) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(line, "expected number for " + what + ", got '" + s + "'");
  }
}

struct KeyValues {
  std::map<std::string, std::string> kv;
  int line = 0;

  bool has(const std::string& k) const { return kv.contains(k); }
  std::string get(const std::string& k, const std::string& def) const {
    const auto it = kv.find(k);
    return it == kv.end() ? def : it->second;
  }
  int integer(const std::string& k) const {
    const auto it = kv.find(k);
    if (it == kv.end()) throw ConfigError(line, "missing '" + k + "='");
    return parse_int(it->second, line, k);
  }
  int integer(const std::string& k, int def) const { return has(k) ? integer(k) : def; }
  double number(const std::string& k, double def) const {
    return has(k) ? parse_double(kv.at(k), line, k) : def;
  }
  void only(std::initializer_list<const char*> allowed) const {
    for (const auto& [k, v] : kv) {
      if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return k == a; })) {
        throw ConfigError(line, "unknown option '" + k + "'");
      }
    }
  }
};

inline KeyValues key_values(const std::vector<std::string>& tokens, int line) {
  KeyValues out;
  out.line = line;
  for (std::size_t i = 1; i < tokens.size(); ++i) {
    const auto eq = tokens[i].find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError(line, "expected key=value, got '" + tokens[i] + "'");
    out.kv[tokens[i].substr(0, eq)] = tokens[i].substr(eq + 1);
  }
  return out;
}

inline std::vector<int> parse_order_list(const std::string& s, int line) {
  std::vector<int> out;
  for (const auto& t : split(s, ',')) out.push_back(parse_int(t, line, "stream order"));
  return out;
}

}  // namespace detail

/// Parses the config text. Strided pooling layers get an explicit Gaussian
/// blur inserted in front of them (sigma = 0.5 * stride) unless blur=none.
inline NetworkGraph parse_config(std::string_view text) {
  NetworkGraph g;
  g.source = std::string(text);
  std::istringstream in{std::string(text)};
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    if (hash != std::string::npos) raw.resize(hash);
    std::istringstream ls(raw);
    std::vector<std::string> tok;
    for (std::string t; ls >> t;) tok.push_back(t);
    if (tok.empty()) continue;
    const std::string& d = tok[0];
    auto need = [&](std::size_t n) {
      if (tok.size() != n + 1) throw ConfigError(line_no, "'" + d + "' takes " + std::to_string(n) + " value(s)");
    };
    if (d == "input") {
      need(3);
      g.height = detail::parse_int(tok[1], line_no, "height");
      g.width = detail::parse_int(tok[2], line_no, "width");
      g.in_channels = detail::parse_int(tok[3], line_no, "channels");
      if (g.height < 1 || g.width < 1 || g.in_channels < 1) throw ConfigError(line_no, "input extent must be positive");
    } else if (d == "streams") {
      if (tok.size() < 2) throw ConfigError(line_no, "'streams' needs at least one order");
      g.stream_orders.clear();
      for (std::size_t i = 1; i < tok.size(); ++i) g.stream_orders.push_back(detail::parse_int(tok[i], line_no, "order"));
    } else if (d == "target_order") {
      need(1);
      g.target_order = detail::parse_int(tok[1], line_no, "target_order");
    } else if (d == "classes") {
      need(1);
      g.n_classes = detail::parse_int(tok[1], line_no, "classes");
      if (g.n_classes < 1) throw ConfigError(line_no, "classes must be positive");
    } else if (d == "resample") {
      const auto kv = detail::key_values(tok, line_no);
      kv.only({"sigma", "angular"});
      g.resample_sigma = kv.number("sigma", g.resample_sigma);
      g.resample_angular = kv.integer("angular", g.resample_angular);
      if (!(g.resample_sigma > 0)) throw ConfigError(line_no, "resample sigma must be > 0");
    } else {
      const auto kv = detail::key_values(tok, line_no);
      LayerSpec L;
      L.line = line_no;
      if (d == "hconv") {
        kv.only({"channels", "kernel", "orders", "phase", "edges"});
        L.kind = LayerKind::HConv;
        L.channels = kv.integer("channels");
        L.kernel = kv.integer("kernel", 5);
        if (L.kernel < 1 || L.kernel % 2 == 0) throw ConfigError(line_no, "hconv kernel must be odd");
        if (kv.has("orders")) L.out_orders = detail::parse_order_list(kv.get("orders", ""), line_no);
        const std::string ph = kv.get("phase", "yes");
        if (ph != "yes" && ph != "no") throw ConfigError(line_no, "phase must be yes or no");
        L.phase = ph == "yes";
        if (kv.has("edges")) {
          for (const auto& e : detail::split(kv.get("edges", ""), ',')) {
            const auto gt = e.find('>'), colon = e.find(':');
            if (gt == std::string::npos || colon == std::string::npos || colon < gt) {
              throw ConfigError(line_no, "edge must look like in>out:order, got '" + e + "'");
            }
            L.edges.push_back({detail::parse_int(e.substr(0, gt), line_no, "edge"),
                               detail::parse_int(e.substr(gt + 1, colon - gt - 1), line_no, "edge"),
                               detail::parse_int(e.substr(colon + 1), line_no, "edge")});
          }
        }
      } else if (d == "crelu" || d == "cbn" || d == "readout" || d == "relu" || d == "bn") {
        kv.only({});
        L.kind = d == "crelu" ? LayerKind::CReLU
                 : d == "cbn" ? LayerKind::CBatchNorm
                 : d == "relu" ? LayerKind::ReLU
                 : d == "bn"   ? LayerKind::BatchNorm
                               : LayerKind::Readout;
      } else if (d == "meanpool" || d == "maxpool") {
        kv.only({"window", "stride", "blur"});
        L.kind = d == "meanpool" ? LayerKind::MeanPool : LayerKind::MaxPool;
        L.window = kv.integer("window");
        L.stride = kv.integer("stride", L.window);
        if (L.window < 1 || L.stride < 1) throw ConfigError(line_no, "window and stride must be >= 1");
        const std::string blur = kv.get("blur", d == "meanpool" ? "auto" : "none");
        double sigma = 0.0;
        if (blur == "auto") sigma = L.stride > 1 ? 0.5 * L.stride : 0.0;
        else if (blur != "none") sigma = detail::parse_double(blur, line_no, "blur");
        if (sigma > 0.0) {
          LayerSpec B;
          B.kind = LayerKind::Blur;
          B.sigma = sigma;
          B.line = line_no;
          g.layers.push_back(B);
        }
      } else if (d == "blur") {
        kv.only({"sigma"});
        L.kind = LayerKind::Blur;
        L.sigma = kv.number("sigma", 0.0);
        if (L.sigma < 0) throw ConfigError(line_no, "blur sigma must be >= 0");
      } else if (d == "conv") {
        kv.only({"channels", "kernel", "pad"});
        L.kind = LayerKind::Conv;
        L.channels = kv.integer("channels");
        L.kernel = kv.integer("kernel", 3);
        const std::string pad = kv.get("pad", "same");
        if (pad != "same" && pad != "valid") throw ConfigError(line_no, "pad must be same or valid");
        L.padding = pad == "same" ? Padding::Same : Padding::Valid;
        if (L.kernel < 1) throw ConfigError(line_no, "conv kernel must be positive");
      } else {
        throw ConfigError(line_no, "unknown directive '" + d + "'");
      }
      if ((L.kind == LayerKind::HConv || L.kind == LayerKind::Conv) && L.channels < 1) {
        throw ConfigError(line_no, "channels must be positive");
      }
      g.layers.push_back(L);
    }
  }
  if (g.layers.empty()) throw ConfigError(0, "config declares no layers");
  if (g.layers.back().kind != LayerKind::Readout) throw ConfigError(g.layers.back().line, "last layer must be readout");

  // resolve stream orders and default edges
  std::vector<int> current{0};
  for (auto& L : g.layers) {
    if (L.kind != LayerKind::HConv) continue;
    if (L.out_orders.empty()) L.out_orders = g.stream_orders;
    if (L.edges.empty()) L.edges = default_edges(current, L.out_orders);
    current = L.out_orders;
  }
  return g;
}

inline std::string layer_label(const NetworkGraph& g, std::size_t i) {
  return "layer " + std::to_string(i) + " (" + layer_name(g.layers[i].kind) +
         (g.layers[i].line > 0 ? ", line " + std::to_string(g.layers[i].line) : "") + ")";
}

/// Activation extents at every layer boundary (size layers + 1). Throws
/// std::invalid_argument naming the offending layer.
inline std::vector<ActivationInfo> infer_shapes(const NetworkGraph& g) {
  std::vector<ActivationInfo> out;
  ActivationInfo a;
  a.h = g.height;
  a.w = g.width;
  a.complex = g.harmonic();
  a.orders = {0};
  a.channels = g.in_channels;
  out.push_back(a);
  for (std::size_t i = 0; i < g.layers.size(); ++i) {
    const auto& L = g.layers[i];
    auto fail = [&](const std::string& msg) { throw std::invalid_argument(layer_label(g, i) + ": " + msg); };
    const bool complex_layer = L.kind == LayerKind::HConv || L.kind == LayerKind::CReLU ||
                               L.kind == LayerKind::CBatchNorm;
    const bool real_layer = L.kind == LayerKind::Conv || L.kind == LayerKind::ReLU ||
                            L.kind == LayerKind::BatchNorm || L.kind == LayerKind::MaxPool;
    if (complex_layer && !a.complex) fail("needs complex input");
    if (real_layer && a.complex) fail("needs real input");
    switch (L.kind) {
      case LayerKind::HConv: {
        for (const auto& e : L.edges) {
          if (stream_index(a.orders, e.in_order) < 0) {
            fail("edge from stream " + std::to_string(e.in_order) + " which is not present");
          }
          if (stream_index(L.out_orders, e.out_order) < 0) {
            fail("edge into stream " + std::to_string(e.out_order) + " which is not declared");
          }
        }
        if (L.kernel > a.h + 2 * ((L.kernel - 1) / 2)) fail("kernel larger than padded input");
        a.orders = L.out_orders;
        a.channels = L.channels;
        break;
      }
      case LayerKind::Conv: {
        const auto geo = ConvGeometry::make(L.kernel, L.padding);
        const int h = geo.out_size(a.h), w = geo.out_size(a.w);
        if (h < 1 || w < 1) fail("kernel larger than input");
        a.h = h;
        a.w = w;
        a.channels = L.channels;
        break;
      }
      case LayerKind::MeanPool:
      case LayerKind::MaxPool: {
        if (L.window > a.h || L.window > a.w) fail("window larger than map");
        a.h = pooled_size(a.h, L.window, L.stride);
        a.w = pooled_size(a.w, L.window, L.stride);
        break;
      }
      case LayerKind::Readout: {
        if (a.complex && stream_index(a.orders, g.target_order) < 0) {
          fail("no stream of target order " + std::to_string(g.target_order));
        }
        if (a.channels != g.n_classes) {
          fail("has " + std::to_string(a.channels) + " channels, expected " + std::to_string(g.n_classes) +
               " classes");
        }
        if (i + 1 != g.layers.size()) fail("readout must be the last layer");
        a.h = 1;
        a.w = 1;
        a.complex = false;
        a.orders.clear();
        break;
      }
      default:
        break;
    }
    out.push_back(a);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Equivariance condition

struct EdgeRef {
  int layer = 0;  // index into graph.layers
  int edge = 0;   // index into that layer's edges

  bool operator==(const EdgeRef&) const = default;
  auto operator<=>(const EdgeRef&) const = default;
};

using OrderPath = std::vector<EdgeRef>;

struct OrderReport {
  std::vector<OrderPath> violations;  // paths whose order sum != M
  std::vector<EdgeRef> mislabeled;    // edges with filter order != out - in

  bool ok() const { return violations.empty(); }
};

/// Finds every input-to-readout path whose filter orders do not sum to the
/// target order. Throws std::invalid_argument when a stream has no incoming
/// path or the readout stream is unreachable.
inline OrderReport validate_orders(const NetworkGraph& g) {
  OrderReport rep;
  std::vector<int> blocks;
  for (std::size_t i = 0; i < g.layers.size(); ++i)
    if (g.layers[i].kind == LayerKind::HConv) blocks.push_back(static_cast<int>(i));
  if (blocks.empty()) return rep;

  // structural connectivity
  std::vector<int> current{0};
  for (int b : blocks) {
    const auto& L = g.layers[b];
    for (std::size_t e = 0; e < L.edges.size(); ++e) {
      const auto& E = L.edges[e];
      if (stream_index(current, E.in_order) < 0) {
        throw std::invalid_argument(layer_label(g, b) + ": edge from unreachable stream " +
                                    std::to_string(E.in_order));
      }
      if (stream_index(L.out_orders, E.out_order) < 0) {
        throw std::invalid_argument(layer_label(g, b) + ": edge into undeclared stream " +
                                    std::to_string(E.out_order));
      }
      if (E.filter_order != E.out_order - E.in_order) rep.mislabeled.push_back({b, static_cast<int>(e)});
    }
    for (int p : L.out_orders) {
      const bool fed = std::any_of(L.edges.begin(), L.edges.end(), [&](const StreamEdge& E) { return E.out_order == p; });
      if (!fed) throw std::invalid_argument(layer_label(g, b) + ": stream " + std::to_string(p) + " has no input");
    }
    current = L.out_orders;
  }
  if (stream_index(current, g.target_order) < 0) {
    throw std::invalid_argument("readout stream " + std::to_string(g.target_order) + " is not produced");
  }

  // suffix[b][stream] = set of order sums from that stream (entering block b) to the readout
  const int B = static_cast<int>(blocks.size());
  std::vector<std::map<int, std::set<int>>> suffix(B + 1);
  suffix[B][g.target_order] = {0};
  for (int bi = B - 1; bi >= 0; --bi) {
    for (const auto& E : g.layers[blocks[bi]].edges) {
      const auto it = suffix[bi + 1].find(E.out_order);
      if (it == suffix[bi + 1].end()) continue;
      for (int s : it->second) suffix[bi][E.in_order].insert(s + E.filter_order);
    }
  }

  // depth-first enumeration, pruning branches whose completions all sum to M
  OrderPath path;
  std::function<void(int, int, int)> walk = [&](int bi, int stream, int sum) {
    if (bi == B) {
      if (stream == g.target_order && sum != g.target_order) rep.violations.push_back(path);
      return;
    }
    const auto it = suffix[bi].find(stream);
    if (it == suffix[bi].end()) return;
    if (std::all_of(it->second.begin(), it->second.end(), [&](int s) { return sum + s == g.target_order; })) return;
    const auto& L = g.layers[blocks[bi]];
    for (std::size_t e = 0; e < L.edges.size(); ++e) {
      if (L.edges[e].in_order != stream) continue;
      path.push_back({blocks[bi], static_cast<int>(e)});
      walk(bi + 1, L.edges[e].out_order, sum + L.edges[e].filter_order);
      path.pop_back();
    }
  };
  walk(0, 0, 0);
  return rep;
}

// ---------------------------------------------------------------------------
// Parameter accounting

/// Learnable scalars of one layer given its input extent.
inline std::int64_t layer_parameter_count(const LayerSpec& L, const ActivationInfo& in, const NetworkGraph& g) {
  const std::int64_t S = static_cast<std::int64_t>(in.orders.size());
  switch (L.kind) {
    case LayerKind::HConv: {
      const auto part = ring_partition(L.kernel);
      std::int64_t n = 0;
      const std::int64_t pairs = static_cast<std::int64_t>(in.channels) * L.channels;
      for (int a : bank_orders(L.edges)) {
        n += effective_radial_size(a, part) * pairs;
        if (L.phase) n += pairs;
      }
      return n;
    }
    case LayerKind::CReLU:
    case LayerKind::CBatchNorm: return S * in.channels;
    case LayerKind::Conv: return static_cast<std::int64_t>(L.kernel) * L.kernel * in.channels * L.channels;
    case LayerKind::ReLU:
    case LayerKind::BatchNorm: return in.channels;
    case LayerKind::Readout: return g.n_classes;
    default: return 0;
  }
}

inline std::int64_t count_parameters(const NetworkGraph& g) {
  const auto shapes = infer_shapes(g);
  std::int64_t total = 0;
  for (std::size_t i = 0; i < g.layers.size(); ++i) total += layer_parameter_count(g.layers[i], shapes[i], g);
  return total;
}

/// H-Net channels giving the cost of an i_Z-channel CNN with f streams in and
/// out: i_H = i_Z / (2 f).
inline int channel_budget(int cnn_channels, int n_orders) {
  if (cnn_channels < 1 || n_orders < 1) throw std::invalid_argument("channel_budget: arguments must be positive");
  const int d = 2 * n_orders;
  if (cnn_channels % d != 0) {
    const int lo = cnn_channels / d, hi = lo + 1;
    std::string msg = "channel_budget: " + std::to_string(cnn_channels) + " is not divisible by " + std::to_string(d) +
                      "; nearest choices: ";
    if (lo > 0) msg += std::to_string(lo) + " (i_Z=" + std::to_string(lo * d) + ") or ";
    msg += std::to_string(hi) + " (i_Z=" + std::to_string(hi * d) + ")";
    throw std::invalid_argument(msg);
  }
  return cnn_channels / d;
}

}  // namespace hnet
