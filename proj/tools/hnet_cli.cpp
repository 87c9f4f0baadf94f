// hnet: train, evaluate and probe harmonic networks.
//
// Exit codes: 0 ok, 2 config error, 3 validation error, 4 runtime error.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "hnet/hnet.hpp"

#ifndef HNET_VERSION
#define HNET_VERSION "unknown"
#endif

namespace fs = std::filesystem;
using namespace hnet;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitValidation = 3;
constexpr int kExitRuntime = 4;

struct Exit {
  int code;
  std::string message;
};

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Exit{kExitConfig, "cannot read config '" + path + "'"};
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void require_file(const std::string& path, const std::string& flag) {
  if (path.empty()) throw Exit{kExitConfig, flag + " is required"};
  if (!fs::is_regular_file(path)) throw Exit{kExitConfig, flag + ": no such file '" + path + "'"};
}

void check_orders(const NetworkGraph& g) {
  OrderReport rep;
  try {
    rep = validate_orders(g);
  } catch (const std::invalid_argument& e) {
    throw Exit{kExitValidation, std::string("order validation: ") + e.what()};
  }
  if (!rep.ok()) {
    std::ostringstream msg;
    msg << "equivariance condition violated on " << rep.violations.size() << " path(s)";
    for (const auto& e : rep.mislabeled) {
      const auto& E = g.layers[e.layer].edges[e.edge];
      msg << "\n  " << layer_label(g, e.layer) << ": edge " << E.in_order << ">" << E.out_order << " has order "
          << E.filter_order;
    }
    throw Exit{kExitValidation, msg.str()};
  }
}

NetworkGraph load_graph(const std::string& path) {
  NetworkGraph g;
  try {
    g = parse_config(read_text(path));
    infer_shapes(g);
  } catch (const ConfigError& e) {
    throw Exit{kExitConfig, path + ": " + e.what()};
  } catch (const std::invalid_argument& e) {
    throw Exit{kExitConfig, path + ": " + e.what()};
  }
  check_orders(g);
  return g;
}

std::vector<double> parse_doubles(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  for (std::string tok; std::getline(ss, tok, ',');) {
    if (tok.empty()) continue;
    try {
      out.push_back(std::stod(tok));
    } catch (const std::exception&) {
      throw Exit{kExitConfig, "not a number: '" + tok + "'"};
    }
  }
  return out;
}

std::vector<int> parse_ints(const std::string& s) {
  std::vector<int> out;
  for (double v : parse_doubles(s)) {
    if (v != static_cast<int>(v)) throw Exit{kExitConfig, "expected integers, got " + s};
    out.push_back(static_cast<int>(v));
  }
  return out;
}

std::string join(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Exit{kExitRuntime, "cannot write " + p.string()};
  out << text;
}

// ---------------------------------------------------------------------------
// shared options

struct DataOptions {
  std::string data;
  std::string test_data;
  int train_size = 0;  // 0 = all
  int val_size = -1;   // -1 = 2000 for the canonical 12000-row file, else 20%
};

struct Splits {
  Dataset train;
  Dataset val;
};

Splits load_splits(const DataOptions& o, std::uint64_t seed) {
  Dataset all;
  try {
    all = load_amat(o.data);
  } catch (const ParseError& e) {
    throw Exit{kExitConfig, e.what()};
  }
  int val = o.val_size;
  if (val < 0) val = all.size() == 12000 ? 2000 : all.size() / 5;
  if (val >= all.size()) throw Exit{kExitConfig, "validation split leaves no training rows"};
  auto sp = split_train_val(all, all.size() - val);
  Splits s{std::move(sp.train), std::move(sp.val)};
  if (o.train_size > 0 && o.train_size < s.train.size()) {
    s.train = subsample_count(s.train, o.train_size, seed);
  }
  return s;
}

Dataset load_test(const std::string& path) {
  try {
    auto d = load_amat(path, Split::Test);
    return d;
  } catch (const ParseError& e) {
    throw Exit{kExitConfig, e.what()};
  }
}

// ---------------------------------------------------------------------------
// train

struct TrainOptions {
  std::string config;
  DataOptions data;
  std::string out = "out";
  std::string resume;
  std::string precision = "float";
  std::uint64_t seed = 0;
  TrainConfig train;
};

template <class T>
int run_train(const TrainOptions& o, const NetworkGraph& graph) {
  auto splits = load_splits(o.data, o.seed);
  std::optional<Dataset> test;
  if (!o.data.test_data.empty()) test = load_test(o.data.test_data);

  Model<T> model(graph, o.seed);
  OptimState state;
  if (!o.resume.empty()) {
    auto loaded = load_model<T>(o.resume);
    if (loaded.model.graph().source != graph.source) throw Exit{kExitConfig, "--resume model was built from a different config"};
    model = std::move(loaded.model);
    if (loaded.has_optim) state = loaded.optim;
  }
  fs::create_directories(o.out);
  TrainConfig cfg = o.train;
  cfg.seed = o.seed;
  std::vector<EpochLog> log;
  const auto t0 = std::chrono::steady_clock::now();
  log = train(model, splits.train, &splits.val, cfg, state, [&](const EpochLog& e) {
    const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::fprintf(stderr, "epoch %3d  loss %.4f  val_acc %.4f  lr %.2e  (%.0f s)\n", e.epoch, e.train_loss, e.val_acc,
                 e.lr, sec);
  });
  save_model((fs::path(o.out) / "model.hnet").string(), model, &state);
  write_file(fs::path(o.out) / "metrics.csv", metrics_csv(log));

  std::ostringstream manifest;
  manifest << "version " << HNET_VERSION << "\nseed " << o.seed << "\nprecision " << o.precision << "\nlr " << cfg.lr
           << "\nbatch " << cfg.batch_size << "\nepochs " << cfg.epochs
           << "\nrecalibrate_rows " << cfg.recalibrate_rows << "\ntrain_rows " << splits.train.size()
           << "\nval_rows " << splits.val.size() << "\ndata " << o.data.data << "\nparameters "
           << model.params().scalar_count() << "\n--- config ---\n"
           << graph.source;
  write_file(fs::path(o.out) / "manifest.txt", manifest.str());
  if (test) {
    const auto r = evaluate(model, *test);
    std::printf("test_error %.4f\n", r.error_percent());
  }
  return 0;
}

// ---------------------------------------------------------------------------
// eval

template <class T>
std::string eval_report(Model<T>& model, const Dataset& d, std::string* confusion_csv) {
  const auto r = evaluate(model, d);
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(4);
  out << "samples " << r.total << "\ncorrect " << r.correct << "\ntest_error_percent " << r.error_percent() << "\n";
  std::ostringstream c;
  c << "true\\pred";
  for (std::size_t j = 0; j < r.confusion.size(); ++j) c << ',' << j;
  c << '\n';
  for (std::size_t i = 0; i < r.confusion.size(); ++i) {
    c << i;
    for (int v : r.confusion[i]) c << ',' << v;
    c << '\n';
  }
  *confusion_csv = c.str();
  return out.str();
}

LoadedModel<double> open_model(const std::string& path) {
  require_file(path, "--model");
  try {
    auto m = load_model<double>(path);
    check_orders(m.model.graph());
    return m;
  } catch (const ConfigError& e) {
    throw Exit{kExitConfig, path + ": embedded config: " + e.what()};
  }
}

// ---------------------------------------------------------------------------
// probes

struct ProbeOptions {
  std::string model;
  std::string m = "1";
  int thetas = 16;
  double tol = 0.03;
  double phase_tol = 0.1;
  std::uint64_t seed = 1;
  int layer = -1;
  std::string index = "0,0";
  std::string out;
  ProbeSettings settings;
};

/// Kernel under test: a model filter (layer / channel pair) or a smooth
/// synthetic filter.
ComplexKernel probe_kernel(const ProbeOptions& o, int m, std::uint64_t salt) {
  if (o.model.empty()) {
    const auto plan = build_resampling_plan(ring_partition(o.settings.kernel_size));
    std::mt19937_64 rng(o.seed * 1000003ULL + salt);
    const double beta = std::uniform_real_distribution<double>(0.0, 2.0 * std::numbers::pi)(rng);
    return smooth_filter(m, o.settings.kernel_size, o.settings.filter_scale, beta, plan);
  }
  auto loaded = open_model(o.model);
  auto& model = loaded.model;
  const auto& g = model.graph();
  int layer = o.layer;
  if (layer < 0) {
    for (std::size_t i = 0; i < g.layers.size(); ++i)
      if (g.layers[i].kind == LayerKind::HConv) {
        layer = static_cast<int>(i);
        break;
      }
  }
  if (layer < 0 || layer >= static_cast<int>(g.layers.size()) || g.layers[layer].kind != LayerKind::HConv) {
    throw Exit{kExitConfig, "--layer does not name a harmonic layer"};
  }
  const auto bo = bank_orders(g.layers[layer].edges);
  const int a = std::abs(m);
  if (std::find(bo.begin(), bo.end(), a) == bo.end()) {
    throw Exit{kExitConfig, "layer " + std::to_string(layer) + " has no filters of order " + std::to_string(m)};
  }
  const auto idx = parse_ints(o.index);
  const int cin = model.shapes()[layer].channels, cout = g.layers[layer].channels;
  if (idx.size() != 2 || idx[0] < 0 || idx[0] >= cin || idx[1] < 0 || idx[1] >= cout) {
    throw Exit{kExitConfig, "--index must be 'in,out' within the layer's channels"};
  }
  const auto radial = model.params().value(detail::slot_name(layer, "hconv.radial.m" + std::to_string(a)));
  std::vector<double> ph;
  if (g.layers[layer].phase) {
    const auto p = model.params().value(detail::slot_name(layer, "hconv.phase.m" + std::to_string(a)));
    ph.assign(p.begin(), p.end());
  }
  auto bank = synthesize_bank<double>(model.basis(layer, a), cin, cout, radial, ph);
  if (m < 0) bank = bank.conjugate();
  ComplexKernel w(bank.kernel_size);
  for (int t = 0; t < w.kernel_size * w.kernel_size; ++t) {
    w.re[t] = bank.re[bank.index(t, idx[0], idx[1])];
    w.im[t] = bank.im[bank.index(t, idx[0], idx[1])];
  }
  return w;
}

std::string report_csv(const RotationProbeReport& r) {
  std::ostringstream out;
  out.precision(12);
  out << "theta,magnitude,normalized_magnitude,phase,phase_residual\n";
  for (std::size_t i = 0; i < r.thetas.size(); ++i) {
    const double res = wrap_angle(r.phases[i] - r.phases[0] - r.m * r.thetas[i]);
    out << r.thetas[i] << ',' << r.magnitudes[i] << ',' << r.magnitudes[i] / r.magnitudes[0] << ',' << r.phases[i]
        << ',' << res << '\n';
  }
  return out.str();
}

int run_equivariance(const ProbeOptions& o) {
  if (o.thetas < 4) throw Exit{kExitConfig, "--thetas must be >= 4"};
  const auto orders = parse_ints(o.m);
  if (orders.empty() || orders.size() > 2) throw Exit{kExitConfig, "--m takes one order or a chain m1,m2"};
  if (orders.size() == 2 && !o.model.empty()) throw Exit{kExitConfig, "chains are probed on synthetic filters only"};
  const int k = o.model.empty() ? o.settings.kernel_size : probe_kernel(o, orders[0], 0).kernel_size;
  const auto patches = make_probe_patches(k, o.settings.patches, o.seed, o.settings.lowpass_sigma);
  const auto thetas = probe_thetas(o.thetas);
  RotationProbeReport rep;
  if (orders.size() == 1) {
    rep = probe_filter(probe_kernel(o, orders[0], 0), orders[0], thetas, patches);
  } else {
    rep = probe_chain(probe_kernel(o, orders[0], 1), orders[0], probe_kernel(o, orders[1], 2), orders[1], thetas,
                      patches);
  }
  const bool pass = rep.within(o.tol, o.phase_tol);
  std::printf("m %s\nexpected_order %d\nmax_magnitude_deviation %.6f\nmax_phase_residual %.6f\nfitted_slope %.6f\n%s\n",
              join(orders).c_str(), rep.m, rep.max_magnitude_deviation, rep.max_phase_residual, rep.fitted_slope,
              pass ? "PASS" : "FAIL");
  if (!o.out.empty()) {
    fs::create_directories(o.out);
    write_file(fs::path(o.out) / ("equivariance_m" + join(orders) + ".csv"), report_csv(rep));
  }
  return pass ? 0 : kExitValidation;
}

int run_stability(const ProbeOptions& o) {
  const auto orders = parse_ints(o.m);
  if (orders.empty()) throw Exit{kExitConfig, "--m needs at least one order"};
  if (o.thetas < 4) throw Exit{kExitConfig, "--thetas must be >= 4"};
  const auto thetas = probe_thetas(o.thetas);
  std::ostringstream csv;
  csv.precision(12);
  csv << "m,theta,normalized_magnitude,phase_residual\n";
  bool pass = true;
  for (int m : orders) {
    const auto w = probe_kernel(o, m, 10 + m);
    const auto patches = make_probe_patches(w.kernel_size, o.settings.patches, o.seed, o.settings.lowpass_sigma);
    const auto rep = probe_filter(w, m, thetas, patches);
    for (std::size_t i = 0; i < thetas.size(); ++i) {
      csv << m << ',' << thetas[i] << ',' << rep.magnitudes[i] / rep.magnitudes[0] << ','
          << wrap_angle(rep.phases[i] - rep.phases[0] - m * thetas[i]) << '\n';
    }
    std::printf("m %d  max_magnitude_deviation %.6f  max_phase_residual %.6f\n", m, rep.max_magnitude_deviation,
                rep.max_phase_residual);
    pass = pass && rep.within(o.tol, o.phase_tol);
  }
  if (!o.out.empty()) {
    fs::create_directories(o.out);
    write_file(fs::path(o.out) / "stability.csv", csv.str());
  } else {
    std::cout << csv.str();
  }
  return pass ? 0 : kExitValidation;
}

// ---------------------------------------------------------------------------
// ablation

struct AblateOptions {
  std::string config;
  DataOptions data;
  std::string fractions = "0.05,0.1,0.2,0.5,1";
  std::string seeds = "1,2,3";
  std::string out = "out";
  int test_size = 0;
  TrainConfig train;
};

int run_ablate(const AblateOptions& o, const NetworkGraph& graph) {
  const auto fractions = parse_doubles(o.fractions);
  for (double f : fractions)
    if (!(f > 0 && f <= 1)) throw Exit{kExitConfig, "--fractions must lie in (0, 1]"};
  const auto seeds = parse_ints(o.seeds);
  auto splits = load_splits(o.data, 0);
  Dataset test = load_test(o.data.test_data);
  if (o.test_size > 0) test = subsample_count(test, o.test_size, 0);
  fs::create_directories(o.out);
  struct Row {
    double fraction;
    int seed;
    int n;
    double acc;
  };
  std::vector<Row> rows;
  for (double f : fractions)
    for (int s : seeds) {
      Dataset sub;
      try {
        sub = subsample(splits.train, f, static_cast<std::uint64_t>(s));
      } catch (const std::invalid_argument& e) {
        throw Exit{kExitConfig, e.what()};
      }
      Model<float> model(graph, static_cast<std::uint64_t>(s));
      TrainConfig cfg = o.train;
      cfg.seed = static_cast<std::uint64_t>(s);
      OptimState st;
      train(model, sub, &splits.val, cfg, st);
      const double acc = evaluate(model, test).accuracy();
      std::fprintf(stderr, "fraction %.3f seed %d: %d rows, test_acc %.4f\n", f, s, sub.size(), acc);
      rows.push_back({f, s, sub.size(), acc});
    }
  double best = 0.0;
  for (const auto& r : rows) best = std::max(best, r.acc);
  std::ostringstream csv;
  csv.precision(10);
  csv << "fraction,seed,train_rows,test_acc,normalized_acc\n";
  for (const auto& r : rows) {
    csv << r.fraction << ',' << r.seed << ',' << r.n << ',' << r.acc << ',' << (best > 0 ? r.acc / best : 0.0) << '\n';
  }
  write_file(fs::path(o.out) / "ablation.csv", csv.str());
  std::cout << csv.str();
  return 0;
}

// ---------------------------------------------------------------------------
// dump

struct DumpOptions {
  std::string model;
  std::string what = "filters";
  std::string data;
  int index = 0;
  int layer = -1;
  std::string out = "out";
};

int run_dump(const DumpOptions& o) {
  auto loaded = open_model(o.model);
  auto& model = loaded.model;
  fs::create_directories(o.out);
  std::vector<std::string> files;
  if (o.what == "filters" || o.what == "phase-hist") {
    files = dump_filters(model, o.out);
    if (o.what == "phase-hist") {
      for (const auto& f : files)
        if (f != "phase_hist.csv") fs::remove(fs::path(o.out) / f);
      files = {"phase_hist.csv"};
    }
  } else if (o.what == "features") {
    require_file(o.data, "--data");
    Dataset d;
    try {
      d = load_amat(o.data);
    } catch (const ParseError& e) {
      throw Exit{kExitConfig, e.what()};
    }
    if (o.index < 0 || o.index >= d.size()) throw Exit{kExitConfig, "--index out of range"};
    const auto x = d.batch<double>({o.index});
    std::vector<std::size_t> boundaries;
    if (o.layer >= 0) {
      boundaries.push_back(static_cast<std::size_t>(o.layer));
    } else {
      for (std::size_t i = 1; i < model.shapes().size(); ++i)
        if (model.shapes()[i].complex) boundaries.push_back(i);
    }
    for (auto b : boundaries) {
      try {
        auto f = dump_features(model, x, b, o.out);
        auto r = dump_features(model, rotate_batch(x, 0.5 * std::numbers::pi), b, o.out, "features_rot90");
        files.insert(files.end(), f.begin(), f.end());
        files.insert(files.end(), r.begin(), r.end());
      } catch (const std::invalid_argument& e) {
        throw Exit{kExitConfig, e.what()};
      }
    }
    std::vector<double> digit(x.data.begin(), x.data.end());
    write_pgm((fs::path(o.out) / "input.pgm").string(), digit, x.shape.h, x.shape.w, 0.0, 1.0);
    files.push_back("input.pgm");
  } else if (o.what == "digits") {
    require_file(o.data, "--data");
    const auto d = load_amat(o.data);
    std::vector<std::vector<double>> tiles;
    for (int i = 0; i < std::min(10, d.size()); ++i) tiles.emplace_back(d.image(i), d.image(i) + 28 * 28);
    int H = 0, W = 0;
    const auto img = tile(tiles, 1, static_cast<int>(tiles.size()), 28, 28, 0.5, &H, &W);
    write_pgm((fs::path(o.out) / "digits.pgm").string(), img, H, W, 0.0, 1.0);
    std::ostringstream labels;
    for (int i = 0; i < std::min(10, d.size()); ++i) labels << d.labels[i] << '\n';
    write_file(fs::path(o.out) / "digits_labels.txt", labels.str());
    files = {"digits.pgm", "digits_labels.txt"};
  } else {
    throw Exit{kExitConfig, "--what must be filters, features, phase-hist or digits"};
  }
  for (const auto& f : files) std::printf("%s\n", (fs::path(o.out) / f).string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Harmonic network training, evaluation and rotation probes"};
  app.require_subcommand(1);
  app.set_version_flag("--version", HNET_VERSION);

  TrainOptions tr;
  auto* train_cmd = app.add_subcommand("train", "train a model and write model.hnet, metrics.csv, manifest.txt");
  train_cmd->add_option("--config", tr.config, "network config")->required();
  train_cmd->add_option("--data", tr.data.data, "training amat (train + validation rows)")->required();
  train_cmd->add_option("--test-data", tr.data.test_data, "optional test amat, evaluated after training");
  train_cmd->add_option("--out", tr.out, "output directory");
  train_cmd->add_option("--seed", tr.seed, "initialization and shuffling seed");
  train_cmd->add_option("--lr", tr.train.lr, "initial learning rate");
  train_cmd->add_option("--batch", tr.train.batch_size, "minibatch size")->check(CLI::PositiveNumber);
  train_cmd->add_option("--epochs", tr.train.epochs, "epoch budget")->check(CLI::NonNegativeNumber);
  train_cmd->add_option("--train-size", tr.data.train_size, "stratified training subset size (0 = all)");
  train_cmd->add_option("--val-size", tr.data.val_size, "trailing rows held out for validation");
  train_cmd->add_option("--recalibrate-rows", tr.train.recalibrate_rows,
                        "rows used to re-estimate normalization statistics after each epoch (0 = off)")
      ->check(CLI::NonNegativeNumber);
  train_cmd->add_option("--precision", tr.precision, "float or double")->check(CLI::IsMember({"float", "double"}));
  train_cmd->add_option("--resume", tr.resume, "continue from a saved model (same config)");

  std::string eval_model, eval_data, eval_out;
  auto* eval_cmd = app.add_subcommand("eval", "report test error of a saved model");
  eval_cmd->add_option("--model", eval_model)->required();
  eval_cmd->add_option("--data", eval_data)->required();
  eval_cmd->add_option("--out", eval_out, "write eval.txt and confusion.csv here");

  ProbeOptions eq;
  auto* eq_cmd = app.add_subcommand("equivariance", "check resp(theta) = exp(i m theta) resp(0) on rotated patches");
  auto add_probe = [](CLI::App* c, ProbeOptions& o) {
    c->add_option("--model", o.model, "take the filter from a saved model instead of a synthetic one");
    c->add_option("--m", o.m, "rotation order; 'm1,m2' probes a two-layer chain");
    c->add_option("--thetas", o.thetas, "number of equally spaced angles");
    c->add_option("--tol", o.tol, "relative magnitude tolerance");
    c->add_option("--phase-tol", o.phase_tol, "phase tolerance in radians");
    c->add_option("--seed", o.seed, "patch and filter seed");
    c->add_option("--layer", o.layer, "harmonic layer index (model filters)");
    c->add_option("--index", o.index, "'in,out' channel pair (model filters)");
    c->add_option("--kernel", o.settings.kernel_size, "synthetic filter size");
    c->add_option("--patches", o.settings.patches, "number of random patches");
    c->add_option("--lowpass", o.settings.lowpass_sigma, "patch low-pass sigma");
    c->add_option("--out", o.out, "write the per-angle CSV here");
  };
  add_probe(eq_cmd, eq);

  ProbeOptions st;
  st.m = "0,1,2";
  st.thetas = 72;
  auto* st_cmd = app.add_subcommand("stability", "response magnitude against input rotation angle");
  add_probe(st_cmd, st);

  AblateOptions ab;
  auto* ab_cmd = app.add_subcommand("ablate", "train on stratified fractions of the data and report test accuracy");
  ab_cmd->add_option("--config", ab.config)->required();
  ab_cmd->add_option("--data", ab.data.data)->required();
  ab_cmd->add_option("--test-data", ab.data.test_data)->required();
  ab_cmd->add_option("--fractions", ab.fractions);
  ab_cmd->add_option("--seeds", ab.seeds);
  ab_cmd->add_option("--seed", ab.seeds, "alias of --seeds");
  ab_cmd->add_option("--out", ab.out);
  ab_cmd->add_option("--lr", ab.train.lr);
  ab_cmd->add_option("--batch", ab.train.batch_size)->check(CLI::PositiveNumber);
  ab_cmd->add_option("--epochs", ab.train.epochs);
  ab_cmd->add_option("--val-size", ab.data.val_size);
  ab_cmd->add_option("--test-size", ab.test_size, "stratified test subset size (0 = all)");

  DumpOptions dp;
  auto* dump_cmd = app.add_subcommand("dump", "write filter, phase-histogram or feature-map dumps");
  dump_cmd->add_option("--model", dp.model)->required();
  dump_cmd->add_option("--what", dp.what, "filters | phase-hist | features | digits");
  dump_cmd->add_option("--data", dp.data, "amat file for features / digits");
  dump_cmd->add_option("--index", dp.index, "row of --data to dump features for");
  dump_cmd->add_option("--layer", dp.layer, "layer boundary (default: every complex one)");
  dump_cmd->add_option("--out", dp.out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitConfig;
  }

  try {
    if (*train_cmd) {
      const auto g = load_graph(tr.config);
      require_file(tr.data.data, "--data");
      if (!tr.data.test_data.empty()) require_file(tr.data.test_data, "--test-data");
      if (!tr.resume.empty()) require_file(tr.resume, "--resume");
      return tr.precision == "double" ? run_train<double>(tr, g) : run_train<float>(tr, g);
    }
    if (*eval_cmd) {
      require_file(eval_data, "--data");
      auto loaded = open_model(eval_model);
      const auto d = load_test(eval_data);
      std::string confusion;
      const auto report = eval_report(loaded.model, d, &confusion);
      std::cout << report;
      if (!eval_out.empty()) {
        fs::create_directories(eval_out);
        write_file(fs::path(eval_out) / "eval.txt", report);
        write_file(fs::path(eval_out) / "confusion.csv", confusion);
      }
      return 0;
    }
    if (*eq_cmd) return run_equivariance(eq);
    if (*st_cmd) return run_stability(st);
    if (*ab_cmd) {
      const auto g = load_graph(ab.config);
      require_file(ab.data.data, "--data");
      require_file(ab.data.test_data, "--test-data");
      return run_ablate(ab, g);
    }
    if (*dump_cmd) return run_dump(dp);
  } catch (const Exit& e) {
    std::cerr << "hnet: " << e.message << "\n";
    return e.code;
  } catch (const ConfigError& e) {
    std::cerr << "hnet: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "hnet: " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}
