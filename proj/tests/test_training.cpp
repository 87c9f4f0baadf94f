#include <doctest.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>

#include "hnet/hnet.hpp"
#include "support.hpp"

using namespace hnet;
using test::network_gradient_error;

namespace {

std::string read_config(const std::string& name) {
  std::ifstream in(std::string(HNET_SOURCE_DIR) + "/configs/" + name);
  REQUIRE(in.good());
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

/// Random 8x8 or 28x28 images with labels cycling through the classes.
Dataset random_dataset(int n, int side, int classes, std::uint64_t seed) {
  Dataset d;
  d.height = d.width = side;
  const auto px = test::random_vector(static_cast<std::size_t>(n) * side * side, seed, 0.0, 1.0);
  d.images.assign(px.begin(), px.end());
  for (int i = 0; i < n; ++i) d.labels.push_back(i % classes);
  return d;
}

template <class T>
std::vector<T> parameter_bytes(const Model<T>& m) {
  std::vector<T> out;
  for (const auto& s : m.params().slots()) out.insert(out.end(), s.value.begin(), s.value.end());
  return out;
}

}  // namespace

TEST_CASE("cross entropy") {
  SUBCASE("uniform logits") {
    Tensor<double> z({2, 1, 1, 10}, 0.7);
    const std::vector<int> lab{3, 9};
    CHECK(cross_entropy(z, std::span<const int>(lab)) == doctest::Approx(std::log(10.0)).epsilon(1e-14));
  }
  SUBCASE("large margin") {
    Tensor<double> z({1, 1, 1, 10});
    z.data[4] = 800.0;
    const std::vector<int> lab{4};
    CHECK(cross_entropy(z, std::span<const int>(lab)) == 0.0);
  }
  SUBCASE("random logits against direct summation") {
    const auto z = test::random_tensor({20, 1, 1, 10}, 3, -5.0, 5.0);
    std::vector<int> lab;
    double expect = 0.0;
    for (int i = 0; i < 20; ++i) {
      lab.push_back((i * 3) % 10);
      double se = 0.0;
      for (int k = 0; k < 10; ++k) se += std::exp(z(i, 0, 0, k));
      expect += -std::log(std::exp(z(i, 0, 0, lab[i])) / se);
    }
    expect /= 20;
    CHECK(std::abs(cross_entropy(z, std::span<const int>(lab)) - expect) <= 1e-10);

    auto zz = z;
    const auto g = cross_entropy_grad(z, std::span<const int>(lab));
    for (std::size_t i = 0; i < zz.size(); i += 7) {
      const double fd = test::central_difference([&] { return cross_entropy(zz, std::span<const int>(lab)); }, zz.data[i]);
      CHECK(std::abs(fd - g.data[i]) <= 1e-8);
    }
  }
  SUBCASE("label out of range") {
    Tensor<double> z({1, 1, 1, 10});
    const std::vector<int> lab{10};
    CHECK_THROWS_AS(cross_entropy(z, std::span<const int>(lab)), std::invalid_argument);
  }
}

TEST_CASE("backward pass") {
  SUBCASE("backward without forward") {
    Tape<double> t;
    CHECK_THROWS_AS(t.backward(0), std::logic_error);
  }
  SUBCASE("whole-network gradient check") {
    const double toy = network_gradient_error(read_config("toy_hnet.cfg"));
    MESSAGE("toy_hnet worst relative error " << toy);
    CHECK(toy <= 1e-4);
    const double cnn = network_gradient_error(
        "input 8 8 1\nclasses 3\nconv channels=3 kernel=3\nbn\nrelu\nmaxpool window=2\nconv channels=3 kernel=4 pad=valid\nreadout\n");
    MESSAGE("toy cnn worst relative error " << cnn);
    CHECK(cnn <= 1e-4);
  }
  SUBCASE("parameters off the readout path get exactly zero gradient") {
    Model<double> m(parse_config("input 8 8 1\nclasses 2\nhconv channels=2 kernel=3 orders=0,1\n"
                                 "hconv channels=2 kernel=3 orders=0 edges=0>0:0\nreadout\n"),
                    1);
    const auto x = test::random_tensor({2, 8, 8, 1}, 2, 0.0, 1.0);
    const std::vector<int> lab{0, 1};
    train_batch_gradients(m, x, std::span<const int>(lab));
    const auto& unused = m.params().slot(m.params().index("L0.hconv.radial.m1"));
    CHECK(std::all_of(unused.grad.begin(), unused.grad.end(), [](double v) { return v == 0.0; }));
    const auto& used = m.params().slot(m.params().index("L0.hconv.radial.m0"));
    CHECK(std::any_of(used.grad.begin(), used.grad.end(), [](double v) { return v != 0.0; }));
  }
  SUBCASE("filter gradients compose with the correlation transpose") {
    Model<double> m(parse_config("input 6 6 1\nstreams 1\ntarget_order 1\nclasses 1\nhconv channels=1 kernel=3\nreadout\n"), 4);
    const auto x = test::random_tensor({1, 6, 6, 1}, 8, 0.0, 1.0);
    const auto probe = test::random_tensor({1, 6, 6, 2}, 9);
    auto tr = m.forward(x, false, true);
    const auto y = tr.outputs[1];
    const auto root = tr.tape.record(Tensor<double>({1, 1, 1, 1}, test::dot(tr.tape.value(y), probe)), {y},
                                     [y, probe](Tape<double>& t, Tape<double>::Id self) {
                                       auto g = probe;
                                       for (auto& v : g.data) v *= t.grad(self).data[0];
                                       add_into(t.grad(y), g);
                                     });
    tr.tape.backward(root);
    m.collect_gradients(tr);

    const auto& radial = m.params().slot(m.params().index("L0.hconv.radial.m1"));
    const auto& phase = m.params().slot(m.params().index("L0.hconv.phase.m1"));
    const auto plan = build_resampling_plan(ring_partition(3), kDefaultResampleSigma, 0);
    const HarmonicFilterSpec spec(1, radial.value, phase.value[0], 3);
    const auto K = synthesize_filter(spec, plan);
    ComplexKernelBank<double> W(3, 1, 1, 1);
    W.re = K.re;
    W.im = K.im;
    const auto back = complex_corr2d_backward(ComplexFeatureMap<double>::from_real(x), W, unpack(probe, 1));
    ComplexKernel up(3);
    up.re = back.d_bank.re;
    up.im = back.d_bank.im;
    const auto fg = filter_gradient(spec, plan, up);
    CHECK(std::abs(fg.d_beta - phase.grad[0]) <= 1e-10 * std::max(1.0, std::abs(fg.d_beta)));
    for (std::size_t j = 0; j < fg.d_radial.size(); ++j) CHECK(std::abs(fg.d_radial[j] - radial.grad[j]) <= 1e-10);
  }
}

TEST_CASE("Adam") {
  ParameterStore<double> p;
  p.add("w", {1.0});
  OptimState st;
  st.lr = 0.1;
  SUBCASE("zero gradient leaves the value") {
    adam_step(p, st);
    CHECK(p.slot(0).value[0] == 1.0);
    CHECK(st.step == 1);
  }
  SUBCASE("three-step hand trace") {
    // t=1: m=0.05 v=2.5e-4, mhat=0.5 vhat=0.25 -> 1 - 0.1*0.5/(0.5+1e-8)
    const double g[3] = {0.5, -1.0, 2.0};
    const double expect[3] = {0.900000002, 0.9366103542405654, 0.8946447927181046};
    for (int t = 0; t < 3; ++t) {
      p.slot(0).grad[0] = g[t];
      adam_step(p, st);
      CHECK(p.slot(0).value[0] == doctest::Approx(expect[t]).epsilon(1e-13));
    }
  }
  SUBCASE("constant gradient settles to lr-sized steps") {
    double last = p.slot(0).value[0], step = 0.0;
    for (int t = 0; t < 500; ++t) {
      p.slot(0).grad[0] = -3.0;
      adam_step(p, st);
      step = p.slot(0).value[0] - last;
      last = p.slot(0).value[0];
    }
    CHECK(step == doctest::Approx(0.1).epsilon(1e-6));
  }
}

TEST_CASE("plateau schedule") {
  SUBCASE("improving accuracy keeps the rate") {
    OptimState st;
    for (int e = 0; e < 30; ++e) CHECK_FALSE(plateau_schedule(st, 0.01 * (e + 1)));
    CHECK(st.lr == 1e-3);
  }
  SUBCASE("flat epochs") {
    OptimState st;
    plateau_schedule(st, 0.5);
    int decays = 0;
    for (int e = 0; e < 10; ++e) decays += plateau_schedule(st, 0.5);
    CHECK(decays == 1);
    CHECK(st.lr == doctest::Approx(1e-4).epsilon(1e-15));
    for (int e = 0; e < 10; ++e) decays += plateau_schedule(st, 0.4);
    CHECK(decays == 2);
    CHECK(st.lr == doctest::Approx(1e-5).epsilon(1e-15));
    CHECK(st.plateau == 0);
    CHECK_FALSE(plateau_schedule(st, 0.6));
    CHECK(st.best == 0.6);
  }
}

TEST_CASE("epoch order") {
  const auto a = epoch_order(100, 7, 3);
  auto sorted = a;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 100; ++i) CHECK(sorted[i] == i);
  CHECK(epoch_order(100, 7, 3) == a);
  CHECK(epoch_order(100, 7, 4) != a);
  CHECK(epoch_order(100, 8, 3) != a);
}

TEST_CASE("training loop") {
  const auto graph = parse_config(read_config("toy_hnet.cfg"));
  const auto data = random_dataset(30, 8, 3, 21);
  const auto val = random_dataset(12, 8, 3, 22);
  TrainConfig cfg;
  cfg.lr = 1e-2;
  cfg.batch_size = 8;
  cfg.epochs = 4;
  cfg.seed = 5;

  SUBCASE("fixed seed gives identical logs and parameters") {
    Model<double> m1(graph, 2), m2(graph, 2);
    OptimState s1, s2;
    const auto l1 = train(m1, data, &val, cfg, s1);
    const auto l2 = train(m2, data, &val, cfg, s2);
    CHECK(metrics_csv(l1) == metrics_csv(l2));
    CHECK(parameter_bytes(m1) == parameter_bytes(m2));
  }
  SUBCASE("resuming from a saved model continues the same run") {
    Model<double> full(graph, 2);
    OptimState sf;
    const auto lf = train(full, data, &val, cfg, sf);

    Model<double> half(graph, 2);
    OptimState sh;
    auto c2 = cfg;
    c2.epochs = 2;
    train(half, data, &val, c2, sh);
    std::stringstream buf;
    save_model(buf, half, &sh);
    auto loaded = load_model<double>(buf);
    REQUIRE(loaded.has_optim);
    const auto lr = train(loaded.model, data, &val, cfg, loaded.optim);
    REQUIRE(lr.size() == 2);
    CHECK(lr[0].train_loss == lf[2].train_loss);
    CHECK(lr[1].train_loss == lf[3].train_loss);
    CHECK(parameter_bytes(loaded.model) == parameter_bytes(full));
  }
  SUBCASE("serialization round trip is bit-exact") {
    Model<float> m(graph, 9);
    OptimState st;
    auto c = cfg;
    c.epochs = 1;
    Dataset fdata = data;
    train(m, fdata, nullptr, c, st);
    std::stringstream buf;
    save_model(buf, m, &st);
    const auto r = load_model<float>(buf);
    CHECK(parameter_bytes(r.model) == parameter_bytes(m));
    CHECK(r.model.buffers() == m.buffers());
    CHECK(r.model.graph().source == m.graph().source);
    CHECK(r.optim.step == st.step);
    for (std::size_t i = 0; i < m.params().size(); ++i) {
      CHECK(r.model.params().slot(i).moment1 == m.params().slot(i).moment1);
      CHECK(r.model.params().slot(i).moment2 == m.params().slot(i).moment2);
    }
    std::stringstream junk("HNEX....");
    CHECK_THROWS_AS(load_model<float>(junk), std::runtime_error);
  }
  SUBCASE("logged rates replay the plateau rule") {
    Model<double> m(graph, 3);
    OptimState st;
    st.patience = 2;
    auto c = cfg;
    c.epochs = 12;
    const auto log = train(m, data, &val, c, st);
    OptimState replay;
    replay.lr = c.lr;
    replay.patience = 2;
    int decays = 0;
    for (const auto& e : log) {
      CHECK(e.lr == replay.lr);
      decays += plateau_schedule(replay, e.val_acc);
    }
    MESSAGE("decays over 12 epochs: " << decays);
    CHECK(decays >= 1);
  }
  SUBCASE("ten samples are memorised") {
    Model<double> m(parse_config(read_config("toy_mnist.cfg")), 4);
    OptimState st;
    const auto ten = subsample_count(load_amat(std::string(HNET_SOURCE_DIR) + "/data/mnist_rot_train_valid.amat.gz"), 10, 1);
    auto c = cfg;
    c.epochs = 300;
    c.batch_size = 10;
    const auto log = train(m, ten, nullptr, c, st);
    CHECK(log.back().train_loss < 0.1);
    CHECK(evaluate(m, ten).accuracy() == 1.0);
  }
}

TEST_CASE("recalibrated normalization statistics") {
  Model<double> m(parse_config("input 8 8 1\nclasses 3\nhconv channels=2 kernel=3\ncbn\ncrelu\nhconv channels=3 kernel=3 orders=0\n"
                               "readout\n"),
                  2);
  const auto a = test::random_tensor({4, 8, 8, 1}, 31, 0.0, 1.0), b = test::random_tensor({4, 8, 8, 1}, 32, 0.0, 2.0);
  const std::string key = "L1.cbn.moment";
  // the moments of the input to the first cbn do not depend on the running state
  auto batch_moments = [&](const Tensor<double>& x) {
    auto tr = m.forward(x, false, false);
    return c_batchnorm_moments(tr.tape.value(tr.outputs[1]), StreamLayout{2, 2});
  };
  const auto ma = batch_moments(a), mb = batch_moments(b);
  m.recalibrate_statistics({a});
  for (std::size_t p = 0; p < ma.size(); ++p) CHECK(m.buffers().at(key)[p] == doctest::Approx(ma[p]).epsilon(1e-14));
  m.recalibrate_statistics({a, b});
  for (std::size_t p = 0; p < ma.size(); ++p)
    CHECK(m.buffers().at(key)[p] == doctest::Approx((ma[p] + mb[p]) / 2).epsilon(1e-14));
  // plain training steps blend with weight 0.1
  const auto before = m.buffers().at(key);
  m.forward(b, true, false);
  for (std::size_t p = 0; p < ma.size(); ++p)
    CHECK(m.buffers().at(key)[p] == doctest::Approx(0.9 * before[p] + 0.1 * mb[p]).epsilon(1e-14));
}
