#include <doctest.h>
#include <zlib.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>

#include "hnet/data.hpp"
#include "support.hpp"

using namespace hnet;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("hnet_test_" + name)).string();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream(path) << text;
}

std::string row(double pixel, const std::string& label, int fields = 784) {
  std::string s;
  for (int i = 0; i < fields; ++i) s += (i ? " " : "") + std::to_string(pixel);
  return s + " " + label + "\n";
}

long parse_error_line(const std::string& text) {
  const auto p = temp_path("bad.amat");
  write_text(p, text);
  try {
    load_amat(p);
  } catch (const ParseError& e) {
    return e.line();
  }
  return -1;
}

Dataset synthetic(int n, std::uint64_t seed) {
  Dataset d;
  const auto px = test::random_vector(static_cast<std::size_t>(n) * 784, seed, 0.0, 1.0);
  d.images.assign(px.begin(), px.end());
  for (int i = 0; i < n; ++i) d.labels.push_back((i * 7 + 3) % 10);
  return d;
}

/// Smooth blob pattern that vanishes well inside the border.
std::vector<double> smooth_image(int n) {
  std::vector<double> img(static_cast<std::size_t>(n) * n);
  const double c = (n - 1) / 2.0;
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      const double u = x - c, v = c - y;
      const double a = std::exp(-((u - 3) * (u - 3) + (v - 2) * (v - 2)) / 18.0);
      const double b = 0.6 * std::exp(-((u + 4) * (u + 4) + (v + 1) * (v + 1)) / 12.0);
      img[static_cast<std::size_t>(y) * n + x] = a + b;
    }
  return img;
}

double psnr(const std::vector<double>& a, const std::vector<double>& b) {
  double mse = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) mse += (a[i] - b[i]) * (a[i] - b[i]);
  mse /= static_cast<double>(a.size());
  return 10.0 * std::log10(1.0 / mse);
}

}  // namespace

TEST_CASE("amat loading") {
  SUBCASE("all-black image") {
    const auto p = temp_path("black.amat");
    write_text(p, row(0.0, "3"));
    const auto d = load_amat(p);
    REQUIRE(d.size() == 1);
    CHECK(d.labels[0] == 3);
    CHECK(std::all_of(d.images.begin(), d.images.end(), [](float v) { return v == 0.0f; }));
  }
  SUBCASE("round trip is bit-exact") {
    const auto d = synthetic(25, 3);
    const auto p = temp_path("roundtrip.amat");
    write_amat(d, p);
    const auto r = load_amat(p);
    CHECK(r.labels == d.labels);
    CHECK(r.images == d.images);
  }
  SUBCASE("gzip input") {
    const auto d = synthetic(4, 5);
    const auto plain = temp_path("plain.amat"), gz = temp_path("packed.amat.gz");
    write_amat(d, plain);
    std::ifstream in(plain);
    const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    gzFile f = gzopen(gz.c_str(), "wb");
    REQUIRE(f != nullptr);
    gzwrite(f, text.data(), static_cast<unsigned>(text.size()));
    gzclose(f);
    const auto r = load_amat(gz);
    CHECK(r.images == d.images);
    CHECK(r.labels == d.labels);
  }
  SUBCASE("errors report the line") {
    CHECK(parse_error_line(row(0.5, "1") + row(0.5, "2", 783)) == 2);
    CHECK(parse_error_line(row(0.5, "1") + "\n" + row(0.5, "2.5")) == 3);
    CHECK(parse_error_line(row(0.5, "10")) == 1);
    CHECK(parse_error_line(row(0.5, "x")) == 1);
    CHECK(parse_error_line(row(0.5, "1") + row(1.01, "1")) == 2);
    CHECK(parse_error_line(row(-0.01, "1")) == 1);
    CHECK_THROWS_AS(load_amat(temp_path("does_not_exist.amat")), std::runtime_error);
  }
  SUBCASE("pixels within the tolerance are clamped") {
    const auto p = temp_path("edge.amat");
    write_text(p, row(1.0000005, "4") + row(-0.0000005, "4"));
    const auto d = load_amat(p);
    CHECK(d.image(0)[0] == 1.0f);
    CHECK(d.image(1)[0] == 0.0f);
  }
}

TEST_CASE("train and validation split") {
  const auto d = synthetic(12000, 1);
  const auto s = split_train_val(d);
  CHECK(s.train.size() == 10000);
  CHECK(s.val.size() == 2000);
  CHECK(s.val.labels[0] == d.labels[10000]);
  CHECK(s.val.split == Split::Val);
  CHECK_THROWS_AS(split_train_val(d, 12001), std::invalid_argument);
}

TEST_CASE("stratified subsampling") {
  Dataset d;
  d.images.assign(10000 * 784, 0.0f);
  for (int i = 0; i < 10000; ++i) d.labels.push_back(i % 10);

  CHECK(subsample_indices(d, 1.0, 3).size() == 10000);
  const auto idx = subsample_indices(d, 0.1, 3);
  CHECK(idx.size() == 1000);
  std::map<int, int> hist;
  for (int i : idx) hist[d.labels[i]]++;
  for (const auto& [c, n] : hist) CHECK(std::abs(n - 100) <= 1);
  CHECK(subsample_indices(d, 0.1, 3) == idx);
  CHECK(subsample_indices(d, 0.1, 4) != idx);
  CHECK_THROWS_AS(subsample_indices(d, 0.0, 1), std::invalid_argument);
  CHECK_THROWS_AS(subsample_indices(d, 1.5, 1), std::invalid_argument);
  CHECK_THROWS_AS(subsample_indices(d, 0.0001, 1), std::invalid_argument);

  SUBCASE("uneven classes keep their proportions") {
    Dataset u;
    for (int i = 0; i < 1234; ++i) u.labels.push_back(i < 400 ? 0 : (i % 9) + 1);
    u.images.assign(u.labels.size() * 784, 0.0f);
    std::map<int, int> full, part;
    for (int l : u.labels) full[l]++;
    const auto s = subsample_indices(u, 0.37, 11);
    for (int i : s) part[u.labels[i]]++;
    CHECK(static_cast<double>(s.size()) == doctest::Approx(std::round(0.37 * 1234)));
    for (const auto& [c, n] : full) CHECK(std::abs(part[c] - 0.37 * n) <= 1.0);
    CHECK(subsample_count(u, 100, 2).size() == 100);
  }
}

TEST_CASE("image rotation") {
  const int n = 28;
  const auto img = test::random_vector(static_cast<std::size_t>(n) * n, 17, 0.0, 1.0);

  SUBCASE("zero angle is the identity") { CHECK(rotate_image(img, n, 0.0) == img); }
  SUBCASE("quarter turns are exact permutations") {
    Tensor<double> t({1, n, n, 1});
    std::copy(img.begin(), img.end(), t.data.begin());
    auto expect = t;
    double energy = 0.0;
    for (double v : img) energy += v * v;
    for (int q = 1; q <= 4; ++q) {
      expect = test::quarter_turn(expect);
      const auto r = rotate_image(img, n, q * std::numbers::pi / 2);
      CHECK(r == expect.data);
      double e = 0.0;
      for (double v : r) e += v * v;
      CHECK(std::abs(e - energy) <= 1e-12 * energy);
    }
  }
  SUBCASE("non-square input") { CHECK_THROWS_AS(rotate_image(img, 27, 0.3), std::invalid_argument); }
  SUBCASE("sixteen eighth-pi steps return close to the start") {
    const auto s = smooth_image(n);
    auto r = s;
    for (int i = 0; i < 16; ++i) r = rotate_image(r, n, std::numbers::pi / 8);
    const double p = psnr(s, r);
    MESSAGE("PSNR after 16 steps: " << p << " dB");
    CHECK(p >= 30.0);
  }
  SUBCASE("small rotation of a centered radial image is nearly unchanged") {
    std::vector<double> g(static_cast<std::size_t>(n) * n);
    const double c = (n - 1) / 2.0;
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) g[y * n + x] = std::exp(-((x - c) * (x - c) + (y - c) * (y - c)) / 20.0);
    const auto r = rotate_image(g, n, 0.7);
    for (std::size_t i = 0; i < g.size(); ++i) CHECK(std::abs(r[i] - g[i]) <= 5e-3);
  }
}
