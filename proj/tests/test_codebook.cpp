#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <vector>

#include "snce/codebook.hpp"
#include "snce/rng.hpp"

using namespace snce;
namespace fs = std::filesystem;

namespace {

Codebook two_unit_axes(Metric metric) {
  CodeMatrix v(2, 2);
  v << 1.f, 0.f, 0.f, 1.f;
  return Codebook(std::move(v), metric);
}

// Independent exhaustive-scan oracle: plain loops, no Eigen reductions.
Index brute_force_argmin_l2(const Codebook& cb, const Eigen::VectorXd& z) {
  Index best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Index k = 0; k < cb.size(); ++k) {
    double d = 0.0;
    for (Index j = 0; j < cb.dim(); ++j) {
      const double diff = static_cast<double>(cb.vectors()(k, j)) - z[j];
      d += diff * diff;
    }
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return best;
}

fs::path temp_file(const char* name) {
  return fs::temp_directory_path() / name;
}

}  // namespace

TEST_CASE("distances under the three metrics") {
  const Codebook l2 = two_unit_axes(Metric::kL2Squared);
  Eigen::VectorXd z(2);
  z << 1.0, 0.0;
  Eigen::VectorXd d = distances(l2, z);
  CHECK(d[0] == doctest::Approx(0.0));
  CHECK(d[1] == doctest::Approx(2.0));

  const Codebook nd = two_unit_axes(Metric::kNegDot);
  z << 2.0, 3.0;
  d = distances(nd, z);
  CHECK(d[0] == doctest::Approx(-2.0));
  CHECK(d[1] == doctest::Approx(-3.0));

  const Codebook nc = two_unit_axes(Metric::kNegCosine);
  z << 1.0, 1.0;
  d = distances(nc, z);
  CHECK(d[0] == doctest::Approx(-1.0 / std::sqrt(2.0)));
  CHECK(d[1] == doctest::Approx(-1.0 / std::sqrt(2.0)));
}

TEST_CASE("distance preconditions") {
  const Codebook cb = two_unit_axes(Metric::kL2Squared);
  Eigen::VectorXd wrong(3);
  wrong << 1.0, 2.0, 3.0;
  CHECK_THROWS_AS(distances(cb, wrong), std::invalid_argument);

  const Codebook nc = two_unit_axes(Metric::kNegCosine);
  Eigen::VectorXd zero = Eigen::VectorXd::Zero(2);
  CHECK_THROWS_AS(distances(nc, zero), std::invalid_argument);

  CodeMatrix with_zero_row(2, 2);
  with_zero_row << 0.f, 0.f, 1.f, 0.f;
  CHECK_THROWS_AS(Codebook(std::move(with_zero_row), Metric::kNegCosine),
                  std::invalid_argument);
}

TEST_CASE("quantize returns self and breaks ties by lowest index") {
  CodeMatrix v(4, 2);
  v << 0.f, 0.f, 1.f, 0.f, 0.f, 1.f, 1.f, 1.f;
  const Codebook cb(std::move(v), Metric::kL2Squared);
  for (Index k = 0; k < cb.size(); ++k) {
    CHECK(quantize(cb, cb.code(k)) == k);
  }

  CodeMatrix pair(2, 2);
  pair << -1.f, 0.f, 1.f, 0.f;
  const Codebook tie(std::move(pair), Metric::kL2Squared);
  Eigen::VectorXd mid(2);
  mid << 0.0, 0.0;
  CHECK(quantize(tie, mid) == 0);
}

TEST_CASE("quantize matches an exhaustive scan on the grid") {
  const Codebook grid = grid_codebook(-5.0, 5.0, 50);
  Eigen::VectorXd z(2);

  z << -2.0, 0.0;
  CHECK(quantize(grid, z) == brute_force_argmin_l2(grid, z));
  const Eigen::VectorXd d = distances(grid, z);
  CHECK(d[quantize(grid, z)] == d.minCoeff());

  z << -2.03, 0.04;
  CHECK(quantize(grid, z) == brute_force_argmin_l2(grid, z));

  SplitMix64 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    z << 12.0 * rng.next_double() - 6.0, 12.0 * rng.next_double() - 6.0;
    CHECK(quantize(grid, z) == brute_force_argmin_l2(grid, z));
  }
}

TEST_CASE("quantize ignores codes strictly farther than the minimum") {
  SplitMix64 rng(11);
  for (int trial = 0; trial < 40; ++trial) {
    const Index k = 3 + static_cast<Index>(rng.next_below(8));
    const Index d = 2 + static_cast<Index>(rng.next_below(4));
    CodeMatrix v(k, d);
    for (Index i = 0; i < v.size(); ++i) {
      *(v.data() + i) = static_cast<float>(rng.next_gaussian());
    }
    const bool use_dot = rng.next_bernoulli(0.5);
    const Codebook cb(v, use_dot ? Metric::kNegDot : Metric::kL2Squared);

    Eigen::VectorXd z(d);
    for (Index j = 0; j < d; ++j) z[j] = rng.next_gaussian();
    if (z.norm() == 0.0) z[0] = 1.0;
    const Index before = quantize(cb, z);
    const double d_min = distances(cb, z).minCoeff();

    Eigen::VectorXd far_code(d);
    if (use_dot) {
      // dot(z, c) = -(d_min + 1)  =>  distance d_min + 1
      far_code = -z * (d_min + 1.0) / z.squaredNorm();
    } else {
      far_code = z;
      far_code[0] += std::sqrt(d_min + 1.0);
    }
    CodeMatrix grown(k + 1, d);
    grown.topRows(k) = v;
    grown.row(k) = far_code.cast<float>().transpose();
    const Codebook bigger(std::move(grown),
                          use_dot ? Metric::kNegDot : Metric::kL2Squared);
    CHECK(quantize(bigger, z) == before);
  }
}

TEST_CASE("grid codebook layout") {
  const Codebook grid = grid_codebook(-5.0, 5.0, 50);
  CHECK(grid.size() == 2500);
  CHECK(grid.dim() == 2);
  CHECK(grid.metric() == Metric::kL2Squared);
  CHECK(grid.vectors()(0, 0) == doctest::Approx(-5.0));
  CHECK(grid.vectors()(0, 1) == doctest::Approx(-5.0));
  CHECK(grid.vectors()(2499, 0) == doctest::Approx(5.0));
  CHECK(grid.vectors()(2499, 1) == doctest::Approx(5.0));
  // x varies fastest; spacing is 10/49 between adjacent axis values
  CHECK(grid.vectors()(1, 0) - grid.vectors()(0, 0) ==
        doctest::Approx(10.0 / 49.0));
  CHECK(grid.vectors()(1, 1) == grid.vectors()(0, 1));

  const Codebook tiny = grid_codebook(0.0, 1.0, 2);
  CHECK(tiny.size() == 4);
  CHECK(tiny.vectors()(0, 0) == 0.f);
  CHECK(tiny.vectors()(0, 1) == 0.f);
  CHECK(tiny.vectors()(1, 0) == 1.f);
  CHECK(tiny.vectors()(1, 1) == 0.f);
  CHECK(tiny.vectors()(2, 0) == 0.f);
  CHECK(tiny.vectors()(2, 1) == 1.f);
  CHECK(tiny.vectors()(3, 0) == 1.f);
  CHECK(tiny.vectors()(3, 1) == 1.f);

  CHECK_THROWS_AS(grid_codebook(1.0, 1.0, 10), std::invalid_argument);
  CHECK_THROWS_AS(grid_codebook(0.0, 1.0, 1), std::invalid_argument);
}

TEST_CASE("save/load round trip is bit exact") {
  const Codebook grid = grid_codebook(-5.0, 5.0, 50);
  const fs::path path = temp_file("snce_roundtrip.sncb");
  save_codebook(grid, path);
  const Codebook loaded = load_codebook(path);
  CHECK(loaded.size() == grid.size());
  CHECK(loaded.dim() == grid.dim());
  CHECK(loaded.metric() == grid.metric());
  CHECK(loaded.vectors() == grid.vectors());
  fs::remove(path);
}

TEST_CASE("load rejects malformed files with distinct errors") {
  const fs::path path = temp_file("snce_badfile.sncb");

  {
    std::ofstream f(path, std::ios::binary);
    f << "NOPE everything after the magic is irrelevant";
  }
  CHECK_THROWS_WITH_AS(load_codebook(path),
                       doctest::Contains("bad magic"), FormatError);

  // Valid header declaring 4x2 floats but truncated payload.
  {
    const Codebook tiny = grid_codebook(0.0, 1.0, 2);
    save_codebook(tiny, path);
    fs::resize_file(path, fs::file_size(path) - 8);
  }
  CHECK_THROWS_WITH_AS(load_codebook(path), doctest::Contains("shorter"),
                       FormatError);

  // NaN in the payload.
  {
    CodeMatrix v(1, 2);
    v << 1.f, std::numeric_limits<float>::quiet_NaN();
    std::ofstream f(path, std::ios::binary);
    f.write("SNCB", 4);
    const std::uint32_t header[3] = {1, 1, 2};
    f.write(reinterpret_cast<const char*>(header), 12);
    const unsigned char tail[4] = {0, 0, 0, 0};
    f.write(reinterpret_cast<const char*>(tail), 4);
    f.write(reinterpret_cast<const char*>(v.data()), 8);
  }
  CHECK_THROWS_WITH_AS(load_codebook(path), doctest::Contains("non-finite"),
                       FormatError);

  CHECK_THROWS_AS(load_codebook(temp_file("snce_does_not_exist.sncb")),
                  IoError);
  fs::remove(path);
}
