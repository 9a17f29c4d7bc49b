#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>

#include "snce/errors.hpp"

namespace snce {

using Index = Eigen::Index;

// Code vectors live in float32, row-major, matching the serialized layout
// one-to-one. Distance accumulation always happens in double.
using CodeMatrix =
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class Metric : std::uint8_t {
  kL2Squared = 0,  // sum_d (x_d - y_d)^2
  kNegDot = 1,     // -x.y
  kNegCosine = 2,  // -x.y / (|x| |y|); zero vectors are rejected
};

const char* metric_name(Metric m);

// Immutable set of K code vectors in D dimensions plus the metric they are
// compared under. All member state is fixed at construction, so a Codebook
// can be shared freely across threads.
class Codebook {
 public:
  Codebook(CodeMatrix vectors, Metric metric);

  Index size() const { return vectors_.rows(); }  // K
  Index dim() const { return vectors_.cols(); }   // D
  Metric metric() const { return metric_; }
  const CodeMatrix& vectors() const { return vectors_; }

  // Code vector k as a double column vector.
  Eigen::VectorXd code(Index k) const {
    return vectors_.row(k).cast<double>().transpose();
  }

 private:
  CodeMatrix vectors_;
  Metric metric_;
};

// d(z, v_k) for every code, in codebook order.
Eigen::VectorXd distances(const Codebook& cb,
                          const Eigen::Ref<const Eigen::VectorXd>& z);

// Index of the nearest code; exact ties resolve to the smallest index.
Index quantize(const Codebook& cb, const Eigen::Ref<const Eigen::VectorXd>& z);

// Uniform n_per_axis x n_per_axis grid over [lo,hi]^2 under L2. Codes
// enumerate the Cartesian product with x varying fastest, endpoints included,
// so token (iy * n + ix) sits at (x[ix], y[iy]).
Codebook grid_codebook(double lo, double hi, int n_per_axis);

// Binary codebook file, little-endian:
//   "SNCB" | u32 version=1 | u32 K | u32 D | u8 metric | 3 zero bytes |
//   K*D float32, row-major.
// Round-trips are bit-exact.
void save_codebook(const Codebook& cb, const std::filesystem::path& path);
Codebook load_codebook(const std::filesystem::path& path);

}  // namespace snce
