#include "snce/codebook.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

namespace snce {

namespace {

constexpr char kMagic[4] = {'S', 'N', 'C', 'B'};
constexpr std::uint32_t kFormatVersion = 1;
// Refuse absurd K*D products before allocating.
constexpr std::uint64_t kMaxElements = 1ull << 32;

void put_u32(std::ostream& os, std::uint32_t v) {
  const unsigned char b[4] = {
      static_cast<unsigned char>(v & 0xff),
      static_cast<unsigned char>((v >> 8) & 0xff),
      static_cast<unsigned char>((v >> 16) & 0xff),
      static_cast<unsigned char>((v >> 24) & 0xff),
  };
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) |
         (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

const char* metric_name(Metric m) {
  switch (m) {
    case Metric::kL2Squared:
      return "l2_squared";
    case Metric::kNegDot:
      return "neg_dot";
    case Metric::kNegCosine:
      return "neg_cosine";
  }
  return "unknown";
}

Codebook::Codebook(CodeMatrix vectors, Metric metric)
    : vectors_(std::move(vectors)), metric_(metric) {
  if (vectors_.rows() < 1 || vectors_.cols() < 1) {
    throw std::invalid_argument("Codebook: need K >= 1 and D >= 1");
  }
  if (!vectors_.allFinite()) {
    throw std::invalid_argument("Codebook: code vectors must be finite");
  }
  if (metric_ == Metric::kNegCosine) {
    for (Index k = 0; k < vectors_.rows(); ++k) {
      if (vectors_.row(k).cast<double>().norm() == 0.0) {
        throw std::invalid_argument(
            "Codebook: zero-norm code vector not allowed under neg_cosine "
            "(code " +
            std::to_string(k) + ")");
      }
    }
  }
}

Eigen::VectorXd distances(const Codebook& cb,
                          const Eigen::Ref<const Eigen::VectorXd>& z) {
  if (z.size() != cb.dim()) {
    throw std::invalid_argument("distances: latent has dimension " +
                                std::to_string(z.size()) + ", codebook needs " +
                                std::to_string(cb.dim()));
  }
  if (!z.allFinite()) {
    throw std::invalid_argument("distances: latent must be finite");
  }

  const CodeMatrix& v = cb.vectors();
  const Index k_total = cb.size();
  Eigen::VectorXd out(k_total);

  switch (cb.metric()) {
    case Metric::kL2Squared: {
      for (Index k = 0; k < k_total; ++k) {
        out[k] = (v.row(k).cast<double>().transpose() - z).squaredNorm();
      }
      break;
    }
    case Metric::kNegDot: {
      for (Index k = 0; k < k_total; ++k) {
        out[k] = -v.row(k).cast<double>().dot(z.transpose());
      }
      break;
    }
    case Metric::kNegCosine: {
      const double z_norm = z.norm();
      if (z_norm == 0.0) {
        throw std::invalid_argument(
            "distances: zero-norm latent under neg_cosine");
      }
      for (Index k = 0; k < k_total; ++k) {
        const auto row = v.row(k).cast<double>();
        out[k] = -row.dot(z.transpose()) / (row.norm() * z_norm);
      }
      break;
    }
  }
  return out;
}

Index quantize(const Codebook& cb, const Eigen::Ref<const Eigen::VectorXd>& z) {
  const Eigen::VectorXd d = distances(cb, z);
  Index best = 0;
  double best_d = d[0];
  for (Index k = 1; k < d.size(); ++k) {
    if (d[k] < best_d) {
      best = k;
      best_d = d[k];
    }
  }
  return best;
}

Codebook grid_codebook(double lo, double hi, int n_per_axis) {
  if (!(lo < hi) || !std::isfinite(lo) || !std::isfinite(hi)) {
    throw std::invalid_argument("grid_codebook: need finite lo < hi");
  }
  if (n_per_axis < 2) {
    throw std::invalid_argument("grid_codebook: need n_per_axis >= 2");
  }

  const Index n = n_per_axis;
  const double step = (hi - lo) / static_cast<double>(n - 1);
  Eigen::VectorXd axis(n);
  for (Index i = 0; i < n; ++i) {
    axis[i] = (i == n - 1) ? hi : lo + step * static_cast<double>(i);
  }

  CodeMatrix vectors(n * n, 2);
  for (Index iy = 0; iy < n; ++iy) {
    for (Index ix = 0; ix < n; ++ix) {
      vectors(iy * n + ix, 0) = static_cast<float>(axis[ix]);
      vectors(iy * n + ix, 1) = static_cast<float>(axis[iy]);
    }
  }
  return Codebook(std::move(vectors), Metric::kL2Squared);
}

void save_codebook(const Codebook& cb, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) {
    throw IoError("save_codebook: cannot open " + path.string() +
                  " for writing");
  }
  f.write(kMagic, 4);
  put_u32(f, kFormatVersion);
  put_u32(f, static_cast<std::uint32_t>(cb.size()));
  put_u32(f, static_cast<std::uint32_t>(cb.dim()));
  const unsigned char tail[4] = {static_cast<unsigned char>(cb.metric()), 0, 0,
                                 0};
  f.write(reinterpret_cast<const char*>(tail), 4);

  const CodeMatrix& v = cb.vectors();
  if constexpr (std::endian::native == std::endian::little) {
    f.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(sizeof(float) * v.size()));
  } else {
    for (Index i = 0; i < v.size(); ++i) {
      put_u32(f, std::bit_cast<std::uint32_t>(*(v.data() + i)));
    }
  }
  if (!f) {
    throw IoError("save_codebook: write failed for " + path.string());
  }
}

Codebook load_codebook(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) {
    throw IoError("load_codebook: cannot open " + path.string());
  }

  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, kMagic, 4) != 0) {
    throw FormatError("load_codebook: bad magic bytes in " + path.string());
  }
  const std::uint32_t version = get_u32(f);
  if (!f) throw FormatError("load_codebook: truncated header");
  if (version != kFormatVersion) {
    throw FormatError("load_codebook: unsupported format version " +
                      std::to_string(version));
  }
  const std::uint32_t k = get_u32(f);
  const std::uint32_t d = get_u32(f);
  unsigned char tail[4];
  f.read(reinterpret_cast<char*>(tail), 4);
  if (!f) throw FormatError("load_codebook: truncated header");
  if (k == 0 || d == 0) {
    throw FormatError("load_codebook: K and D must be positive");
  }
  if (static_cast<std::uint64_t>(k) * d > kMaxElements) {
    throw FormatError("load_codebook: declared K*D too large");
  }
  if (tail[0] > 2) {
    throw FormatError("load_codebook: unknown metric id " +
                      std::to_string(tail[0]));
  }
  if (tail[1] != 0 || tail[2] != 0 || tail[3] != 0) {
    throw FormatError("load_codebook: nonzero padding bytes");
  }

  CodeMatrix vectors(static_cast<Index>(k), static_cast<Index>(d));
  if constexpr (std::endian::native == std::endian::little) {
    f.read(reinterpret_cast<char*>(vectors.data()),
           static_cast<std::streamsize>(sizeof(float) * vectors.size()));
    if (f.gcount() !=
        static_cast<std::streamsize>(sizeof(float) * vectors.size())) {
      throw FormatError("load_codebook: payload shorter than declared K*D");
    }
  } else {
    for (Index i = 0; i < vectors.size(); ++i) {
      unsigned char b[4];
      f.read(reinterpret_cast<char*>(b), 4);
      if (!f) {
        throw FormatError("load_codebook: payload shorter than declared K*D");
      }
      const std::uint32_t bits = static_cast<std::uint32_t>(b[0]) |
                                 (static_cast<std::uint32_t>(b[1]) << 8) |
                                 (static_cast<std::uint32_t>(b[2]) << 16) |
                                 (static_cast<std::uint32_t>(b[3]) << 24);
      *(vectors.data() + i) = std::bit_cast<float>(bits);
    }
  }
  if (!vectors.allFinite()) {
    throw FormatError("load_codebook: payload contains non-finite values");
  }
  return Codebook(std::move(vectors), static_cast<Metric>(tail[0]));
}

}  // namespace snce
