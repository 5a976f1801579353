#include "ifs/descriptor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include <Eigen/Eigenvalues>

#include "binary_io.hpp"
#include "ifs/error.hpp"
#include "ifs/simd/kernels.hpp"
#include "whitening_codec.hpp"

namespace ifs {

namespace {

constexpr std::string_view kWhiteningMagic = "IFSW";
constexpr std::uint16_t kWhiteningVersion = 1;
constexpr double kUnitTolerance = 1e-12;
// Samples per partial covariance in deterministic mode.
constexpr std::size_t kCovarianceChunk = 64;

void check_finite(std::span<const double> v, const char* what) {
  for (double x : v) {
    if (!std::isfinite(x)) throw Error(ErrorCode::NonFiniteData, std::string(what) + " has a non-finite value");
  }
}

}  // namespace

double l2_norm(std::span<const double> values) {
  double sq = 0.0;
  for (double v : values) sq += v * v;
  return std::sqrt(sq);
}

Descriptor l2_normalize(std::span<const double> values) {
  check_finite(values, "descriptor");
  Descriptor out{std::vector<double>(values.begin(), values.end()), NormState::l2};
  const double norm = l2_norm(values);
  if (norm == 0.0 || std::abs(norm - 1.0) <= kUnitTolerance) return out;
  for (double& v : out.values) v /= norm;
  return out;
}

Descriptor l2_normalize(const RawDescriptor& d) { return l2_normalize(std::span<const double>(d.values)); }

Descriptor l2_normalize(const Descriptor& d) {
  auto out = l2_normalize(std::span<const double>(d.values));
  if (d.state == NormState::whitened_l2) out.state = NormState::whitened_l2;
  return out;
}

WhiteningModel learn_whitening(std::span<const Descriptor> descriptors, double epsilon,
                               EpsilonScale scale, const Exec& exec) {
  if (descriptors.size() < 2) {
    throw Error(ErrorCode::DegenerateInput, "whitening needs at least 2 descriptors, got " +
                                                std::to_string(descriptors.size()));
  }
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) {
    throw Error(ErrorCode::InvalidArgument, "whitening epsilon must be finite and non-negative");
  }
  const std::size_t dim = descriptors.front().dim();
  if (dim == 0) throw Error(ErrorCode::DimensionMismatch, "whitening on zero-length descriptors");
  bool any_distinct = false;
  for (std::size_t i = 0; i < descriptors.size(); ++i) {
    if (descriptors[i].dim() != dim) {
      throw Error(ErrorCode::DimensionMismatch, "descriptor " + std::to_string(i) + " has length " +
                                                    std::to_string(descriptors[i].dim()) + ", expected " +
                                                    std::to_string(dim));
    }
    check_finite(descriptors[i].values, "whitening input");
    any_distinct = any_distinct || descriptors[i].values != descriptors.front().values;
  }
  if (!any_distinct) throw Error(ErrorCode::DegenerateInput, "whitening input has fewer than 2 distinct descriptors");

  const std::size_t n = descriptors.size();
  std::vector<double> mean(dim, 0.0);
  for (const auto& d : descriptors) {
    for (std::size_t k = 0; k < dim; ++k) mean[k] += d.values[k];
  }
  for (double& m : mean) m /= static_cast<double>(n);

  // Partial scatter matrices (upper triangle) per chunk, combined in chunk order.
  const std::size_t chunk =
      exec.deterministic ? kCovarianceChunk : (n + std::max(exec.threads, 1u) - 1) / std::max(exec.threads, 1u);
  const std::size_t num_chunks = (n + chunk - 1) / chunk;
  std::vector<Eigen::MatrixXd> partial(num_chunks);
  parallel_for(n, chunk, exec, [&](std::size_t b, std::size_t e) {
    Eigen::MatrixXd s = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
    std::vector<double> centered(dim);
    for (std::size_t i = b; i < e; ++i) {
      for (std::size_t k = 0; k < dim; ++k) centered[k] = descriptors[i].values[k] - mean[k];
      for (std::size_t r = 0; r < dim; ++r) {
        const double cr = centered[r];
        for (std::size_t c = r; c < dim; ++c) {
          s(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) += cr * centered[c];
        }
      }
    }
    partial[b / chunk] = std::move(s);
  });
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
  for (const auto& p : partial) cov += p;
  cov /= static_cast<double>(n);
  for (Eigen::Index r = 0; r < cov.rows(); ++r) {
    for (Eigen::Index c = r + 1; c < cov.cols(); ++c) cov(c, r) = cov(r, c);
  }

  const double eps_abs = scale == EpsilonScale::relative ? epsilon * cov.trace() / static_cast<double>(dim) : epsilon;

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) {
    throw Error(ErrorCode::DegenerateInput, "covariance eigen-decomposition did not converge");
  }
  const Eigen::VectorXd& evals = solver.eigenvalues();  // ascending
  const Eigen::MatrixXd& evecs = solver.eigenvectors();

  WhiteningModel model;
  model.mean = std::move(mean);
  model.epsilon = eps_abs;
  model.projection.assign(dim * dim, 0.0);
  for (std::size_t i = 0; i < dim; ++i) {
    const auto src = static_cast<Eigen::Index>(dim - 1 - i);
    const double lambda = std::max(evals(src), 0.0);
    const double denom = lambda + eps_abs;
    if (!(denom > 0.0)) {
      throw Error(ErrorCode::DegenerateInput,
                  "covariance is singular and epsilon is 0; eigen-direction " + std::to_string(i) + " has no variance");
    }
    Eigen::Index argmax = 0;
    for (Eigen::Index k = 1; k < evecs.rows(); ++k) {
      if (std::abs(evecs(k, src)) > std::abs(evecs(argmax, src))) argmax = k;
    }
    const double sign = evecs(argmax, src) < 0.0 ? -1.0 : 1.0;
    const double s = sign / std::sqrt(denom);
    for (std::size_t k = 0; k < dim; ++k) {
      model.projection[i * dim + k] = s * evecs(static_cast<Eigen::Index>(k), src);
    }
  }
  return model;
}

std::vector<double> whiten_linear(const WhiteningModel& model, std::span<const double> values) {
  const std::size_t dim = model.dim();
  if (values.size() != dim || model.projection.size() != dim * dim) {
    throw Error(ErrorCode::DimensionMismatch, "whitening model is " + std::to_string(dim) +
                                                  "-D, descriptor is " + std::to_string(values.size()) + "-D");
  }
  std::vector<double> centered(dim);
  for (std::size_t k = 0; k < dim; ++k) centered[k] = values[k] - model.mean[k];
  std::vector<double> out(dim);
  simd::active_kernels().dot_rows(model.projection.data(), dim, dim, centered.data(), out.data());
  return out;
}

Descriptor apply_whitening(const WhiteningModel& model, const Descriptor& d) {
  auto out = l2_normalize(whiten_linear(model, d.values));
  out.state = NormState::whitened_l2;
  return out;
}

Descriptor finalize(const RawDescriptor& d, const WhiteningModel* model) {
  if (d.pooling == Pooling::max) return l2_normalize(d);
  if (!model) throw Error(ErrorCode::MissingModel, "sum-pooled descriptors need a whitening model");
  return apply_whitening(*model, l2_normalize(d));
}

// ---------------------------------------------------------------- IFSW

namespace detail {

void put_whitening(ByteWriter& out, const WhiteningModel& model) {
  const std::size_t dim = model.dim();
  if (model.projection.size() != dim * dim) {
    throw Error(ErrorCode::InvalidArgument, "whitening projection is not D x D");
  }
  out.raw(kWhiteningMagic);
  out.u16(kWhiteningVersion);
  out.u32(static_cast<std::uint32_t>(dim));
  out.f64(model.epsilon);
  for (double v : model.mean) out.f64(v);
  for (double v : model.projection) out.f64(v);
}

WhiteningModel parse_whitening(ByteReader& in) {
  const auto start = in.position();
  const std::string magic = in.raw(4);
  if (magic != kWhiteningMagic) {
    throw Error(ErrorCode::BadMagic, in.context() + ": expected IFSW, found '" + magic + "'", start);
  }
  const auto version = in.u16();
  if (version != kWhiteningVersion) {
    throw Error(ErrorCode::UnsupportedVersion, in.context() + ": whitening version " + std::to_string(version),
                start + 4);
  }
  const std::size_t dim = in.u32();
  WhiteningModel m;
  m.epsilon = in.f64();
  in.need(8 * (dim + dim * dim));
  m.mean.resize(dim);
  for (double& v : m.mean) v = in.f64();
  m.projection.resize(dim * dim);
  for (double& v : m.projection) v = in.f64();
  return m;
}

}  // namespace detail

std::vector<std::uint8_t> encode_whitening(const WhiteningModel& model) {
  detail::ByteWriter out;
  detail::put_whitening(out, model);
  return out.bytes();
}

WhiteningModel decode_whitening(const std::vector<std::uint8_t>& bytes, const std::string& context) {
  detail::ByteReader in(bytes, context);
  auto m = detail::parse_whitening(in);
  if (in.remaining() != 0) {
    throw Error(ErrorCode::Schema, context + ": trailing bytes after whitening model", in.position());
  }
  return m;
}

void write_whitening(const WhiteningModel& model, const std::filesystem::path& path) {
  detail::write_file_bytes(path, encode_whitening(model));
}

WhiteningModel read_whitening(const std::filesystem::path& path) {
  return decode_whitening(detail::read_file_bytes(path), path.string());
}

}  // namespace ifs
