#pragma once

// Descriptor normalization and PCA whitening.
//
// Sum-pooled descriptors go through l2 -> whiten -> l2; max-pooled
// descriptors are only l2-normalized. finalize() is the single entry point
// the search and rerank stages use.

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "ifs/parallel.hpp"
#include "ifs/pooling.hpp"

namespace ifs {

enum class NormState { raw, l2, whitened_l2 };

struct Descriptor {
  std::vector<double> values;
  NormState state = NormState::raw;

  std::size_t dim() const { return values.size(); }
};

struct WhiteningModel {
  std::vector<double> mean;        // D
  std::vector<double> projection;  // D x D, row-major; row i = v_i / sqrt(lambda_i + epsilon)
  double epsilon = 0.0;            // absolute regularizer actually applied

  std::size_t dim() const { return mean.size(); }
  friend bool operator==(const WhiteningModel&, const WhiteningModel&) = default;
};

// How the epsilon passed to learn_whitening is interpreted.
enum class EpsilonScale {
  absolute,
  relative,  // multiplied by trace(cov) / D
};

inline constexpr double kDefaultRelativeEpsilon = 1e-6;

// Divides by the Euclidean norm. The zero vector is returned unchanged, and
// so is any vector whose norm already rounds to 1 within 1e-12, which makes
// the operation idempotent.
Descriptor l2_normalize(std::span<const double> values);
Descriptor l2_normalize(const RawDescriptor& d);
Descriptor l2_normalize(const Descriptor& d);

double l2_norm(std::span<const double> values);

// PCA whitening fit: mean, covariance (1/n), eigen-decomposition with
// eigenvalues in descending order and each eigenvector's largest-magnitude
// component made non-negative.
WhiteningModel learn_whitening(std::span<const Descriptor> descriptors, double epsilon,
                               EpsilonScale scale = EpsilonScale::absolute, const Exec& exec = {});

// projection * (values - mean), without the trailing normalization.
std::vector<double> whiten_linear(const WhiteningModel& model, std::span<const double> values);

Descriptor apply_whitening(const WhiteningModel& model, const Descriptor& d);

// sum: l2 -> whiten -> l2 (model required); max: l2.
Descriptor finalize(const RawDescriptor& d, const WhiteningModel* model);

std::vector<std::uint8_t> encode_whitening(const WhiteningModel& model);
WhiteningModel decode_whitening(const std::vector<std::uint8_t>& bytes, const std::string& context);
void write_whitening(const WhiteningModel& model, const std::filesystem::path& path);
WhiteningModel read_whitening(const std::filesystem::path& path);

}  // namespace ifs
