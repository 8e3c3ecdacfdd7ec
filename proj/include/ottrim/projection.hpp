#pragma once

#include <cmath>
#include <optional>
#include <string>

#include "ottrim/error.hpp"
#include "ottrim/tensor_io.hpp"
#include "ottrim/types.hpp"

namespace ottrim {

/// Affine projector into the language embedding space. A default-constructed
/// Projector is the identity and carries no weights.
class Projector {
 public:
  Projector() = default;

  Projector(Matrix weight, Vector bias) : weight_(std::move(weight)), bias_(std::move(bias)) {
    if (bias_.size() != weight_->rows())
      throw ShapeError("projector bias length " + std::to_string(bias_.size()) +
                       " does not match weight rows " + std::to_string(weight_->rows()));
    if (!weight_->allFinite() || !bias_.allFinite())
      throw ValidationError("projector contains non-finite values");
  }

  explicit Projector(Matrix weight) : Projector(weight, Vector::Zero(weight.rows())) {}

  static Projector identity() { return {}; }

  bool is_identity() const noexcept { return !weight_.has_value(); }
  const Matrix& weight() const { return *weight_; }
  const Vector& bias() const noexcept { return bias_; }

  Index output_dim(Index input_dim) const { return is_identity() ? input_dim : weight_->rows(); }

 private:
  std::optional<Matrix> weight_;
  Vector bias_;
};

/// Loads a projector from a 2-D weight NPY and an optional 1-D bias NPY.
inline Projector load_projector(const std::filesystem::path& weight_path,
                                const std::optional<std::filesystem::path>& bias_path) {
  const auto w = load_npy(weight_path);
  if (w.shape.size() != 2) throw ShapeError("projector weight must be 2-D");
  Matrix weight = Eigen::Map<const Matrix>(w.values.data(), static_cast<Index>(w.shape[0]),
                                           static_cast<Index>(w.shape[1]));
  if (!bias_path) return Projector(std::move(weight));
  const auto b = load_npy(*bias_path);
  if (b.shape.size() != 1) throw ShapeError("projector bias must be 1-D");
  Vector bias = Eigen::Map<const Vector>(b.values.data(), static_cast<Index>(b.shape[0]));
  return Projector(std::move(weight), std::move(bias));
}

/// Tokens after projection and L2 normalization, same frame-major layout as
/// TokenTensor.
class NormalizedTokens {
 public:
  NormalizedTokens(Index frames, Index tokens_per_frame, Matrix rows)
      : frames_(frames), tokens_(tokens_per_frame), rows_(std::move(rows)) {}

  Index frames() const noexcept { return frames_; }
  Index tokens_per_frame() const noexcept { return tokens_; }
  Index dim() const noexcept { return rows_.cols(); }
  const Matrix& rows() const noexcept { return rows_; }
  FrameView frame(Index t) const { return rows_.middleRows(t * tokens_, tokens_); }

 private:
  Index frames_;
  Index tokens_;
  Matrix rows_;
};

/// z = g(v) / (||g(v)||_2 + epsilon_norm) for every token row.
inline NormalizedTokens project_normalize(const TokenTensor& tokens, const Projector& proj,
                                          double epsilon_norm) {
  if (!(epsilon_norm > 0.0)) throw DomainError("epsilon_norm must be positive");
  Matrix z;
  if (proj.is_identity()) {
    z = tokens.data();
  } else {
    if (proj.weight().cols() != tokens.dim())
      throw ShapeError("projector expects input dim " + std::to_string(proj.weight().cols()) +
                       " but tokens have dim " + std::to_string(tokens.dim()));
    z = tokens.data() * proj.weight().transpose();
    z.rowwise() += proj.bias().transpose();
  }
  for (Index r = 0; r < z.rows(); ++r) {
    const double norm = z.row(r).norm();
    z.row(r) /= norm + epsilon_norm;
  }
  return NormalizedTokens(tokens.frames(), tokens.tokens_per_frame(), std::move(z));
}

}  // namespace ottrim
