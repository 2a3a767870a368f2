#pragma once

#include "ldpms/core.hpp"

namespace ldpms {

/// Jump tilt phi(t_n, atom) on the left nodes of a uniform time grid. The
/// tilted intensity of an atom is (1 + phi) times its base intensity.
class JumpIntensityField {
 public:
  JumpIntensityField() = default;

  /// rows = time intervals, cols = atoms
  explicit JumpIntensityField(Mat values) : values_(std::move(values)) {
    if (!values_.allFinite()) throw DomainError("JumpIntensityField: non-finite value");
    if (values_.size() > 0 && !(values_.minCoeff() > -1.0))
      throw DomainError("JumpIntensityField: values must exceed -1");
  }

  static JumpIntensityField zero(std::size_t n_steps, std::size_t n_atoms) {
    return JumpIntensityField(Mat::Zero(static_cast<Eigen::Index>(n_steps),
                                        static_cast<Eigen::Index>(n_atoms)));
  }
  static JumpIntensityField constant(std::size_t n_steps, std::size_t n_atoms, double phi) {
    return JumpIntensityField(Mat::Constant(static_cast<Eigen::Index>(n_steps),
                                            static_cast<Eigen::Index>(n_atoms), phi));
  }

  std::size_t n_steps() const noexcept { return static_cast<std::size_t>(values_.rows()); }
  std::size_t n_atoms() const noexcept { return static_cast<std::size_t>(values_.cols()); }
  double operator()(std::size_t step, std::size_t atom) const {
    return values_(static_cast<Eigen::Index>(step), static_cast<Eigen::Index>(atom));
  }
  const Mat& values() const noexcept { return values_; }
  bool is_zero() const { return values_.size() == 0 || values_.cwiseAbs().maxCoeff() == 0.0; }

 private:
  Mat values_;
};

}  // namespace ldpms
