#pragma once

#include <string>
#include <vector>

#include "flimcl/common.hpp"
#include "flimcl/features/laguerre.hpp"
#include "flimcl/features/nnls.hpp"
#include "flimcl/features/signal.hpp"
#include "flimcl/waveform.hpp"

namespace flimcl::features {

/// Shape constraints imposed on the reconstructed decay h = B c at every knot.
enum class DecayConstraint {
  Nonnegative,  // h >= 0
  Monotone,     // h >= 0, h non-increasing
  Full,         // h >= 0, non-increasing, convex
};

struct DeconvolutionOptions {
  double ridge = 1e-6;  // relative to mean diagonal of the normal matrix
  DecayConstraint constraint = DecayConstraint::Full;
  std::size_t knot_stride = 1;
};

/// Houses the Laguerre coefficients (LC) of one decay.
struct LaguerreFit {
  std::vector<double> coefficients;
  std::vector<double> decay;  // fluorescence impulse response h = B c
  double residual_norm = 0.0;
  bool ill_conditioned = false;  // ridge term dominated the normal equations
  bool constraints_active = false;
  std::vector<std::string> warnings;
};

/// Constrained least-squares deconvolution with a Laguerre expansion.
/// Everything that depends only on (IRF, basis) is factored once so that a
/// single instance can fit many waveforms; instances are immutable after
/// construction and safe to share between threads.
class Deconvolver {
 public:
  Deconvolver(const Irf& irf, LaguerreBasis basis,
              DeconvolutionOptions options = {})
      : basis_(std::move(basis)), options_(options), dt_(irf.dt) {
    const auto n = basis_.samples();
    const Eigen::Index order = basis_.order;
    if (irf.samples.size() > n)
      throw InputError("IRF longer than the waveform record");
    if (!all_finite(irf.samples)) throw InputError("IRF has non-finite samples");
    if (options_.knot_stride == 0) throw ParameterError("knot stride must be >= 1");

    std::vector<double> padded(irf.samples);
    padded.resize(n, 0.0);
    design_ = Matrix(static_cast<Eigen::Index>(n), order);
    for (Eigen::Index j = 0; j < order; ++j) {
      std::vector<double> col(basis_.values.col(j).data(),
                              basis_.values.col(j).data() + n);
      auto v = convolve(padded, col, n);
      for (std::size_t i = 0; i < n; ++i) design_(static_cast<Eigen::Index>(i), j) = v[i];
    }

    const Matrix normal = design_.transpose() * design_;
    const double scale = normal.trace() / static_cast<double>(order);
    if (!(scale > 0)) throw DegenerateInputError("IRF convolves the basis to zero");
    const double lambda = options_.ridge * scale;

    Matrix augmented(design_.rows() + order, order);
    augmented.topRows(design_.rows()) = design_;
    augmented.bottomRows(order) = std::sqrt(lambda) * Matrix::Identity(order, order);
    qr_ = Eigen::HouseholderQR<Matrix>(augmented);
    r_ = qr_.matrixQR().topRows(order).triangularView<Eigen::Upper>();

    // Compare the unregularized spectrum to the ridge to surface conditioning.
    Eigen::SelfAdjointEigenSolver<Matrix> eig(normal, Eigen::EigenvaluesOnly);
    ill_conditioned_ = eig.eigenvalues().minCoeff() < lambda;

    constraints_ = build_constraints();
    const Matrix r_inv = r_.triangularView<Eigen::Upper>().solve(
        Matrix::Identity(order, order));
    r_inv_ = r_inv;
    reduced_constraints_ = constraints_ * r_inv;
  }

  const LaguerreBasis& basis() const { return basis_; }
  double dt() const { return dt_; }
  const Matrix& design() const { return design_; }

  LaguerreFit fit(const Waveform& waveform) const {
    if (waveform.size() != basis_.samples())
      throw InputError("waveform length does not match the basis");
    if (std::abs(waveform.dt - dt_) > 1e-12 * dt_)
      throw InputError("waveform and IRF sample periods differ");
    if (!all_finite(waveform.samples))
      throw InputError("waveform has non-finite samples");
    return fit(waveform.samples);
  }

  LaguerreFit fit(const std::vector<double>& samples) const {
    const Eigen::Index n = design_.rows();
    const Eigen::Index order = basis_.order;
    double amplitude = 0.0;
    for (double v : samples) amplitude = std::max(amplitude, std::abs(v));
    if (amplitude == 0.0) throw DegenerateInputError("all-zero waveform");

    // Work on a unit-amplitude copy so tolerances are scale free.
    Vector rhs = Vector::Zero(n + order);
    for (Eigen::Index i = 0; i < n; ++i)
      rhs(i) = samples[static_cast<std::size_t>(i)] / amplitude;
    const Vector f1 = (qr_.householderQ().transpose() * rhs).head(order);

    Vector c = r_inv_ * f1;
    LaguerreFit out;
    if ((constraints_ * c).minCoeff() < -1e-12) {
      Vector z;
      const Vector h = -(reduced_constraints_ * f1);
      if (!least_distance(reduced_constraints_, h, z))
        throw NumericalError("constrained deconvolution is infeasible");
      c = r_inv_ * (z + f1);
      out.constraints_active = true;
    }
    c *= amplitude;

    const Vector h = basis_.values * c;
    Vector y(n);
    for (Eigen::Index i = 0; i < n; ++i) y(i) = samples[static_cast<std::size_t>(i)];
    out.residual_norm = (y - design_ * c).norm();
    out.coefficients.assign(c.data(), c.data() + c.size());
    out.decay.resize(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i)
      out.decay[static_cast<std::size_t>(i)] = std::max(0.0, h(i));
    out.ill_conditioned = ill_conditioned_;
    if (ill_conditioned_)
      out.warnings.emplace_back("normal equations near singular; ridge regularization applied");
    return out;
  }

 private:
  Matrix build_constraints() const {
    const Matrix& b = basis_.values;
    const Eigen::Index n = b.rows();
    const auto stride = static_cast<Eigen::Index>(options_.knot_stride);
    std::vector<Eigen::RowVectorXd> rows;
    for (Eigen::Index k = 0; k < n; k += stride) rows.push_back(b.row(k));
    if (options_.constraint != DecayConstraint::Nonnegative)
      for (Eigen::Index k = 0; k + 1 < n; k += stride)
        rows.push_back(b.row(k) - b.row(k + 1));
    if (options_.constraint == DecayConstraint::Full)
      for (Eigen::Index k = 0; k + 2 < n; k += stride)
        rows.push_back(b.row(k) - 2.0 * b.row(k + 1) + b.row(k + 2));
    Matrix g(static_cast<Eigen::Index>(rows.size()), b.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) g.row(static_cast<Eigen::Index>(i)) = rows[i];
    return g;
  }

  LaguerreBasis basis_;
  DeconvolutionOptions options_;
  double dt_;
  Matrix design_;
  Eigen::HouseholderQR<Matrix> qr_;
  Matrix r_;
  Matrix r_inv_;
  Matrix constraints_;
  Matrix reduced_constraints_;
  bool ill_conditioned_ = false;
};

/// One-shot convenience wrapper; prefer a shared Deconvolver for batches.
inline LaguerreFit deconvolve(const Waveform& waveform, const Irf& irf,
                              const LaguerreBasis& basis,
                              DeconvolutionOptions options = {}) {
  return Deconvolver(irf, basis, options).fit(waveform);
}

}  // namespace flimcl::features
