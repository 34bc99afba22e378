#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "handshake/kinematics.hpp"

namespace handshake::promp {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Gaussian radial basis over the phase interval [0, 1].
struct BasisConfig {
  std::size_t n_basis = 3;
  std::vector<double> centers{0.0, 0.5, 1.0};
  /// Variance of each kernel, in phase units squared.
  double width = 0.01;
  bool normalize = true;

  static BasisConfig equally_spaced(std::size_t n_basis, double width = 0.01, bool normalize = true);
  void validate() const;
  bool operator==(const BasisConfig&) const = default;
};

struct Phase {
  double z = 0.0;
  /// True when the requested time fell outside [t0, t0 + duration].
  bool clamped = false;
};

/// z = (t - t0) / duration, clamped into [0, 1].
Phase phase(double t, double t0, double duration);

/// Kernel activations at z (length n_basis).
VectorXd basis_activations(double z, const BasisConfig& cfg);

/// Third derivative of basis_activations with respect to z.
VectorXd basis_third_derivative_activations(double z, const BasisConfig& cfg);

/// Block-diagonal basis matrix, (dof * n_basis) x dof. Weight vectors are laid out
/// dimension-major: [w(d0, k0..kN), w(d1, k0..kN), ...].
MatrixXd basis_matrix(double z, const BasisConfig& cfg, std::size_t dof);

/// Block-diagonal third-derivative matrix, same layout as basis_matrix.
MatrixXd basis_third_derivative(double z, const BasisConfig& cfg, std::size_t dof);

/// Sampled joint trajectory. Row i of `values` is the configuration at `phases[i]`.
struct JointTrajectory {
  std::vector<double> phases;
  MatrixXd values;

  std::size_t length() const { return static_cast<std::size_t>(values.rows()); }
  std::size_t dof() const { return static_cast<std::size_t>(values.cols()); }

  /// Phases spread evenly over [0, 1] across the rows.
  static JointTrajectory uniform(MatrixXd values);
};

struct Ridge {
  double lambda = 1e-10;
};

/// Penalises the third phase derivative of the reconstruction.
struct Jerk {
  double lambda = 1e-4;
};

using Regularizer = std::variant<Ridge, Jerk>;

/// Regularised least-squares weights for one trajectory.
VectorXd fit_weights(const JointTrajectory& traj, const BasisConfig& cfg, const Regularizer& reg = Ridge{});

inline constexpr double kCovarianceJitter = 1e-8;

class ProMP {
 public:
  ProMP(BasisConfig basis, VectorXd mean_weights, MatrixXd weight_cov, MatrixXd obs_noise);

  const BasisConfig& basis() const { return basis_; }
  const VectorXd& mean_weights() const { return mean_; }
  const MatrixXd& weight_cov() const { return cov_; }
  const MatrixXd& obs_noise() const { return obs_noise_; }
  std::size_t dof() const { return static_cast<std::size_t>(obs_noise_.rows()); }

  /// Throws ContractError if shapes disagree or a covariance is not symmetric PSD.
  void validate() const;

 private:
  BasisConfig basis_;
  VectorXd mean_;
  MatrixXd cov_;
  MatrixXd obs_noise_;
};

/// Sample mean and unbiased covariance of the weight vectors, plus jitter on the diagonal.
ProMP fit_promp(std::span<const VectorXd> samples, const MatrixXd& obs_noise, const BasisConfig& basis);

struct Gaussian {
  VectorXd mean;
  MatrixXd cov;
};

/// Distribution of the joint configuration at phase z, including observation noise.
Gaussian marginal(const ProMP& p, double z);

/// Bayesian update of the weights after observing y_star (with noise) at phase z.
ProMP condition_joint_space(const ProMP& p, double z, const VectorXd& y_star, const MatrixXd& noise_star);

struct TaskTarget {
  Vec3 position = Vec3::Zero();
  Eigen::Matrix3d accuracy = Eigen::Matrix3d::Identity() * 1e-4;
};

struct TaskConditioningOptions {
  /// The optimal configuration is applied with noise kappa * marginal covariance.
  double kappa = 0.01;
  int max_iters = 100;
  double step_tolerance = 1e-8;
};

struct TaskConditioning {
  ProMP promp;
  kinematics::JointAngles y_star;
  bool converged = false;
  int iterations = 0;
};

/// Finds the configuration trading off reaching `target` against staying likely under
/// the primitive at phase z, then conditions the primitive on it. Requires dof() == 4.
TaskConditioning condition_task_space(const ProMP& p, double z, const TaskTarget& target,
                                      const kinematics::ArmModel& model,
                                      const TaskConditioningOptions& options = {});

/// Draws one weight vector (deterministic in `seed`) and evaluates it at each phase.
JointTrajectory sample_trajectory(const ProMP& p, std::span<const double> phases, std::uint64_t seed);

/// Mean configuration at each phase.
JointTrajectory mean_trajectory(const ProMP& p, std::span<const double> phases);

}  // namespace handshake::promp
