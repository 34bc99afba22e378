#include "handshake/promp.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "handshake/error.hpp"

namespace handshake::promp {

namespace {

constexpr double kPsdTolerance = 1e-10;
constexpr double kSingularRegularizer = 1e-12;

void require_psd(const MatrixXd& m, const char* name) {
  if (m.rows() != m.cols()) throw ContractError(std::string(name) + " must be square");
  if (!m.allFinite()) throw ContractError(std::string(name) + " must be finite");
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-9 * scale) {
    throw ContractError(std::string(name) + " must be symmetric");
  }
  if (m.rows() == 0) return;
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(m, Eigen::EigenvaluesOnly);
  if (eig.eigenvalues().minCoeff() < -kPsdTolerance * scale) {
    std::ostringstream msg;
    msg << name << " is not positive semi-definite (min eigenvalue " << eig.eigenvalues().minCoeff() << ")";
    throw ContractError(msg.str());
  }
}

MatrixXd symmetrize(const MatrixXd& m) { return 0.5 * (m + m.transpose()); }

MatrixXd block_diagonal(const VectorXd& column, std::size_t dof) {
  const auto nb = column.size();
  MatrixXd out = MatrixXd::Zero(nb * static_cast<Eigen::Index>(dof), static_cast<Eigen::Index>(dof));
  for (std::size_t d = 0; d < dof; ++d) {
    out.block(static_cast<Eigen::Index>(d) * nb, static_cast<Eigen::Index>(d), nb, 1) = column;
  }
  return out;
}

// Raw kernel values and their first three derivatives with respect to z.
struct KernelDerivatives {
  VectorXd b, b1, b2, b3;
};

KernelDerivatives kernel_derivatives(double z, const BasisConfig& cfg) {
  const auto n = static_cast<Eigen::Index>(cfg.n_basis);
  KernelDerivatives k{VectorXd(n), VectorXd(n), VectorXd(n), VectorXd(n)};
  const double w = cfg.width;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double diff = z - cfg.centers[static_cast<std::size_t>(i)];
    const double b = std::exp(-diff * diff / (2.0 * w));
    const double u = -diff / w;
    k.b[i] = b;
    k.b1[i] = u * b;
    k.b2[i] = (u * u - 1.0 / w) * b;
    k.b3[i] = (u * u * u - 3.0 * u / w) * b;
  }
  return k;
}

}  // namespace

BasisConfig BasisConfig::equally_spaced(std::size_t n_basis, double width, bool normalize) {
  BasisConfig cfg;
  cfg.n_basis = n_basis;
  cfg.width = width;
  cfg.normalize = normalize;
  cfg.centers.resize(n_basis);
  for (std::size_t k = 0; k < n_basis; ++k) {
    cfg.centers[k] = n_basis > 1 ? static_cast<double>(k) / static_cast<double>(n_basis - 1) : 0.0;
  }
  return cfg;
}

void BasisConfig::validate() const {
  if (n_basis < 2) throw ContractError("basis needs at least 2 kernels");
  if (centers.size() != n_basis) throw ContractError("basis centre count differs from n_basis");
  if (!(width > 0.0) || !std::isfinite(width)) throw ContractError("basis width must be positive");
  for (std::size_t k = 1; k < centers.size(); ++k) {
    if (!(centers[k] > centers[k - 1])) throw ContractError("basis centres must be strictly increasing");
  }
}

Phase phase(double t, double t0, double duration) {
  if (!(duration > 0.0)) throw ContractError("phase duration must be positive");
  const double z = (t - t0) / duration;
  if (z < 0.0) return {0.0, true};
  if (z > 1.0) return {1.0, true};
  return {z, false};
}

VectorXd basis_activations(double z, const BasisConfig& cfg) {
  const auto k = kernel_derivatives(z, cfg);
  if (!cfg.normalize) return k.b;
  return k.b / k.b.sum();
}

VectorXd basis_third_derivative_activations(double z, const BasisConfig& cfg) {
  const auto k = kernel_derivatives(z, cfg);
  if (!cfg.normalize) return k.b3;
  // phi = b * r with r = 1 / S, S = sum(b); Leibniz rule for the third derivative.
  const double s0 = k.b.sum(), s1 = k.b1.sum(), s2 = k.b2.sum(), s3 = k.b3.sum();
  const double r0 = 1.0 / s0;
  const double r1 = -s1 / (s0 * s0);
  const double r2 = -s2 / (s0 * s0) + 2.0 * s1 * s1 / (s0 * s0 * s0);
  const double r3 = -s3 / (s0 * s0) + 6.0 * s1 * s2 / (s0 * s0 * s0) - 6.0 * s1 * s1 * s1 / (s0 * s0 * s0 * s0);
  return k.b3 * r0 + 3.0 * k.b2 * r1 + 3.0 * k.b1 * r2 + k.b * r3;
}

MatrixXd basis_matrix(double z, const BasisConfig& cfg, std::size_t dof) {
  return block_diagonal(basis_activations(z, cfg), dof);
}

MatrixXd basis_third_derivative(double z, const BasisConfig& cfg, std::size_t dof) {
  return block_diagonal(basis_third_derivative_activations(z, cfg), dof);
}

JointTrajectory JointTrajectory::uniform(MatrixXd values) {
  JointTrajectory traj;
  const auto n = static_cast<std::size_t>(values.rows());
  traj.phases.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    traj.phases[i] = n > 1 ? static_cast<double>(i) / static_cast<double>(n - 1) : 0.0;
  }
  traj.values = std::move(values);
  return traj;
}

VectorXd fit_weights(const JointTrajectory& traj, const BasisConfig& cfg, const Regularizer& reg) {
  cfg.validate();
  const std::size_t n = traj.length();
  if (traj.phases.size() != n) throw ContractError("trajectory phase count differs from sample count");
  if (n < cfg.n_basis) throw ContractError("trajectory shorter than the number of basis functions");
  if (!traj.values.allFinite()) throw ContractError("trajectory values must be finite");

  const auto nb = static_cast<Eigen::Index>(cfg.n_basis);
  MatrixXd design(static_cast<Eigen::Index>(n), nb);
  for (std::size_t i = 0; i < n; ++i) {
    design.row(static_cast<Eigen::Index>(i)) = basis_activations(traj.phases[i], cfg).transpose();
  }

  MatrixXd normal = design.transpose() * design;
  if (const auto* ridge = std::get_if<Ridge>(&reg)) {
    normal.diagonal().array() += ridge->lambda;
  } else {
    const double lambda = std::get<Jerk>(reg).lambda;
    MatrixXd jerk(static_cast<Eigen::Index>(n), nb);
    for (std::size_t i = 0; i < n; ++i) {
      jerk.row(static_cast<Eigen::Index>(i)) = basis_third_derivative_activations(traj.phases[i], cfg).transpose();
    }
    normal += lambda * jerk.transpose() * jerk;
  }

  Eigen::LDLT<MatrixXd> ldlt(normal);
  const double rcond = ldlt.info() == Eigen::Success ? ldlt.rcond() : 0.0;
  if (!(rcond > 1e-15)) {
    std::ostringstream msg;
    msg << "singular normal matrix in weight fit (reciprocal condition estimate " << rcond << ")";
    throw NumericalError(msg.str());
  }

  const std::size_t dof = traj.dof();
  VectorXd weights(nb * static_cast<Eigen::Index>(dof));
  const MatrixXd rhs = design.transpose() * traj.values;
  const MatrixXd solved = ldlt.solve(rhs);
  for (std::size_t d = 0; d < dof; ++d) {
    weights.segment(static_cast<Eigen::Index>(d) * nb, nb) = solved.col(static_cast<Eigen::Index>(d));
  }
  return weights;
}

ProMP::ProMP(BasisConfig basis, VectorXd mean_weights, MatrixXd weight_cov, MatrixXd obs_noise)
    : basis_(std::move(basis)), mean_(std::move(mean_weights)), cov_(std::move(weight_cov)),
      obs_noise_(std::move(obs_noise)) {
  validate();
}

void ProMP::validate() const {
  basis_.validate();
  if (obs_noise_.rows() == 0) throw ContractError("ProMP needs at least one degree of freedom");
  const auto order = static_cast<Eigen::Index>(basis_.n_basis * dof());
  if (mean_.size() != order) throw ContractError("mean weight length differs from dof * n_basis");
  if (cov_.rows() != order || cov_.cols() != order) throw ContractError("weight covariance has the wrong shape");
  if (!mean_.allFinite()) throw ContractError("mean weights must be finite");
  require_psd(cov_, "weight covariance");
  require_psd(obs_noise_, "observation noise");
}

ProMP fit_promp(std::span<const VectorXd> samples, const MatrixXd& obs_noise, const BasisConfig& basis) {
  if (samples.size() < 2) throw ContractError("fitting a ProMP needs at least 2 weight samples");
  const Eigen::Index order = samples.front().size();
  MatrixXd stacked(order, static_cast<Eigen::Index>(samples.size()));
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].size() != order) throw ContractError("weight samples differ in length");
    stacked.col(static_cast<Eigen::Index>(i)) = samples[i];
  }
  const VectorXd mean = stacked.rowwise().mean();
  const MatrixXd centered = stacked.colwise() - mean;
  MatrixXd cov = centered * centered.transpose() / static_cast<double>(samples.size() - 1);
  cov = symmetrize(cov);
  cov.diagonal().array() += kCovarianceJitter;
  return ProMP(basis, mean, cov, obs_noise);
}

Gaussian marginal(const ProMP& p, double z) {
  const MatrixXd psi = basis_matrix(z, p.basis(), p.dof());
  Gaussian g;
  g.mean = psi.transpose() * p.mean_weights();
  g.cov = symmetrize(psi.transpose() * p.weight_cov() * psi) + p.obs_noise();
  return g;
}

ProMP condition_joint_space(const ProMP& p, double z, const VectorXd& y_star, const MatrixXd& noise_star) {
  const auto dof = static_cast<Eigen::Index>(p.dof());
  if (y_star.size() != dof) throw ContractError("observation has the wrong dimension");
  if (noise_star.rows() != dof || noise_star.cols() != dof) throw ContractError("observation noise has the wrong shape");
  require_psd(noise_star, "observation noise");

  const MatrixXd psi = basis_matrix(z, p.basis(), p.dof());
  const MatrixXd& cov = p.weight_cov();
  const MatrixXd psi_t_cov = psi.transpose() * cov;  // dof x order
  MatrixXd innovation = symmetrize(noise_star + psi_t_cov * psi);

  Eigen::LDLT<MatrixXd> ldlt(innovation);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || !(ldlt.rcond() > 1e-15)) {
    warn("conditioning: innovation covariance is near-singular, adding 1e-12 I");
    innovation.diagonal().array() += kSingularRegularizer;
    ldlt.compute(innovation);
  }
  // K = cov psi S^-1, computed as (S^-1 psi^T cov)^T.
  const MatrixXd gain = ldlt.solve(psi_t_cov).transpose();
  VectorXd mean = p.mean_weights() + gain * (y_star - psi.transpose() * p.mean_weights());
  MatrixXd new_cov = symmetrize(cov - gain * psi_t_cov);
  return ProMP(p.basis(), std::move(mean), std::move(new_cov), p.obs_noise());
}

TaskConditioning condition_task_space(const ProMP& p, double z, const TaskTarget& target,
                                      const kinematics::ArmModel& model,
                                      const TaskConditioningOptions& options) {
  using kinematics::JointAngles;
  using Vec4 = Eigen::Vector4d;
  using Mat4 = Eigen::Matrix4d;

  if (p.dof() != 4) throw ContractError("task-space conditioning needs a 4-DoF primitive");
  model.validate();
  require_psd(target.accuracy, "task accuracy");
  if (!target.position.allFinite()) throw ContractError("task target must be finite");

  const Gaussian prior = marginal(p, z);
  const Vec4 mu = prior.mean;
  const Mat4 prior_cov = prior.cov;
  const Eigen::LDLT<Mat4> prior_solver(prior_cov);
  const Eigen::LDLT<Eigen::Matrix3d> task_solver(target.accuracy);

  const auto clamp = [](Vec4 y) {
    y[3] = std::clamp(y[3], 0.0, std::numbers::pi);
    return y;
  };
  const auto cost = [&](const Vec4& y) {
    const Vec3 r = kinematics::forward_kinematics(model, JointAngles::from_vector(y)) - target.position;
    const Vec4 d = y - mu;
    return r.dot(task_solver.solve(r)) + d.dot(prior_solver.solve(d));
  };

  Vec4 y = mu;
  double current = cost(y);
  double damping = 1e-3;
  bool converged = false;
  int iter = 0;
  for (; iter < options.max_iters && !converged; ++iter) {
    const JointAngles q = JointAngles::from_vector(y);
    const kinematics::Jacobian jac = kinematics::jacobian(model, q);
    const Vec3 r = kinematics::forward_kinematics(model, q) - target.position;
    const Eigen::Matrix<double, 3, 4> weighted_jac = task_solver.solve(jac);
    const Vec4 grad = weighted_jac.transpose() * r + prior_solver.solve(Vec4(y - mu));
    const Mat4 hessian = jac.transpose() * weighted_jac + prior_solver.solve(Mat4::Identity());

    bool accepted = false;
    while (!accepted) {
      Mat4 damped = hessian;
      damped.diagonal() += damping * hessian.diagonal().cwiseMax(1e-12);
      const Vec4 step = damped.ldlt().solve(-grad);
      const Vec4 candidate = clamp(y + step);
      const double value = cost(candidate);
      if (value <= current) {
        const double moved = (candidate - y).norm();
        y = candidate;
        current = value;
        damping = std::max(damping / 3.0, 1e-12);
        accepted = true;
        if (moved < options.step_tolerance) converged = true;
      } else {
        damping *= 4.0;
        if (damping > 1e12) {
          // No descent direction left at this scale: y is a (projected) stationary point.
          converged = true;
          break;
        }
      }
    }
  }

  const Mat4 noise = options.kappa * prior_cov;
  TaskConditioning out{condition_joint_space(p, z, y, noise), JointAngles::from_vector(y), converged, iter};
  return out;
}

JointTrajectory sample_trajectory(const ProMP& p, std::span<const double> phases, std::uint64_t seed) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(p.weight_cov());
  const MatrixXd factor = eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  VectorXd xi(p.mean_weights().size());
  for (Eigen::Index i = 0; i < xi.size(); ++i) xi[i] = normal(rng);
  const VectorXd omega = p.mean_weights() + factor * xi;

  JointTrajectory traj;
  traj.phases.assign(phases.begin(), phases.end());
  traj.values.resize(static_cast<Eigen::Index>(phases.size()), static_cast<Eigen::Index>(p.dof()));
  for (std::size_t i = 0; i < phases.size(); ++i) {
    traj.values.row(static_cast<Eigen::Index>(i)) =
        (basis_matrix(phases[i], p.basis(), p.dof()).transpose() * omega).transpose();
  }
  return traj;
}

JointTrajectory mean_trajectory(const ProMP& p, std::span<const double> phases) {
  JointTrajectory traj;
  traj.phases.assign(phases.begin(), phases.end());
  traj.values.resize(static_cast<Eigen::Index>(phases.size()), static_cast<Eigen::Index>(p.dof()));
  for (std::size_t i = 0; i < phases.size(); ++i) {
    traj.values.row(static_cast<Eigen::Index>(i)) =
        (basis_matrix(phases[i], p.basis(), p.dof()).transpose() * p.mean_weights()).transpose();
  }
  return traj;
}

}  // namespace handshake::promp
