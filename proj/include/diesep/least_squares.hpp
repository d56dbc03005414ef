#pragma once

#include <cmath>
#include <limits>

#include <Eigen/Dense>

namespace diesep {

struct LmOptions {
  int max_iterations = 200;
  double step_tolerance = 1e-14;  // relative parameter change
  double cost_tolerance = 1e-30;  // absolute cost, for exact-fit data
  double initial_lambda = 1e-3;
};

struct LmResult {
  Eigen::VectorXd params;
  double cost = 0.0;  // 0.5 * |r|^2
  int iterations = 0;
  bool converged = false;
};

/// Levenberg-Marquardt with Marquardt diagonal scaling.
///
/// `model(p, r, J)` fills the residual vector r and Jacobian J (rows = residuals)
/// at parameters p; it may resize both.
template <class Model>
LmResult levenberg_marquardt(Model&& model, Eigen::VectorXd p, const LmOptions& opt = {}) {
  Eigen::VectorXd r;
  Eigen::MatrixXd J;
  model(p, r, J);
  double cost = 0.5 * r.squaredNorm();
  double lambda = opt.initial_lambda;

  LmResult out{p, cost, 0, false};
  for (int it = 0; it < opt.max_iterations; ++it) {
    out.iterations = it + 1;
    if (cost <= opt.cost_tolerance) {
      out.converged = true;
      break;
    }
    const Eigen::MatrixXd JtJ = J.transpose() * J;
    const Eigen::VectorXd g = J.transpose() * r;
    bool improved = false;
    while (lambda < 1e16) {
      Eigen::MatrixXd A = JtJ;
      A.diagonal() += lambda * JtJ.diagonal().cwiseMax(1e-300);
      const Eigen::VectorXd step = A.ldlt().solve(-g);
      if (!step.allFinite()) {
        lambda *= 10.0;
        continue;
      }
      const Eigen::VectorXd trial = p + step;
      Eigen::VectorXd r_trial;
      Eigen::MatrixXd J_trial;
      model(trial, r_trial, J_trial);
      const double trial_cost = 0.5 * r_trial.squaredNorm();
      if (std::isfinite(trial_cost) && trial_cost <= cost) {
        const double rel_step = step.norm() / (p.norm() + 1e-300);
        const double rel_gain = (cost - trial_cost) / (cost + 1e-300);
        p = trial;
        r = std::move(r_trial);
        J = std::move(J_trial);
        cost = trial_cost;
        lambda = std::max(lambda / 10.0, 1e-15);
        improved = true;
        if (rel_step < opt.step_tolerance || rel_gain < 1e-15) out.converged = true;
        break;
      }
      lambda *= 10.0;
    }
    out.params = p;
    out.cost = cost;
    if (!improved) {
      // No descent direction left: at a minimum to working precision.
      out.converged = g.norm() <= 1e-8 * (1.0 + std::sqrt(2.0 * cost)) * (1.0 + J.norm());
      break;
    }
    if (out.converged) break;
  }
  out.params = p;
  out.cost = cost;
  return out;
}

}  // namespace diesep
