#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace flexq::qp {

using SparseMatrix = Eigen::SparseMatrix<double>;
using Vector = Eigen::VectorXd;

/// minimise ½ xᵀPx + qᵀx  subject to  A x = b,  G x ≤ h.
/// P must be symmetric positive semi-definite and stored in full.
struct Problem {
  SparseMatrix P;
  Vector q;
  SparseMatrix A;
  Vector b;
  SparseMatrix G;
  Vector h;

  // Optional family label per constraint row, used in failure reports.
  std::vector<int> eq_family;
  std::vector<int> ineq_family;
  std::vector<std::string> family_names;

  int variables() const { return static_cast<int>(q.size()); }
  void validate() const;
};

struct Settings {
  double tolerance = 1e-9;  // on scaled residuals and the total duality gap
  int max_iterations = 80;
  double regularisation = 1e-8;
  int refinement_steps = 3;
};

struct Solution {
  Vector x, y, z, s;  // primal, equality duals, inequality duals, slacks
  double objective = 0.0;
  int iterations = 0;
};

struct KktResiduals {
  double stationarity = 0.0;     // ‖Px + q + Aᵀy + Gᵀz‖∞
  double equality = 0.0;         // ‖Ax − b‖∞
  double inequality = 0.0;       // ‖max(Gx − h, 0)‖∞
  double complementarity = 0.0;  // max |zᵢ (hᵢ − Gᵢx)|
  double dual_sign = 0.0;        // ‖max(−z, 0)‖∞

  double worst() const;
};

class SolveError : public std::runtime_error {
 public:
  SolveError(const std::string& what, std::string family, KktResiduals best)
      : std::runtime_error(what), family_(std::move(family)), best_(best) {}
  const std::string& family() const { return family_; }
  const KktResiduals& best() const { return best_; }

 private:
  std::string family_;
  KktResiduals best_;
};

/// Primal-dual interior point with Mehrotra predictor-corrector steps on a regularised sparse KKT system.
Solution solve(const Problem& problem, const Settings& settings = {});

KktResiduals kkt_residuals(const Problem& problem, const Solution& solution);

double objective(const Problem& problem, const Vector& x);

}  // namespace flexq::qp
