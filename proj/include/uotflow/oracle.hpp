#pragma once

#include <Eigen/Dense>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "uotflow/fieldnet.hpp"

namespace uotflow {

struct OracleCheck {
  std::string name;
  double measured = 0.0;
  double expected = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

struct OracleReport {
  std::vector<OracleCheck> checks;

  /// pass iff |measured - expected| <= tolerance * max(1, |expected|)
  void add(const std::string& name, double measured, double expected, double tolerance);
  bool all_pass() const;
  std::string table() const;
};

/// Central-difference check of every FieldJet component at the given points.
/// Gradient/value errors are compared at `tol_grad`, Hessian entries at
/// `tol_hess`, relative to max(1, |value|).
OracleReport fd_check(const FieldNetwork& net, std::span<const double> ts,
                      const Eigen::Ref<const Eigen::MatrixXd>& xs, double h,
                      double tol_grad = 1e-5, double tol_hess = 1e-4);

/// Central-difference check of param_grad for the functional mean(u^2).
OracleReport fd_check_param_grad(const FieldNetwork& net, std::span<const double> ts,
                                 const Eigen::Ref<const Eigen::MatrixXd>& xs,
                                 double h, double tol = 1e-5);

/// Optimal pure-growth cost for rho1 = kappa * rho0 at a fixed location:
/// (4/eta) (sqrt(kappa) - 1)^2 m0. Throws for eta == 0.
double analytic_fr_cost(double m0, double kappa, double eta);

/// Equal-mass translation of identical unit-mass shapes: 0.5 |dmu|^2.
double analytic_ot_cost_translation(const Eigen::Ref<const Eigen::VectorXd>& dmu);

/// Brute-force counterpart of analytic_fr_cost: minimizes the discretized
/// growth action over s(t), s(0)=1, s(1)=sqrt(kappa), on n_steps steps.
double fr_path_minimization(double m0, double kappa, double eta, int n_steps);

/// Exact uncapacitated transportation problem (primal network simplex,
/// arcs kept implicit so dense instances need O(n) memory). Marginal sums
/// must agree to 1e-9 relative. Returns min sum f_ij cost(i, j).
double transport_network_simplex(const Eigen::VectorXd& supply,
                                 const Eigen::VectorXd& demand,
                                 const std::function<double(int, int)>& cost);

/// Halved squared 2-Wasserstein distance between two nonnegative fields
/// sampled on the cell centers of a common 2D box grid. Each field is
/// normalized to unit mass; cells below mass_cutoff * max are dropped.
double discrete_ot_halved_w2(const Eigen::Ref<const Eigen::MatrixXd>& rho0,
                             const Eigen::Ref<const Eigen::MatrixXd>& rho1,
                             const Eigen::Vector2d& lo, const Eigen::Vector2d& hi,
                             double mass_cutoff = 1e-12);

/// Batched view of a potential field: values and spatial gradients.
class PotentialField {
 public:
  virtual ~PotentialField() = default;
  virtual void eval(std::span<const double> ts,
                    const Eigen::Ref<const Eigen::MatrixXd>& xs,
                    Eigen::VectorXd& values, Eigen::MatrixXd& grads) const = 0;
};

class NetworkPotential final : public PotentialField {
 public:
  explicit NetworkPotential(const FieldNetwork& net) : net_(&net) {}
  void eval(std::span<const double> ts, const Eigen::Ref<const Eigen::MatrixXd>& xs,
            Eigen::VectorXd& values, Eigen::MatrixXd& grads) const override;

 private:
  const FieldNetwork* net_;
};

/// Analytic potential for tests: user supplies value and gradient callbacks.
class CallbackPotential final : public PotentialField {
 public:
  using ValueFn = std::function<double(double, const Eigen::VectorXd&)>;
  using GradFn = std::function<Eigen::VectorXd(double, const Eigen::VectorXd&)>;
  CallbackPotential(ValueFn v, GradFn g) : v_(std::move(v)), g_(std::move(g)) {}
  void eval(std::span<const double> ts, const Eigen::Ref<const Eigen::MatrixXd>& xs,
            Eigen::VectorXd& values, Eigen::MatrixXd& grads) const override;

 private:
  ValueFn v_;
  GradFn g_;
};

struct FvGrid {
  Eigen::VectorXd lo, hi;   // box bounds, size 1 or 2
  std::vector<int> shape;   // cells per axis
  int cell_count() const;
  double cell_volume() const;
};

/// First-order upwind finite-volume integration of
///   d_t rho + div(rho grad phi) = (eta/2) rho phi
/// from the given cell averages at t=0 to t=1, with zero boundary flux.
/// Time steps are CFL-limited from the current velocity field; non-finite
/// or absurdly large velocities abort.
Eigen::VectorXd fv_integrate_continuity(const PotentialField& phi, const FvGrid& grid,
                                        const Eigen::VectorXd& rho0, double eta,
                                        double cfl = 0.9);

/// Quadrature mass sum w . rho per time stamp.
std::vector<std::pair<double, double>> mass_timeseries(
    std::span<const double> times, std::span<const Eigen::VectorXd> rho_values,
    const Eigen::VectorXd& weights);

}  // namespace uotflow
