#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "uotflow/common.hpp"

namespace uotflow {

enum class Activation : std::uint8_t { Tanh = 0 };
enum class OutputHead : std::uint8_t { Linear = 0, Softplus = 1 };

/// Fully connected scalar field over (t, x): input dim = 1 + d, output dim 1.
struct FieldNetwork {
  std::vector<int> layer_dims;           // {1 + d, hidden..., 1}
  std::vector<Eigen::MatrixXd> weights;  // weights[m]: dims[m+1] x dims[m]
  std::vector<Eigen::VectorXd> biases;   // biases[m]: dims[m+1]
  Activation hidden_activation = Activation::Tanh;
  OutputHead output_head = OutputHead::Linear;
  std::uint64_t init_seed = 0;

  int input_dim() const { return layer_dims.front(); }
  int spatial_dim() const { return layer_dims.front() - 1; }
  int layer_count() const { return static_cast<int>(weights.size()); }
  int param_count() const;

  /// Flat parameter vector: layers in order, W row-major, then bias.
  Eigen::VectorXd pack_params() const;
  void unpack_params(const Eigen::Ref<const Eigen::VectorXd>& flat);
};

/// Glorot-uniform weights (U(-a, a), a = sqrt(6/(fan_in+fan_out))), zero
/// biases. Same seed gives bit-identical parameters.
FieldNetwork init_network(const std::vector<int>& layer_dims, Activation hidden,
                          OutputHead head, std::uint64_t seed);

void write_network(std::ostream& out, const FieldNetwork& net);
FieldNetwork read_network(std::istream& in);
void save_network(const FieldNetwork& net, const std::string& path);
FieldNetwork load_network(const std::string& path);

/// Value and input derivatives of a field at one point.
struct FieldJet {
  double u = 0.0;
  double u_t = 0.0;
  Eigen::VectorXd grad_x;  // d
  Eigen::MatrixXd hess_x;  // d x d, symmetric
};

/// Plain forward evaluation. Deliberately loop-simple: this is the base the
/// finite-difference oracle differentiates, independent of JetBatch.
double eval_scalar(const FieldNetwork& net, double t,
                   const Eigen::Ref<const Eigen::VectorXd>& x);

FieldJet eval_jet(const FieldNetwork& net, double t,
                  const Eigen::Ref<const Eigen::VectorXd>& x);

/// Which derivative columns a JetBatch propagates per point.
///   col 0                value
///   col 1                d/dt                     (if time_deriv)
///   next d cols          d/dx_a                   (if spatial_grad)
///   second-order block   spatial Hessian, packed upper triangle (a <= b),
///                        or a single trace(P H) column for a per-point
///                        projection frame (Euclidean frame: plain Laplacian)
struct JetColumns {
  enum class Second : std::uint8_t { None = 0, PackedHessian, ProjectedTrace };

  int spatial_dim = 0;
  bool time_deriv = false;
  bool spatial_grad = false;
  Second second = Second::None;

  static JetColumns full(int d) {
    return {d, true, true, Second::PackedHessian};
  }
  static JetColumns value_only(int d) { return {d, false, false, Second::None}; }

  int first_order_count() const {
    return (time_deriv ? 1 : 0) + (spatial_grad ? spatial_dim : 0);
  }
  int second_count() const {
    switch (second) {
      case Second::None: return 0;
      case Second::PackedHessian: return spatial_dim * (spatial_dim + 1) / 2;
      case Second::ProjectedTrace: return 1;
    }
    return 0;
  }
  int total() const { return 1 + first_order_count() + second_count(); }
  int time_col() const { return 1; }
  int grad_col() const { return 1 + (time_deriv ? 1 : 0); }
  int second_col() const { return 1 + first_order_count(); }
  /// Packed index of hessian entry (a, b), a <= b, relative to second_col().
  int pair_offset(int a, int b) const { return a * spatial_dim - a * (a - 1) / 2 + (b - a); }
};

/// Batched jet propagation through one network with a reverse pass for
/// parameter gradients. Column blocks are laid out per point so every layer
/// is a single GEMM over the whole batch.
class JetBatch {
 public:
  JetBatch(const FieldNetwork& net, JetColumns cols);

  /// frames[i] (d x k, possibly null or 0 columns = Euclidean) is consulted
  /// only for ProjectedTrace columns.
  void forward(std::span<const double> ts,
               const Eigen::Ref<const Eigen::MatrixXd>& xs,
               std::span<const Eigen::MatrixXd* const> frames = {});

  int point_count() const { return npts_; }
  const JetColumns& columns() const { return cols_; }

  double out(int i, int col) const { return out_ptr_[i * C_ + col]; }
  double value(int i) const { return out(i, 0); }
  double time_deriv(int i) const { return out(i, cols_.time_col()); }
  Eigen::VectorXd gradient(int i) const;
  double projected_trace(int i) const { return out(i, cols_.second_col()); }
  Eigen::MatrixXd hessian(int i) const;
  FieldJet jet(int i) const;  // requires the full() layout

  /// Cotangent interface: reset, fill d(scalar)/d(out columns), backward.
  void reset_cotangents();
  double& cot(int i, int col) { return cot_ptr_[i * C_ + col]; }
  void add_jet_cotangent(int i, const FieldJet& adjoint);

  /// Accumulates d(scalar)/d(params) into grad (size param_count()).
  void backward(Eigen::Ref<Eigen::VectorXd> grad);

 private:
  void activation_forward(int layer);
  void activation_backward(int layer, Eigen::MatrixXd& ybar, Eigen::MatrixXd& zbar);

  const FieldNetwork* net_;
  JetColumns cols_;
  int C_;
  int npts_ = 0;
  std::vector<Eigen::MatrixXd> A_;  // activations, A_[0] = inputs, A_[M] = output jet
  std::vector<Eigen::MatrixXd> Z_;  // pre-activations per layer
  Eigen::MatrixXd cotan_;           // 1 x C*P
  std::vector<const Eigen::MatrixXd*> frames_;
  const double* out_ptr_ = nullptr;
  double* cot_ptr_ = nullptr;
  // per-point workspaces
  Eigen::ArrayXd ws_s1_, ws_s2_, ws_s3_, ws_g_, ws_vbar_;
  Eigen::MatrixXd ws_dots_;
};

/// Scalar functional of the jets at a batch of points. Receives the jets,
/// must return the value and fill one adjoint jet per point with
/// d(value)/d(jet component). hess_x adjoint entries are treated
/// independently and summed over symmetric pairs.
using JetFunctional =
    std::function<double(std::span<const FieldJet>, std::span<FieldJet>)>;

/// Gradient of `functional` with respect to the network parameters, aligned
/// with pack_params(). Throws DivergenceError if the functional value is not
/// finite.
Eigen::VectorXd param_grad(const FieldNetwork& net, std::span<const double> ts,
                           const Eigen::Ref<const Eigen::MatrixXd>& xs,
                           const JetFunctional& functional);

}  // namespace uotflow
