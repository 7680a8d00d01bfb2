#include "uotflow/fieldnet.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace uotflow {

namespace {

constexpr std::uint32_t kNetMagic = 0x4e544f55;  // "UOTN"
constexpr std::uint32_t kNetVersion = 1;

// tanh and its first three derivatives expressed through s = tanh(v):
//   s1 = 1 - s^2, s2 = -2 s s1, s3 = -2 s1^2 + 4 s^2 s1.
// softplus expressed through the logistic p = 1/(1+exp(-v)):
//   sp' = p, sp'' = p(1-p), sp''' = p(1-p)(1-2p).

inline double softplus(double v) {
  return v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
}
inline double logistic(double v) {
  return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
}

void check_dims(const std::vector<int>& dims) {
  if (dims.size() < 2) throw std::invalid_argument("layer_dims needs input and output");
  for (int d : dims)
    if (d <= 0) throw std::invalid_argument("layer_dims entries must be positive");
  if (dims.back() != 1) throw std::invalid_argument("output dimension must be 1 (scalar field)");
  if (dims.front() < 2) throw std::invalid_argument("input dimension must be at least 2 (t plus x)");
}

template <typename T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
T read_pod(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error("truncated network stream");
  return v;
}

}  // namespace

int FieldNetwork::param_count() const {
  int n = 0;
  for (std::size_t m = 0; m < weights.size(); ++m)
    n += static_cast<int>(weights[m].size() + biases[m].size());
  return n;
}

Eigen::VectorXd FieldNetwork::pack_params() const {
  Eigen::VectorXd flat(param_count());
  int k = 0;
  for (std::size_t m = 0; m < weights.size(); ++m) {
    const auto& w = weights[m];
    for (int i = 0; i < w.rows(); ++i)
      for (int j = 0; j < w.cols(); ++j) flat[k++] = w(i, j);
    for (int i = 0; i < biases[m].size(); ++i) flat[k++] = biases[m][i];
  }
  return flat;
}

void FieldNetwork::unpack_params(const Eigen::Ref<const Eigen::VectorXd>& flat) {
  if (flat.size() != param_count())
    throw std::invalid_argument("parameter vector has wrong length");
  int k = 0;
  for (std::size_t m = 0; m < weights.size(); ++m) {
    auto& w = weights[m];
    for (int i = 0; i < w.rows(); ++i)
      for (int j = 0; j < w.cols(); ++j) w(i, j) = flat[k++];
    for (int i = 0; i < biases[m].size(); ++i) biases[m][i] = flat[k++];
  }
}

FieldNetwork init_network(const std::vector<int>& layer_dims, Activation hidden,
                          OutputHead head, std::uint64_t seed) {
  check_dims(layer_dims);
  FieldNetwork net;
  net.layer_dims = layer_dims;
  net.hidden_activation = hidden;
  net.output_head = head;
  net.init_seed = seed;
  Rng rng(seed);
  for (std::size_t m = 0; m + 1 < layer_dims.size(); ++m) {
    const int fan_in = layer_dims[m], fan_out = layer_dims[m + 1];
    const double a = std::sqrt(6.0 / (fan_in + fan_out));
    Eigen::MatrixXd w(fan_out, fan_in);
    for (int i = 0; i < fan_out; ++i)
      for (int j = 0; j < fan_in; ++j) w(i, j) = rng.uniform(-a, a);
    net.weights.push_back(std::move(w));
    net.biases.push_back(Eigen::VectorXd::Zero(fan_out));
  }
  return net;
}

void write_network(std::ostream& out, const FieldNetwork& net) {
  write_pod(out, kNetMagic);
  write_pod(out, kNetVersion);
  write_pod(out, static_cast<std::uint8_t>(net.hidden_activation));
  write_pod(out, static_cast<std::uint8_t>(net.output_head));
  write_pod(out, net.init_seed);
  write_pod(out, static_cast<std::uint32_t>(net.layer_dims.size()));
  for (int d : net.layer_dims) write_pod(out, static_cast<std::uint32_t>(d));
  const Eigen::VectorXd flat = net.pack_params();
  out.write(reinterpret_cast<const char*>(flat.data()),
            static_cast<std::streamsize>(sizeof(double) * flat.size()));
}

FieldNetwork read_network(std::istream& in) {
  if (read_pod<std::uint32_t>(in) != kNetMagic)
    throw std::runtime_error("not a network checkpoint");
  if (read_pod<std::uint32_t>(in) != kNetVersion)
    throw std::runtime_error("unsupported checkpoint version");
  const auto act = static_cast<Activation>(read_pod<std::uint8_t>(in));
  const auto head = static_cast<OutputHead>(read_pod<std::uint8_t>(in));
  const auto seed = read_pod<std::uint64_t>(in);
  const auto nl = read_pod<std::uint32_t>(in);
  std::vector<int> dims(nl);
  for (auto& d : dims) d = static_cast<int>(read_pod<std::uint32_t>(in));
  check_dims(dims);
  FieldNetwork net = init_network(dims, act, head, seed);
  Eigen::VectorXd flat(net.param_count());
  in.read(reinterpret_cast<char*>(flat.data()),
          static_cast<std::streamsize>(sizeof(double) * flat.size()));
  if (!in) throw std::runtime_error("truncated network checkpoint");
  net.unpack_params(flat);
  return net;
}

void save_network(const FieldNetwork& net, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  write_network(f, net);
}

FieldNetwork load_network(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read " + path);
  return read_network(f);
}

double eval_scalar(const FieldNetwork& net, double t,
                   const Eigen::Ref<const Eigen::VectorXd>& x) {
  if (x.size() + 1 != net.input_dim())
    throw std::invalid_argument("point dimension does not match network input");
  Eigen::VectorXd a(net.input_dim());
  a[0] = t;
  a.tail(x.size()) = x;
  const int M = net.layer_count();
  for (int m = 0; m < M; ++m) {
    Eigen::VectorXd z = net.weights[m] * a + net.biases[m];
    if (m + 1 < M) {
      a = z.array().tanh().matrix();
    } else {
      a = z;
    }
  }
  double u = a[0];
  if (net.output_head == OutputHead::Softplus) u = softplus(u);
  return u;
}

JetBatch::JetBatch(const FieldNetwork& net, JetColumns cols)
    : net_(&net), cols_(cols), C_(cols.total()) {
  if (cols_.spatial_dim != net.spatial_dim())
    throw std::invalid_argument("JetColumns spatial_dim does not match network");
  if (cols_.second != JetColumns::Second::None && !cols_.spatial_grad)
    throw std::invalid_argument("second-order columns require spatial_grad");
  const int M = net.layer_count();
  A_.resize(M + 1);
  Z_.resize(M);
  int nmax = 0;
  for (int d : net.layer_dims) nmax = std::max(nmax, d);
  ws_s1_.resize(nmax);
  ws_s2_.resize(nmax);
  ws_s3_.resize(nmax);
  ws_g_.resize(nmax);
  ws_vbar_.resize(nmax);
}

void JetBatch::forward(std::span<const double> ts,
                       const Eigen::Ref<const Eigen::MatrixXd>& xs,
                       std::span<const Eigen::MatrixXd* const> frames) {
  const int P = static_cast<int>(ts.size());
  const int d = cols_.spatial_dim;
  if (xs.cols() != P) throw std::invalid_argument("ts and xs disagree on point count");
  if (xs.rows() != d) throw std::invalid_argument("xs has wrong spatial dimension");
  if (cols_.second == JetColumns::Second::ProjectedTrace && !frames.empty() &&
      static_cast<int>(frames.size()) != P)
    throw std::invalid_argument("frames size must match point count");
  npts_ = P;
  frames_.assign(frames.begin(), frames.end());

  const int M = net_->layer_count();
  const int n0 = net_->input_dim();
  A_[0].setZero(n0, C_ * P);
  for (int i = 0; i < P; ++i) {
    const int base = i * C_;
    A_[0](0, base) = ts[i];
    A_[0].block(1, base, d, 1) = xs.col(i);
    if (cols_.time_deriv) A_[0](0, base + cols_.time_col()) = 1.0;
    if (cols_.spatial_grad)
      for (int a = 0; a < d; ++a) A_[0](1 + a, base + cols_.grad_col() + a) = 1.0;
  }

  for (int m = 0; m < M; ++m) {
    Z_[m].resize(net_->layer_dims[m + 1], C_ * P);
    Z_[m].noalias() = net_->weights[m] * A_[m];
    for (int i = 0; i < P; ++i) Z_[m].col(i * C_) += net_->biases[m];
    if (m + 1 < M) {
      activation_forward(m);
    } else if (net_->output_head == OutputHead::Softplus) {
      activation_forward(m);
    } else {
      A_[M] = Z_[m];
    }
  }
  out_ptr_ = A_[M].data();
}

// Elementwise jet chain rule through the layer's activation (tanh for hidden
// layers, softplus for the output head). First-order columns scale by s1;
// a second-order column q picks up the curvature term s2 * (first-order
// products) plus s1 * q.
void JetBatch::activation_forward(int layer) {
  const int M = net_->layer_count();
  const bool is_head = (layer == M - 1);
  const int n = net_->layer_dims[layer + 1];
  Eigen::MatrixXd& Z = Z_[layer];
  Eigen::MatrixXd& A = A_[layer + 1];
  A.resize(n, C_ * npts_);
  const int F = cols_.first_order_count();
  const int d = cols_.spatial_dim;
  const int g0 = cols_.grad_col();
  const int q0 = cols_.second_col();

  for (int i = 0; i < npts_; ++i) {
    const int base = i * C_;
    auto z = Z.col(base).array();
    auto s1 = ws_s1_.head(n);
    auto s2 = ws_s2_.head(n);
    if (!is_head) {
      A.col(base) = z.tanh();
      auto s = A.col(base).array();
      s1 = 1.0 - s * s;
      if (cols_.second != JetColumns::Second::None) s2 = -2.0 * s * s1;
    } else {
      for (int r = 0; r < n; ++r) A(r, base) = softplus(Z(r, base));
      for (int r = 0; r < n; ++r) s1[r] = logistic(Z(r, base));
      if (cols_.second != JetColumns::Second::None) s2 = s1 * (1.0 - s1);
    }
    for (int c = 1; c <= F; ++c)
      A.col(base + c).array() = s1 * Z.col(base + c).array();
    if (cols_.second == JetColumns::Second::PackedHessian) {
      int q = q0;
      for (int a = 0; a < d; ++a)
        for (int b = a; b < d; ++b, ++q)
          A.col(base + q).array() = s2 * Z.col(base + g0 + a).array() *
                                        Z.col(base + g0 + b).array() +
                                    s1 * Z.col(base + q).array();
    } else if (cols_.second == JetColumns::Second::ProjectedTrace) {
      auto g = ws_g_.head(n);
      g.setZero();
      for (int a = 0; a < d; ++a) g += Z.col(base + g0 + a).array().square();
      const Eigen::MatrixXd* fr =
          frames_.empty() ? nullptr : frames_[static_cast<std::size_t>(i)];
      if (fr != nullptr && fr->cols() > 0) {
        for (int j = 0; j < fr->cols(); ++j) {
          auto dot = ws_s3_.head(n);
          dot.setZero();
          for (int a = 0; a < d; ++a)
            dot += (*fr)(a, j) * Z.col(base + g0 + a).array();
          g -= dot.square();
        }
      }
      A.col(base + q0).array() = s2 * g + s1 * Z.col(base + q0).array();
    }
  }
}

Eigen::VectorXd JetBatch::gradient(int i) const {
  const int d = cols_.spatial_dim;
  Eigen::VectorXd g(d);
  for (int a = 0; a < d; ++a) g[a] = out(i, cols_.grad_col() + a);
  return g;
}

Eigen::MatrixXd JetBatch::hessian(int i) const {
  const int d = cols_.spatial_dim;
  Eigen::MatrixXd h(d, d);
  const int q0 = cols_.second_col();
  for (int a = 0; a < d; ++a)
    for (int b = a; b < d; ++b) {
      const double v = out(i, q0 + cols_.pair_offset(a, b));
      h(a, b) = v;
      h(b, a) = v;
    }
  return h;
}

FieldJet JetBatch::jet(int i) const {
  FieldJet j;
  j.u = value(i);
  j.u_t = time_deriv(i);
  j.grad_x = gradient(i);
  j.hess_x = hessian(i);
  return j;
}

void JetBatch::reset_cotangents() {
  cotan_.setZero(1, C_ * npts_);
  cot_ptr_ = cotan_.data();
}

void JetBatch::add_jet_cotangent(int i, const FieldJet& adjoint) {
  cot(i, 0) += adjoint.u;
  cot(i, cols_.time_col()) += adjoint.u_t;
  for (int a = 0; a < cols_.spatial_dim; ++a)
    cot(i, cols_.grad_col() + a) += adjoint.grad_x[a];
  const int q0 = cols_.second_col();
  for (int a = 0; a < cols_.spatial_dim; ++a)
    for (int b = a; b < cols_.spatial_dim; ++b) {
      double v = adjoint.hess_x(a, b);
      if (b != a) v += adjoint.hess_x(b, a);
      cot(i, q0 + cols_.pair_offset(a, b)) += v;
    }
}

void JetBatch::activation_backward(int layer, Eigen::MatrixXd& ybar,
                                   Eigen::MatrixXd& zbar) {
  const int M = net_->layer_count();
  const bool is_head = (layer == M - 1);
  const int n = net_->layer_dims[layer + 1];
  const Eigen::MatrixXd& Z = Z_[layer];
  const Eigen::MatrixXd& A = A_[layer + 1];
  zbar.resize(n, C_ * npts_);
  const int F = cols_.first_order_count();
  const int d = cols_.spatial_dim;
  const int g0 = cols_.grad_col();
  const int q0 = cols_.second_col();
  const bool second = cols_.second != JetColumns::Second::None;

  for (int i = 0; i < npts_; ++i) {
    const int base = i * C_;
    auto s1 = ws_s1_.head(n);
    auto s2 = ws_s2_.head(n);
    auto s3 = ws_s3_.head(n);
    if (!is_head) {
      auto s = A.col(base).array();
      s1 = 1.0 - s * s;
      s2 = -2.0 * s * s1;
      if (second) s3 = -2.0 * s1 * s1 + 4.0 * s * s * s1;
    } else {
      for (int r = 0; r < n; ++r) s1[r] = logistic(Z(r, base));
      s2 = s1 * (1.0 - s1);
      if (second) s3 = s2 * (1.0 - 2.0 * s1);
    }
    auto vbar = ws_vbar_.head(n);
    vbar = ybar.col(base).array() * s1;
    for (int c = 1; c <= F; ++c) {
      vbar += ybar.col(base + c).array() * Z.col(base + c).array() * s2;
      zbar.col(base + c).array() = ybar.col(base + c).array() * s1;
    }
    if (cols_.second == JetColumns::Second::PackedHessian) {
      int q = q0;
      for (int a = 0; a < d; ++a)
        for (int b = a; b < d; ++b, ++q) {
          auto yq = ybar.col(base + q).array();
          auto za = Z.col(base + g0 + a).array();
          auto zb = Z.col(base + g0 + b).array();
          vbar += yq * (s3 * za * zb + s2 * Z.col(base + q).array());
          zbar.col(base + g0 + a).array() += yq * s2 * zb;
          zbar.col(base + g0 + b).array() += yq * s2 * za;
          zbar.col(base + q).array() = yq * s1;
        }
    } else if (cols_.second == JetColumns::Second::ProjectedTrace) {
      auto yq = ybar.col(base + q0).array();
      auto g = ws_g_.head(n);
      g.setZero();
      for (int a = 0; a < d; ++a) g += Z.col(base + g0 + a).array().square();
      const Eigen::MatrixXd* fr =
          frames_.empty() ? nullptr : frames_[static_cast<std::size_t>(i)];
      const int k = (fr != nullptr) ? static_cast<int>(fr->cols()) : 0;
      if (k > 0) {
        ws_dots_.resize(n, k);
        for (int j = 0; j < k; ++j) {
          ws_dots_.col(j).setZero();
          for (int a = 0; a < d; ++a)
            ws_dots_.col(j).array() += (*fr)(a, j) * Z.col(base + g0 + a).array();
          g -= ws_dots_.col(j).array().square();
        }
      }
      vbar += yq * (s3 * g + s2 * Z.col(base + q0).array());
      zbar.col(base + q0).array() = yq * s1;
      for (int a = 0; a < d; ++a) {
        auto acc = ws_g_.head(n);  // reuse: dG/dz_a
        acc = Z.col(base + g0 + a).array();
        for (int j = 0; j < k; ++j) acc -= (*fr)(a, j) * ws_dots_.col(j).array();
        zbar.col(base + g0 + a).array() += yq * s2 * 2.0 * acc;
      }
    }
    zbar.col(base).array() = vbar;
  }
}

void JetBatch::backward(Eigen::Ref<Eigen::VectorXd> grad) {
  if (grad.size() != net_->param_count())
    throw std::invalid_argument("gradient vector has wrong length");
  const int M = net_->layer_count();
  Eigen::MatrixXd cur = cotan_;
  Eigen::MatrixXd zb;
  // gradient layout offsets per layer
  std::vector<int> offs(M);
  {
    int k = 0;
    for (int m = 0; m < M; ++m) {
      offs[m] = k;
      k += static_cast<int>(net_->weights[m].size() + net_->biases[m].size());
    }
  }
  for (int m = M - 1; m >= 0; --m) {
    const bool has_act = (m + 1 < M) || net_->output_head == OutputHead::Softplus;
    if (has_act) {
      activation_backward(m, cur, zb);
      cur.swap(zb);
    }
    // affine: accumulate dW (row-major inside the flat layout) and db.
    const int rows = net_->layer_dims[m + 1];
    const int cols = net_->layer_dims[m];
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
        gw(grad.data() + offs[m], rows, cols);
    gw.noalias() += cur * A_[m].transpose();
    Eigen::Map<Eigen::VectorXd> gb(grad.data() + offs[m] + rows * cols, rows);
    for (int i = 0; i < npts_; ++i) gb += cur.col(i * C_);
    if (m > 0) {
      Eigen::MatrixXd prev(cols, C_ * npts_);
      prev.noalias() = net_->weights[m].transpose() * cur;
      cur.swap(prev);
    }
  }
}

FieldJet eval_jet(const FieldNetwork& net, double t,
                  const Eigen::Ref<const Eigen::VectorXd>& x) {
  if (x.size() + 1 != net.input_dim())
    throw std::invalid_argument("point dimension does not match network input");
  JetBatch batch(net, JetColumns::full(net.spatial_dim()));
  const double ts[1] = {t};
  Eigen::MatrixXd xs = x;
  batch.forward(std::span<const double>(ts, 1), xs);
  return batch.jet(0);
}

Eigen::VectorXd param_grad(const FieldNetwork& net, std::span<const double> ts,
                           const Eigen::Ref<const Eigen::MatrixXd>& xs,
                           const JetFunctional& functional) {
  const int P = static_cast<int>(ts.size());
  JetBatch batch(net, JetColumns::full(net.spatial_dim()));
  batch.forward(ts, xs);
  std::vector<FieldJet> jets(P);
  std::vector<FieldJet> adj(P);
  const int d = net.spatial_dim();
  for (int i = 0; i < P; ++i) {
    jets[i] = batch.jet(i);
    adj[i].grad_x = Eigen::VectorXd::Zero(d);
    adj[i].hess_x = Eigen::MatrixXd::Zero(d, d);
  }
  const double value = functional(jets, adj);
  if (!std::isfinite(value))
    throw DivergenceError("functional value is not finite");
  batch.reset_cotangents();
  for (int i = 0; i < P; ++i) batch.add_jet_cotangent(i, adj[i]);
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(net.param_count());
  batch.backward(grad);
  for (int i = 0; i < grad.size(); ++i)
    if (!std::isfinite(grad[i]))
      throw DivergenceError("parameter gradient is not finite");
  return grad;
}

}  // namespace uotflow
