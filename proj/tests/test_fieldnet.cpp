#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "uotflow/fieldnet.hpp"
#include "uotflow/oracle.hpp"

using namespace uotflow;

namespace {

FieldNetwork random_net(Rng& rng, int d, OutputHead head) {
  const int depth = 1 + static_cast<int>(rng.raw() % 3);  // 1..3 hidden layers
  std::vector<int> dims = {1 + d};
  for (int l = 0; l < depth; ++l) dims.push_back(2 + static_cast<int>(rng.raw() % 15));
  dims.push_back(1);
  return init_network(dims, Activation::Tanh, head, rng.raw());
}

Eigen::MatrixXd random_points(Rng& rng, int d, int n, double lo = -1.0, double hi = 1.0) {
  Eigen::MatrixXd xs(d, n);
  for (int i = 0; i < n; ++i)
    for (int a = 0; a < d; ++a) xs(a, i) = rng.uniform(lo, hi);
  return xs;
}

std::vector<double> random_times(Rng& rng, int n) {
  std::vector<double> ts(n);
  for (auto& t : ts) t = rng.uniform(0.0, 1.0);
  return ts;
}

}  // namespace

TEST_CASE("init_network is reproducible and rejects bad shapes") {
  const auto a = init_network({3, 8, 1}, Activation::Tanh, OutputHead::Linear, 7);
  const auto b = init_network({3, 8, 1}, Activation::Tanh, OutputHead::Linear, 7);
  CHECK(a.pack_params() == b.pack_params());
  const auto c = init_network({3, 8, 1}, Activation::Tanh, OutputHead::Linear, 8);
  CHECK(a.pack_params() != c.pack_params());

  CHECK_THROWS_AS(init_network({3, 8, 2}, Activation::Tanh, OutputHead::Linear, 0),
                  std::invalid_argument);
  CHECK_THROWS_AS(init_network({3}, Activation::Tanh, OutputHead::Linear, 0),
                  std::invalid_argument);
  CHECK_THROWS_AS(init_network({3, 0, 1}, Activation::Tanh, OutputHead::Linear, 0),
                  std::invalid_argument);
}

TEST_CASE("zeroed softplus network returns ln 2 everywhere") {
  auto net = init_network({3, 1}, Activation::Tanh, OutputHead::Softplus, 1);
  net.weights[0].setZero();
  net.biases[0].setZero();
  Eigen::VectorXd x(2);
  x << 0.3, -0.8;
  CHECK(eval_scalar(net, 0.5, x) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(eval_jet(net, 0.5, x).u == doctest::Approx(std::log(2.0)).epsilon(1e-15));
}

TEST_CASE("tanh network stays finite on a wide box") {
  const auto net = init_network({3, 8, 1}, Activation::Tanh, OutputHead::Linear, 3);
  Rng rng(11);
  for (int i = 0; i < 200; ++i) {
    Eigen::VectorXd x(2);
    x << rng.uniform(-10.0, 10.0), rng.uniform(-10.0, 10.0);
    CHECK(std::isfinite(eval_scalar(net, rng.uniform(-10.0, 10.0), x)));
  }
}

TEST_CASE("affine network jet is exact") {
  auto net = init_network({4, 1}, Activation::Tanh, OutputHead::Linear, 5);
  net.weights[0] << 0.7, -1.2, 0.4, 2.0;  // (t, x0, x1, x2)
  net.biases[0] << 0.3;
  Eigen::VectorXd x(3);
  x << 0.1, -0.5, 0.9;
  const FieldJet jet = eval_jet(net, 0.25, x);
  CHECK(jet.u == doctest::Approx(0.7 * 0.25 - 1.2 * 0.1 + 0.4 * -0.5 + 2.0 * 0.9 + 0.3));
  CHECK(jet.u_t == doctest::Approx(0.7));
  CHECK(jet.grad_x[0] == doctest::Approx(-1.2));
  CHECK(jet.grad_x[1] == doctest::Approx(0.4));
  CHECK(jet.grad_x[2] == doctest::Approx(2.0));
  CHECK(jet.hess_x.norm() == doctest::Approx(0.0));
}

TEST_CASE("softplus head keeps values positive") {
  Rng rng(21);
  for (int rep = 0; rep < 20; ++rep) {
    const auto net = random_net(rng, 2, OutputHead::Softplus);
    const auto xs = random_points(rng, 2, 16, -3.0, 3.0);
    const auto ts = random_times(rng, 16);
    for (int i = 0; i < 16; ++i) CHECK(eval_scalar(net, ts[i], xs.col(i)) > 0.0);
  }
}

TEST_CASE("jets match central finite differences over random networks") {
  Rng rng(42);
  for (int rep = 0; rep < 40; ++rep) {
    const int d = 1 + static_cast<int>(rng.raw() % 3);
    const auto net = random_net(rng, d, rep % 3 == 0 ? OutputHead::Softplus : OutputHead::Linear);
    const auto xs = random_points(rng, d, 5);
    const auto ts = random_times(rng, 5);
    const auto rep_fd = fd_check(net, ts, xs, 1e-4);
    CHECK_MESSAGE(rep_fd.all_pass(), rep_fd.table());
  }
}

TEST_CASE("hessian is symmetric by construction") {
  Rng rng(43);
  const auto net = random_net(rng, 3, OutputHead::Linear);
  const auto xs = random_points(rng, 3, 10);
  const auto ts = random_times(rng, 10);
  for (int i = 0; i < 10; ++i) {
    const auto jet = eval_jet(net, ts[i], xs.col(i));
    CHECK((jet.hess_x - jet.hess_x.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("param_grad: affine output bias has unit gradient") {
  auto net = init_network({3, 4, 1}, Activation::Tanh, OutputHead::Linear, 9);
  const double ts[1] = {0.4};
  Eigen::MatrixXd xs(2, 1);
  xs << 0.2, -0.6;
  const JetFunctional value_at = [](std::span<const FieldJet> jets,
                                    std::span<FieldJet> adj) {
    adj[0].u = 1.0;
    return jets[0].u;
  };
  const Eigen::VectorXd g = param_grad(net, std::span<const double>(ts, 1), xs, value_at);
  CHECK(g[g.size() - 1] == doctest::Approx(1.0));  // output bias is the last parameter
}

TEST_CASE("param_grad of the zero functional vanishes") {
  auto net = init_network({3, 6, 1}, Activation::Tanh, OutputHead::Linear, 10);
  Rng rng(3);
  const auto xs = random_points(rng, 2, 8);
  const auto ts = random_times(rng, 8);
  const JetFunctional zero = [](std::span<const FieldJet>, std::span<FieldJet>) {
    return 0.0;
  };
  CHECK(param_grad(net, ts, xs, zero).norm() == 0.0);
}

TEST_CASE("param_grad matches parameter-space central differences") {
  Rng rng(77);
  for (int rep = 0; rep < 6; ++rep) {
    const auto net = random_net(rng, 2, rep % 2 ? OutputHead::Softplus : OutputHead::Linear);
    const auto xs = random_points(rng, 2, 16);
    const auto ts = random_times(rng, 16);
    const auto rep_fd = fd_check_param_grad(net, ts, xs, 1e-6);
    CHECK_MESSAGE(rep_fd.all_pass(), rep_fd.table());
  }
}

TEST_CASE("param_grad handles functionals of derivative components") {
  // F = mean(u_t + |grad|^2 + trace(hess)^2); adjoints filled by hand.
  Rng rng(78);
  const auto net = random_net(rng, 2, OutputHead::Linear);
  const auto xs = random_points(rng, 2, 6);
  const auto ts = random_times(rng, 6);
  const int P = 6;
  const JetFunctional f = [P](std::span<const FieldJet> jets, std::span<FieldJet> adj) {
    double v = 0.0;
    for (int i = 0; i < P; ++i) {
      const double tr = jets[i].hess_x.trace();
      v += jets[i].u_t + jets[i].grad_x.squaredNorm() + tr * tr;
      adj[i].u_t = 1.0 / P;
      adj[i].grad_x = 2.0 / P * jets[i].grad_x;
      adj[i].hess_x = (2.0 * tr / P) * Eigen::MatrixXd::Identity(2, 2);
    }
    return v / P;
  };
  const Eigen::VectorXd grad = param_grad(net, ts, xs, f);

  FieldNetwork work = net;
  const Eigen::VectorXd theta = net.pack_params();
  auto objective = [&](const Eigen::VectorXd& p) {
    work.unpack_params(p);
    double v = 0.0;
    for (int i = 0; i < P; ++i) {
      const auto jet = eval_jet(work, ts[i], xs.col(i));
      const double tr = jet.hess_x.trace();
      v += jet.u_t + jet.grad_x.squaredNorm() + tr * tr;
    }
    return v / P;
  };
  double err = 0.0;
  for (int k = 0; k < theta.size(); ++k) {
    Eigen::VectorXd tp = theta, tm = theta;
    const double h = 1e-6 * std::max(1.0, std::abs(theta[k]));
    tp[k] += h;
    tm[k] -= h;
    const double fd = (objective(tp) - objective(tm)) / (2 * h);
    err = std::max(err, std::abs(grad[k] - fd) / std::max(1.0, std::abs(fd)));
  }
  CHECK(err < 1e-5);
}

TEST_CASE("non-finite functional raises DivergenceError") {
  auto net = init_network({3, 4, 1}, Activation::Tanh, OutputHead::Linear, 2);
  const double ts[1] = {0.0};
  Eigen::MatrixXd xs = Eigen::MatrixXd::Zero(2, 1);
  const JetFunctional bad = [](std::span<const FieldJet>, std::span<FieldJet>) {
    return std::numeric_limits<double>::quiet_NaN();
  };
  CHECK_THROWS_AS(param_grad(net, std::span<const double>(ts, 1), xs, bad),
                  DivergenceError);
}

TEST_CASE("network checkpoint round-trips bit-exactly") {
  const auto net = init_network({4, 12, 7, 1}, Activation::Tanh, OutputHead::Softplus, 123);
  const auto path = std::filesystem::temp_directory_path() / "uotflow_net_test.bin";
  save_network(net, path.string());
  const auto back = load_network(path.string());
  CHECK(back.layer_dims == net.layer_dims);
  CHECK(back.output_head == net.output_head);
  CHECK(back.init_seed == net.init_seed);
  CHECK(back.pack_params() == net.pack_params());
  std::filesystem::remove(path);
}

TEST_CASE("dimension mismatches are rejected") {
  const auto net = init_network({3, 4, 1}, Activation::Tanh, OutputHead::Linear, 0);
  Eigen::VectorXd x3(3);
  x3.setZero();
  CHECK_THROWS_AS(eval_scalar(net, 0.0, x3), std::invalid_argument);
  CHECK_THROWS_AS(eval_jet(net, 0.0, x3), std::invalid_argument);
}
