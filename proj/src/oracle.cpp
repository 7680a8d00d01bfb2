#include "uotflow/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace uotflow {

void OracleReport::add(const std::string& name, double measured, double expected,
                       double tolerance) {
  OracleCheck c;
  c.name = name;
  c.measured = measured;
  c.expected = expected;
  c.tolerance = tolerance;
  c.pass = std::isfinite(measured) &&
           std::abs(measured - expected) <= tolerance * std::max(1.0, std::abs(expected));
  checks.push_back(std::move(c));
}

bool OracleReport::all_pass() const {
  for (const auto& c : checks)
    if (!c.pass) return false;
  return true;
}

std::string OracleReport::table() const {
  std::ostringstream os;
  for (const auto& c : checks) {
    os.setf(std::ios::scientific);
    os.precision(3);
    os << (c.pass ? "[pass] " : "[FAIL] ") << c.name << "  measured=" << c.measured
       << " expected=" << c.expected << " tol=" << c.tolerance << "\n";
  }
  return os.str();
}

OracleReport fd_check(const FieldNetwork& net, std::span<const double> ts,
                      const Eigen::Ref<const Eigen::MatrixXd>& xs, double h,
                      double tol_grad, double tol_hess) {
  const int d = net.spatial_dim();
  double err_val = 0.0, err_t = 0.0, err_grad = 0.0, err_hess = 0.0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const double t = ts[i];
    const Eigen::VectorXd x = xs.col(static_cast<int>(i));
    const FieldJet jet = eval_jet(net, t, x);
    const double f0 = eval_scalar(net, t, x);
    auto rel = [](double got, double want) {
      return std::abs(got - want) / std::max(1.0, std::abs(want));
    };
    err_val = std::max(err_val, rel(jet.u, f0));
    const double ut = (eval_scalar(net, t + h, x) - eval_scalar(net, t - h, x)) / (2 * h);
    err_t = std::max(err_t, rel(jet.u_t, ut));
    for (int a = 0; a < d; ++a) {
      Eigen::VectorXd xp = x, xm = x;
      xp[a] += h;
      xm[a] -= h;
      const double ga = (eval_scalar(net, t, xp) - eval_scalar(net, t, xm)) / (2 * h);
      err_grad = std::max(err_grad, rel(jet.grad_x[a], ga));
      const double haa =
          (eval_scalar(net, t, xp) - 2 * f0 + eval_scalar(net, t, xm)) / (h * h);
      err_hess = std::max(err_hess, rel(jet.hess_x(a, a), haa));
      for (int b = a + 1; b < d; ++b) {
        Eigen::VectorXd xpp = x, xpm = x, xmp = x, xmm = x;
        xpp[a] += h; xpp[b] += h;
        xpm[a] += h; xpm[b] -= h;
        xmp[a] -= h; xmp[b] += h;
        xmm[a] -= h; xmm[b] -= h;
        const double hab = (eval_scalar(net, t, xpp) - eval_scalar(net, t, xpm) -
                            eval_scalar(net, t, xmp) + eval_scalar(net, t, xmm)) /
                           (4 * h * h);
        err_hess = std::max(err_hess, rel(jet.hess_x(a, b), hab));
      }
    }
  }
  OracleReport rep;
  rep.add("jet value vs plain forward", err_val, 0.0, 1e-12);
  rep.add("jet du/dt vs central diff", err_t, 0.0, tol_grad);
  rep.add("jet grad vs central diff", err_grad, 0.0, tol_grad);
  rep.add("jet hessian vs central diff", err_hess, 0.0, tol_hess);
  return rep;
}

OracleReport fd_check_param_grad(const FieldNetwork& net, std::span<const double> ts,
                                 const Eigen::Ref<const Eigen::MatrixXd>& xs,
                                 double h, double tol) {
  const int P = static_cast<int>(ts.size());
  const JetFunctional mean_usq = [P](std::span<const FieldJet> jets,
                                     std::span<FieldJet> adj) {
    double v = 0.0;
    for (int i = 0; i < P; ++i) {
      v += jets[i].u * jets[i].u;
      adj[i].u = 2.0 * jets[i].u / P;
    }
    return v / P;
  };
  const Eigen::VectorXd grad = param_grad(net, ts, xs, mean_usq);

  FieldNetwork work = net;
  Eigen::VectorXd theta = net.pack_params();
  auto objective = [&](const Eigen::VectorXd& p) {
    work.unpack_params(p);
    double v = 0.0;
    for (int i = 0; i < P; ++i) {
      const double u = eval_scalar(work, ts[i], xs.col(i));
      v += u * u;
    }
    return v / P;
  };
  double err = 0.0;
  for (int k = 0; k < theta.size(); ++k) {
    Eigen::VectorXd tp = theta, tm = theta;
    const double step = h * std::max(1.0, std::abs(theta[k]));
    tp[k] += step;
    tm[k] -= step;
    const double fd = (objective(tp) - objective(tm)) / (2 * step);
    err = std::max(err, std::abs(grad[k] - fd) / std::max(1.0, std::abs(fd)));
  }
  OracleReport rep;
  rep.add("param_grad vs central diff", err, 0.0, tol);
  return rep;
}

double analytic_fr_cost(double m0, double kappa, double eta) {
  if (eta == 0.0) throw std::invalid_argument("pure-growth cost undefined for eta = 0");
  const double s = std::sqrt(kappa) - 1.0;
  return 4.0 / eta * s * s * m0;
}

double analytic_ot_cost_translation(const Eigen::Ref<const Eigen::VectorXd>& dmu) {
  return 0.5 * dmu.squaredNorm();
}

// Minimizes sum_n (1/eta) (dm_n)^2 / (dt * mid(m)_n) over the interior mass
// values by Gauss-Seidel Newton sweeps. Independent of the sqrt substitution
// behind analytic_fr_cost.
double fr_path_minimization(double m0, double kappa, double eta, int n_steps) {
  if (n_steps < 2) throw std::invalid_argument("need at least 2 steps");
  const int N = n_steps;
  const double dt = 1.0 / N;
  Eigen::VectorXd m(N + 1);
  for (int n = 0; n <= N; ++n)  // linear initial guess
    m[n] = m0 + (kappa * m0 - m0) * n / N;

  auto seg = [&](double ml, double mr) {
    const double mid = 0.5 * (ml + mr);
    const double dm = mr - ml;
    return dm * dm / (dt * mid);
  };
  auto total = [&]() {
    double J = 0.0;
    for (int n = 0; n < N; ++n) J += seg(m[n], m[n + 1]);
    return J / eta;
  };

  double prev = total();
  for (int sweep = 0; sweep < 100000; ++sweep) {
    for (int n = 1; n < N; ++n) {
      // local 1D Newton on J(m_n) with positivity safeguard
      for (int it = 0; it < 8; ++it) {
        const double e = 1e-7 * std::max(1.0, m[n]);
        const double jm = seg(m[n - 1], m[n] - e) + seg(m[n] - e, m[n + 1]);
        const double j0 = seg(m[n - 1], m[n]) + seg(m[n], m[n + 1]);
        const double jp = seg(m[n - 1], m[n] + e) + seg(m[n] + e, m[n + 1]);
        const double g = (jp - jm) / (2 * e);
        const double hdd = (jp - 2 * j0 + jm) / (e * e);
        if (hdd <= 0.0) break;
        double step = -g / hdd;
        if (m[n] + step <= 0.0) step = -0.5 * m[n];
        m[n] += step;
        if (std::abs(step) < 1e-14 * std::max(1.0, m[n])) break;
      }
    }
    const double cur = total();
    if (std::abs(prev - cur) < 1e-14 * std::max(1.0, cur)) break;
    prev = cur;
  }
  return total();
}

namespace {

// Primal network simplex for the dense transportation problem with arcs kept
// implicit (cost evaluated from indices on demand). Sources 0..n1-1, sinks
// n1..n1+n2-1; every arc runs source -> sink with flow >= 0.
class TransportSimplex {
 public:
  TransportSimplex(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                   const std::function<double(int, int)>& cost)
      : n1_(static_cast<int>(a.size())),
        n2_(static_cast<int>(b.size())),
        n_(n1_ + n2_),
        cost_(cost),
        parent_(n_, -1),
        tree_flow_(n_, 0.0),
        pi_(n_, 0.0),
        depth_(n_, 0),
        children_(n_) {
    build_initial_tree(a, b);
  }

  double solve() {
    const long m = static_cast<long>(n1_) * n2_;
    const long block = std::max<long>(64, static_cast<long>(std::sqrt(double(m))));
    long cursor = 0;
    const long max_pivots = 300L * n_ + 20000L;
    for (long pivot_count = 0;; ++pivot_count) {
      if (pivot_count > max_pivots)
        throw std::runtime_error("network simplex exceeded pivot budget");
      long scanned = 0;
      int best_i = -1, best_j = -1;
      double best_rc = 0.0;
      while (scanned < m) {
        const long stop = std::min<long>(m, scanned + block);
        for (; scanned < stop; ++scanned) {
          const long arc = cursor + scanned < m ? cursor + scanned : cursor + scanned - m;
          const int i = static_cast<int>(arc / n2_);
          const int j = static_cast<int>(arc % n2_);
          const double c = cost_(i, j);
          const double rc = c - pi_[i] + pi_[n1_ + j];
          if (rc < -1e-11 * (1.0 + std::abs(c)) && rc < best_rc) {
            best_rc = rc;
            best_i = i;
            best_j = j;
          }
        }
        if (best_i >= 0) break;
      }
      cursor = (cursor + scanned) % m;
      if (best_i < 0) break;  // full scan, dual feasible: optimal
      pivot(best_i, n1_ + best_j, best_rc);
    }
    double total = 0.0;
    for (int v = 1; v < n_; ++v)
      if (parent_[v] >= 0 && tree_flow_[v] != 0.0)
        total += tree_flow_[v] * arc_cost_between(v, parent_[v]);
    return total;
  }

 private:
  bool is_source(int v) const { return v < n1_; }
  double arc_cost_between(int v, int p) const {
    return is_source(v) ? cost_(v, p - n1_) : cost_(p, v - n1_);
  }

  void build_initial_tree(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    // Northwest-corner basic feasible solution: a staircase spanning tree.
    Eigen::VectorXd ra = a, rb = b;
    std::vector<std::pair<std::pair<int, int>, double>> basics;
    int i = 0, j = 0;
    while (true) {
      const double f = std::min(ra[i], rb[j]);
      basics.push_back({{i, n1_ + j}, f});
      ra[i] -= f;
      rb[j] -= f;
      if (i == n1_ - 1 && j == n2_ - 1) break;
      if (j == n2_ - 1) ++i;
      else if (i == n1_ - 1) ++j;
      else if (ra[i] <= rb[j]) ++i;
      else ++j;
    }
    std::vector<std::vector<std::pair<int, double>>> adj(n_);
    for (const auto& [arc, f] : basics) {
      adj[arc.first].push_back({arc.second, f});
      adj[arc.second].push_back({arc.first, f});
    }
    // Root at node 0, orient parents by BFS.
    std::vector<int> stack = {0};
    std::vector<char> seen(n_, 0);
    seen[0] = 1;
    parent_[0] = -1;
    depth_[0] = 0;
    pi_[0] = 0.0;
    while (!stack.empty()) {
      const int v = stack.back();
      stack.pop_back();
      for (const auto& [w, f] : adj[v]) {
        if (seen[w]) continue;
        seen[w] = 1;
        parent_[w] = v;
        tree_flow_[w] = f;
        depth_[w] = depth_[v] + 1;
        children_[v].push_back(w);
        pi_[w] = is_source(w) ? pi_[v] + arc_cost_between(w, v)
                              : pi_[v] - arc_cost_between(v, w);
        stack.push_back(w);
      }
    }
  }

  // Push flow around the cycle closed by the entering arc u -> v (u source,
  // v sink node id), drop the blocking arc, re-hang the cut subtree.
  void pivot(int u, int v, double rc) {
    int x = u, y = v;
    // Walk both endpoints to the common ancestor recording the minimum
    // reducible flow. Arcs on u's path lose flow if their child node is a
    // source; arcs on v's path lose flow if their child node is a sink.
    double delta = std::numeric_limits<double>::infinity();
    int leave = -1;  // child node of the leaving arc
    bool leave_on_u_side = false;
    auto consider = [&](int w, bool u_side) {
      const bool loses = u_side ? is_source(w) : !is_source(w);
      if (loses && tree_flow_[w] < delta) {
        delta = tree_flow_[w];
        leave = w;
        leave_on_u_side = u_side;
      }
    };
    while (x != y) {
      if (depth_[x] >= depth_[y]) {
        consider(x, true);
        x = parent_[x];
      } else {
        consider(y, false);
        y = parent_[y];
      }
    }
    // Apply flow change.
    x = u;
    y = v;
    while (x != y) {
      if (depth_[x] >= depth_[y]) {
        tree_flow_[x] += is_source(x) ? -delta : delta;
        x = parent_[x];
      } else {
        tree_flow_[y] += is_source(y) ? delta : -delta;
        y = parent_[y];
      }
    }
    // Re-hang: subtree under `leave` loses its parent link; the entering
    // endpoint inside it becomes the subtree's connection point.
    const int e_in = leave_on_u_side ? u : v;
    const int e_out = leave_on_u_side ? v : u;
    detach_child(parent_[leave], leave);
    // Reverse the parent chain e_in -> ... -> leave; each arc's flow moves to
    // its new child node, the entering arc carries delta.
    int child = e_in;
    int new_parent = e_out;
    double new_flow = delta;
    while (true) {
      const int old_parent = parent_[child];
      const double old_flow = tree_flow_[child];
      if (child != leave) detach_child(old_parent, child);
      parent_[child] = new_parent;
      tree_flow_[child] = new_flow;
      children_[new_parent].push_back(child);
      if (child == leave) break;
      new_parent = child;
      new_flow = old_flow;
      child = old_parent;
    }
    // Potentials and depths of the re-hung subtree shift together.
    const double shift = is_source(e_in) ? rc : -rc;
    std::vector<int> stack = {e_in};
    while (!stack.empty()) {
      const int w = stack.back();
      stack.pop_back();
      pi_[w] += shift;
      depth_[w] = depth_[parent_[w]] + 1;
      for (int c : children_[w]) stack.push_back(c);
    }
  }

  void detach_child(int p, int c) {
    auto& kids = children_[p];
    for (std::size_t k = 0; k < kids.size(); ++k) {
      if (kids[k] == c) {
        kids[k] = kids.back();
        kids.pop_back();
        return;
      }
    }
  }

  int n1_, n2_, n_;
  std::function<double(int, int)> cost_;
  std::vector<int> parent_;
  std::vector<double> tree_flow_;  // flow on the arc between v and parent(v)
  std::vector<double> pi_;
  std::vector<int> depth_;
  std::vector<std::vector<int>> children_;
};

}  // namespace

double transport_network_simplex(const Eigen::VectorXd& supply,
                                 const Eigen::VectorXd& demand,
                                 const std::function<double(int, int)>& cost) {
  if (supply.size() == 0 || demand.size() == 0)
    throw std::invalid_argument("empty marginal");
  if ((supply.array() < 0).any() || (demand.array() < 0).any())
    throw std::invalid_argument("marginals must be nonnegative");
  const double sa = supply.sum(), sb = demand.sum();
  if (std::abs(sa - sb) > 1e-9 * std::max(sa, sb))
    throw std::invalid_argument("marginal sums disagree");
  // Rescale the demand side so the sums match exactly.
  Eigen::VectorXd b = demand * (sa / sb);
  TransportSimplex simplex(supply, b, cost);
  return simplex.solve();
}

double discrete_ot_halved_w2(const Eigen::Ref<const Eigen::MatrixXd>& rho0,
                             const Eigen::Ref<const Eigen::MatrixXd>& rho1,
                             const Eigen::Vector2d& lo, const Eigen::Vector2d& hi,
                             double mass_cutoff) {
  if (rho0.rows() != rho1.rows() || rho0.cols() != rho1.cols())
    throw std::invalid_argument("grids must share a shape");
  const int nx = static_cast<int>(rho0.rows());
  const int ny = static_cast<int>(rho0.cols());
  const double dx = (hi[0] - lo[0]) / nx, dy = (hi[1] - lo[1]) / ny;
  struct Cell {
    double x, y, mass;
  };
  auto collect = [&](const Eigen::Ref<const Eigen::MatrixXd>& rho) {
    std::vector<Cell> cells;
    const double cut = mass_cutoff * rho.maxCoeff();
    for (int ix = 0; ix < nx; ++ix)
      for (int iy = 0; iy < ny; ++iy)
        if (rho(ix, iy) > cut)
          cells.push_back({lo[0] + (ix + 0.5) * dx, lo[1] + (iy + 0.5) * dy, rho(ix, iy)});
    double total = 0.0;
    for (const auto& c : cells) total += c.mass;
    if (total <= 0.0) throw std::invalid_argument("density has no mass");
    for (auto& c : cells) c.mass /= total;
    return cells;
  };
  const auto cells0 = collect(rho0);
  const auto cells1 = collect(rho1);
  Eigen::VectorXd a(cells0.size()), b(cells1.size());
  for (std::size_t i = 0; i < cells0.size(); ++i) a[static_cast<int>(i)] = cells0[i].mass;
  for (std::size_t j = 0; j < cells1.size(); ++j) b[static_cast<int>(j)] = cells1[j].mass;
  auto cost = [&](int i, int j) {
    const double ddx = cells0[static_cast<std::size_t>(i)].x - cells1[static_cast<std::size_t>(j)].x;
    const double ddy = cells0[static_cast<std::size_t>(i)].y - cells1[static_cast<std::size_t>(j)].y;
    return ddx * ddx + ddy * ddy;
  };
  return 0.5 * transport_network_simplex(a, b, cost);
}

void NetworkPotential::eval(std::span<const double> ts,
                            const Eigen::Ref<const Eigen::MatrixXd>& xs,
                            Eigen::VectorXd& values, Eigen::MatrixXd& grads) const {
  const int P = static_cast<int>(ts.size());
  const int d = net_->spatial_dim();
  JetBatch batch(*net_, {d, false, true, JetColumns::Second::None});
  batch.forward(ts, xs);
  values.resize(P);
  grads.resize(d, P);
  for (int i = 0; i < P; ++i) {
    values[i] = batch.value(i);
    grads.col(i) = batch.gradient(i);
  }
}

void CallbackPotential::eval(std::span<const double> ts,
                             const Eigen::Ref<const Eigen::MatrixXd>& xs,
                             Eigen::VectorXd& values, Eigen::MatrixXd& grads) const {
  const int P = static_cast<int>(ts.size());
  values.resize(P);
  grads.resize(xs.rows(), P);
  for (int i = 0; i < P; ++i) {
    values[i] = v_(ts[i], xs.col(i));
    grads.col(i) = g_(ts[i], xs.col(i));
  }
}

int FvGrid::cell_count() const {
  int n = 1;
  for (int s : shape) n *= s;
  return n;
}

double FvGrid::cell_volume() const {
  double v = 1.0;
  for (std::size_t a = 0; a < shape.size(); ++a)
    v *= (hi[static_cast<int>(a)] - lo[static_cast<int>(a)]) / shape[a];
  return v;
}

Eigen::VectorXd fv_integrate_continuity(const PotentialField& phi, const FvGrid& grid,
                                        const Eigen::VectorXd& rho0, double eta,
                                        double cfl) {
  const int dim = static_cast<int>(grid.shape.size());
  if (dim != 1 && dim != 2) throw std::invalid_argument("fv grid must be 1D or 2D");
  if (rho0.size() != grid.cell_count())
    throw std::invalid_argument("rho0 does not match the grid");
  const int nx = grid.shape[0];
  const int ny = dim == 2 ? grid.shape[1] : 1;
  const double dx = (grid.hi[0] - grid.lo[0]) / nx;
  const double dy = dim == 2 ? (grid.hi[1] - grid.lo[1]) / ny : 1.0;

  auto cell_index = [&](int ix, int iy) { return ix * ny + iy; };

  // Interior face sample points (upwind fluxes vanish on the boundary).
  const int nfx = (nx - 1) * ny;
  const int nfy = dim == 2 ? nx * (ny - 1) : 0;
  Eigen::MatrixXd face_x(dim, nfx), face_y(dim, std::max(1, nfy));
  {
    int k = 0;
    for (int ix = 0; ix + 1 < nx; ++ix)
      for (int iy = 0; iy < ny; ++iy, ++k) {
        face_x(0, k) = grid.lo[0] + (ix + 1) * dx;
        if (dim == 2) face_x(1, k) = grid.lo[1] + (iy + 0.5) * dy;
      }
    k = 0;
    for (int ix = 0; ix < nx && dim == 2; ++ix)
      for (int iy = 0; iy + 1 < ny; ++iy, ++k) {
        face_y(0, k) = grid.lo[0] + (ix + 0.5) * dx;
        face_y(1, k) = grid.lo[1] + (iy + 1) * dy;
      }
  }
  Eigen::MatrixXd centers(dim, nx * ny);
  for (int ix = 0; ix < nx; ++ix)
    for (int iy = 0; iy < ny; ++iy) {
      centers(0, cell_index(ix, iy)) = grid.lo[0] + (ix + 0.5) * dx;
      if (dim == 2) centers(1, cell_index(ix, iy)) = grid.lo[1] + (iy + 0.5) * dy;
    }

  Eigen::VectorXd rho = rho0;
  Eigen::VectorXd vals;
  Eigen::MatrixXd grads;
  std::vector<double> tbuf;
  double t = 0.0;
  int steps = 0;
  while (t < 1.0) {
    if (++steps > 2000000) throw std::runtime_error("fv integration stalled");
    // face velocities at current time
    tbuf.assign(static_cast<std::size_t>(nfx), t);
    phi.eval(tbuf, face_x, vals, grads);
    Eigen::VectorXd vx = grads.row(0).transpose();
    Eigen::VectorXd vy;
    if (dim == 2) {
      tbuf.assign(static_cast<std::size_t>(nfy), t);
      phi.eval(tbuf, face_y, vals, grads);
      vy = grads.row(1).transpose();
    }
    tbuf.assign(static_cast<std::size_t>(nx * ny), t);
    phi.eval(tbuf, centers, vals, grads);
    Eigen::VectorXd phi_c = vals;

    const double vmax_x = nfx > 0 ? vx.array().abs().maxCoeff() : 0.0;
    const double vmax_y = dim == 2 && nfy > 0 ? vy.array().abs().maxCoeff() : 0.0;
    const double gmax = eta != 0.0 ? (0.5 * std::abs(eta)) * phi_c.array().abs().maxCoeff() : 0.0;
    if (!std::isfinite(vmax_x) || !std::isfinite(vmax_y) || vmax_x > 1e3 || vmax_y > 1e3)
      throw DivergenceError("unbounded velocity in fv integration");
    double dt = cfl / (vmax_x / dx + vmax_y / dy + gmax + 1e-30);
    dt = std::min(dt, 1.0 - t);
    dt = std::min(dt, 0.05);

    Eigen::VectorXd next = rho;
    int k = 0;
    for (int ix = 0; ix + 1 < nx; ++ix)
      for (int iy = 0; iy < ny; ++iy, ++k) {
        const double v = vx[k];
        const int left = cell_index(ix, iy), right = cell_index(ix + 1, iy);
        const double flux = v > 0 ? v * rho[left] : v * rho[right];
        next[left] -= dt / dx * flux;
        next[right] += dt / dx * flux;
      }
    k = 0;
    for (int ix = 0; ix < nx && dim == 2; ++ix)
      for (int iy = 0; iy + 1 < ny; ++iy, ++k) {
        const double v = vy[k];
        const int bot = cell_index(ix, iy), top = cell_index(ix, iy + 1);
        const double flux = v > 0 ? v * rho[bot] : v * rho[top];
        next[bot] -= dt / dy * flux;
        next[top] += dt / dy * flux;
      }
    if (eta != 0.0) {
      // Exponential source update with phi sampled at the midpoint time,
      // second order in dt and positivity preserving.
      tbuf.assign(static_cast<std::size_t>(nx * ny), t + 0.5 * dt);
      phi.eval(tbuf, centers, vals, grads);
      phi_c = vals;
      next.array() *= (dt * (0.5 * eta) * phi_c.array()).exp();
    }
    rho.swap(next);
    t += dt;
  }
  return rho;
}

std::vector<std::pair<double, double>> mass_timeseries(
    std::span<const double> times, std::span<const Eigen::VectorXd> rho_values,
    const Eigen::VectorXd& weights) {
  if (times.size() != rho_values.size())
    throw std::invalid_argument("times and snapshots disagree");
  std::vector<std::pair<double, double>> out;
  out.reserve(times.size());
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (rho_values[i].size() != weights.size())
      throw std::invalid_argument("snapshot size does not match weights");
    out.emplace_back(times[i], rho_values[i].dot(weights));
  }
  return out;
}

}  // namespace uotflow
