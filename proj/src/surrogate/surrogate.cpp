#include "ces/surrogate.hpp"

#include "network.hpp"

#include <cmath>
#include <stdexcept>

namespace ces::surrogate {

using detail::Graph;
using detail::Tape;

long SurrogateParams::num_parameters() const {
  long n = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + biases[l].size();
  return n;
}

bool SurrogateParams::all_finite() const {
  for (std::size_t l = 0; l < weights.size(); ++l)
    if (!weights[l].allFinite() || !biases[l].allFinite()) return false;
  return true;
}

SurrogateParams init_params(const ArchConfig& arch, std::uint64_t seed) {
  if (arch.N < 4 || arch.width < 1 || arch.hidden_layers < 1 || !(arch.side > 0.0))
    throw std::invalid_argument("bad surrogate architecture");
  SurrogateParams p;
  p.arch = arch;
  std::mt19937_64 rng(seed);
  int fan_in = p.input_dim();
  for (int l = 0; l <= arch.hidden_layers; ++l) {
    const int out = l == arch.hidden_layers ? 1 : arch.width;
    std::normal_distribution<double> g(0.0, std::sqrt(2.0 / fan_in));
    MatrixXd W(out, fan_in);
    for (long i = 0; i < W.size(); ++i) W.data()[i] = g(rng);
    p.weights.push_back(std::move(W));
    p.biases.push_back(VectorXd::Zero(out));
    fan_in = out;
  }
  return p;
}

VectorXd flatten(const SurrogateParams& params) {
  VectorXd flat(params.num_parameters());
  long k = 0;
  for (std::size_t l = 0; l < params.weights.size(); ++l) {
    flat.segment(k, params.weights[l].size()) = params.weights[l].reshaped();
    k += params.weights[l].size();
    flat.segment(k, params.biases[l].size()) = params.biases[l];
    k += params.biases[l].size();
  }
  return flat;
}

void unflatten(SurrogateParams& params, const VectorXd& flat) {
  if (flat.size() != params.num_parameters()) throw std::invalid_argument("parameter vector has the wrong length");
  long k = 0;
  for (std::size_t l = 0; l < params.weights.size(); ++l) {
    auto& W = params.weights[l];
    W = flat.segment(k, W.size()).reshaped(W.rows(), W.cols());
    k += W.size();
    params.biases[l] = flat.segment(k, params.biases[l].size());
    k += params.biases[l].size();
  }
}

namespace {

// Per-record quantities that do not depend on the network.
struct Prepared {
  VectorXd a;       // network-facing boundary vector
  MatrixXd J;       // d a / d u (empty: identity)
  double s = 1.0;   // energy scale |a|^2, or 1 for the direct parameterization
  VectorXd ds;      // d s / d a
};

Prepared prepare(const SurrogateParams& params, const VectorXd& u) {
  if (u.size() != params.boundary_dofs()) throw std::invalid_argument("boundary vector length does not match the surrogate");
  Prepared p;
  if (params.arch.features.remove_rigid) {
    const basis::Procrustes proc(basis::ControlLayout(params.arch.N, params.arch.side));
    p.a = proc.align(u).aligned;
  } else {
    p.a = u;
  }
  if (params.arch.features.scale_by_norm) {
    p.s = p.a.squaredNorm();
    p.ds = 2.0 * p.a;
  } else {
    p.ds = VectorXd::Zero(p.a.size());
  }
  return p;
}

Eigen::VectorXd input_column(const VectorXd& a, const geometry::PoreShape& xi) {
  VectorXd x(a.size() + 2);
  x << a, xi.alpha, xi.beta;
  return x;
}

double energy_from(const SurrogateParams& params, double s, double f) {
  return params.arch.features.scale_by_norm ? s * std::exp(f) : std::exp(f) - 1.0;
}

// Gradient and HVP in aligned coordinates from f, q = df/da, r = (d^2 f/da^2) w.
VectorXd grad_a(const Prepared& p, double E, const VectorXd& q) { return E * (p.ds + p.s * q); }

VectorXd hvp_a(const SurrogateParams& params, const Prepared& p, double E, const VectorXd& q, const VectorXd& r,
               const VectorXd& w) {
  const double qw = q.dot(w);
  VectorXd h = p.ds * qw + p.ds.dot(w) * q + p.s * (q * qw + r);
  if (params.arch.features.scale_by_norm) h += 2.0 * w;
  return E * h;
}

VectorXd to_u(const Prepared& p, const VectorXd& va) { return p.J.size() ? VectorXd(p.J.transpose() * va) : va; }

}  // namespace

double network_output(const SurrogateParams& params, const VectorXd& a, const geometry::PoreShape& xi) {
  Tape tape;
  const Graph g = detail::build_graph(tape, params, input_column(a, xi), nullptr, false, false, false);
  return tape.val(g.f)(0, 0);
}

double surrogate_energy(const SurrogateParams& params, const VectorXd& u, const geometry::PoreShape& xi) {
  const Prepared p = prepare(params, u);
  return energy_from(params, p.s, network_output(params, p.a, xi));
}

VectorXd surrogate_grad(const SurrogateParams& params, const VectorXd& u, const geometry::PoreShape& xi) {
  const std::vector<VectorXd> us{u};
  const std::vector<geometry::PoreShape> xis{xi};
  return evaluate_batch(params, us, xis, true)[0].grad;
}

VectorXd surrogate_hvp(const SurrogateParams& params, const VectorXd& u, const geometry::PoreShape& xi,
                       const VectorXd& v) {
  if (v.size() != u.size()) throw std::invalid_argument("direction length does not match the boundary vector");
  Prepared p = prepare(params, u);
  const int n = params.boundary_dofs();
  std::optional<basis::Procrustes> proc;
  VectorXd w = v;
  if (params.arch.features.remove_rigid) {
    proc.emplace(basis::ControlLayout(params.arch.N, params.arch.side));
    w = proc->jacobian(u) * v;
  }
  MatrixXd V = MatrixXd::Zero(n + 2, 1);
  V.col(0).head(n) = w;
  Tape tape;
  const Graph g = detail::build_graph(tape, params, input_column(p.a, xi), &V, true, true, false);
  const double f = tape.val(g.f)(0, 0);
  const double E = std::exp(f);
  const VectorXd q = tape.val(g.gx).col(0).head(n);
  const VectorXd r = g.hx < 0 ? VectorXd::Zero(n) : VectorXd(tape.val(g.hx).col(0).head(n));
  const VectorXd ha = hvp_a(params, p, E, q, r, w);
  if (!proc) return ha;
  return proc->vjp(u, ha) + proc->jdot_vjp(u, v, grad_a(p, E, q));
}

std::vector<Evaluation> evaluate_batch(const SurrogateParams& params, std::span<const VectorXd> us,
                                       std::span<const geometry::PoreShape> xis, bool with_grad) {
  if (us.size() != xis.size()) throw std::invalid_argument("boundary vectors and pore shapes differ in count");
  const long B = static_cast<long>(us.size());
  const int n = params.boundary_dofs();
  std::vector<Evaluation> out(B);
  if (B == 0) return out;
  std::optional<basis::Procrustes> proc;
  if (params.arch.features.remove_rigid) proc.emplace(basis::ControlLayout(params.arch.N, params.arch.side));

  std::vector<Prepared> prep;
  MatrixXd X(n + 2, B);
  for (long i = 0; i < B; ++i) {
    prep.push_back(prepare(params, us[i]));
    X.col(i) = input_column(prep.back().a, xis[i]);
  }
  Tape tape;
  const Graph g = detail::build_graph(tape, params, X, nullptr, with_grad, false, false);
  for (long i = 0; i < B; ++i) {
    const double f = tape.val(g.f)(0, i);
    out[i].energy = energy_from(params, prep[i].s, f);
    if (!with_grad) continue;
    const VectorXd ga = grad_a(prep[i], std::exp(f), tape.val(g.gx).col(i).head(n));
    out[i].grad = proc ? proc->vjp(us[i], ga) : ga;
  }
  return out;
}

namespace {

double cosine(const VectorXd& a, const VectorXd& b) {
  const double d = a.norm() * b.norm();
  return d > 0.0 ? a.dot(b) / d : 0.0;
}

// d(1 - cos(x, t)) / dx.
VectorXd cosine_distance_grad(const VectorXd& x, const VectorXd& t) {
  const double nx = x.norm(), nt = t.norm();
  if (!(nx > 0.0) || !(nt > 0.0)) return VectorXd::Zero(x.size());
  const double c = x.dot(t) / (nx * nt);
  return -(t / (nx * nt) - c * x / (nx * nx));
}

void check_record(const SampleRecord& r, long index, int n) {
  if (r.u.size() != n || r.grad.size() != n || r.hessian.rows() != n || r.hessian.cols() != n)
    throw TargetError("record " + std::to_string(index) + " has the wrong dimensions", index);
  if (!std::isfinite(r.energy) || !r.grad.allFinite() || !r.hessian.allFinite() || !r.u.allFinite())
    throw TargetError("record " + std::to_string(index) + " has non-finite targets", index);
}

}  // namespace

namespace detail {

LossReport run_loss(const SurrogateParams& params, const std::vector<const SampleRecord*>& records,
                    std::mt19937_64& rng, VectorXd* gradient, const LossOptions& options) {
  const auto batch = [&records](long i) -> const SampleRecord& { return *records[i]; };
  const Features& ft = params.arch.features;
  const int n = params.boundary_dofs();
  const long B = static_cast<long>(records.size());
  LossReport report;
  if (gradient) *gradient = VectorXd::Zero(params.num_parameters());
  if (B == 0) return report;

  std::optional<basis::Procrustes> proc;
  if (ft.remove_rigid) proc.emplace(basis::ControlLayout(params.arch.N, params.arch.side));

  std::vector<Prepared> prep(B);
  std::vector<VectorXd> dirs(B), targets_hv(B);
  std::vector<MatrixXd> jdot_t(B);  // columns: (dJ/de along v)^T e_k
  MatrixXd X(n + 2, B), V = MatrixXd::Zero(n + 2, B);
  std::normal_distribution<double> normal;
  for (long i = 0; i < B; ++i) {
    const SampleRecord& r = batch(i);
    check_record(r, i, n);
    VectorXd v(n);
    for (int k = 0; k < n; ++k) v[k] = normal(rng);
    prep[i] = prepare(params, r.u);
    if (proc && (ft.sobolev_g || ft.sobolev_hvp)) prep[i].J = proc->jacobian(r.u);
    X.col(i) = input_column(prep[i].a, r.xi);
    if (ft.sobolev_hvp) {
      dirs[i] = v;
      targets_hv[i] = r.hessian * v;
      V.col(i).head(n) = prep[i].J.size() ? VectorXd(prep[i].J * v) : v;
      if (proc) {
        jdot_t[i].resize(n, n);
        for (int k = 0; k < n; ++k) jdot_t[i].col(k) = proc->jdot_vjp(r.u, v, VectorXd::Unit(n, k));
      }
    }
  }

  Tape tape;
  const bool need_grad = ft.sobolev_g || ft.sobolev_hvp;
  const Graph g = detail::build_graph(tape, params, X, ft.sobolev_hvp ? &V : nullptr, need_grad, ft.sobolev_hvp,
                                      gradient != nullptr);

  MatrixXd fbar = MatrixXd::Zero(1, B), qbar = MatrixXd::Zero(n + 2, B), rbar = MatrixXd::Zero(n + 2, B);

  // Zeroth order.
  long n0 = 0;
  double direct_scale = 0.0;
  if (!ft.scale_by_norm) {
    for (const auto* r : records) direct_scale += r->energy * r->energy;
    direct_scale = direct_scale / B + 1e-300;
  }
  std::vector<double> l0_terms(B, 0.0);
  for (long i = 0; i < B; ++i) {
    const double f = tape.val(g.f)(0, i);
    if (ft.scale_by_norm) {
      if (!(prep[i].s >= options.norm_floor) || !(batch(i).energy > 0.0)) continue;
      const double d = f - std::log(batch(i).energy / prep[i].s);
      l0_terms[i] = d * d;
      fbar(0, i) = 2.0 * d;
    } else {
      const double d = std::exp(f) - 1.0 - batch(i).energy;
      l0_terms[i] = d * d / direct_scale;
      fbar(0, i) = 2.0 * d * std::exp(f) / direct_scale;
    }
    ++n0;
  }
  if (n0 > 0) {
    for (double t : l0_terms) report.l0 += t;
    report.l0 /= n0;
    fbar /= static_cast<double>(n0);
  }

  // First and second order, through the alignment.
  if (need_grad) {
    std::vector<VectorXd> ga(B), gbar_a(B), hbar_a(B);
    long n1 = 0, n2 = 0;
    for (long i = 0; i < B; ++i) {
      const double E = std::exp(tape.val(g.f)(0, i));
      ga[i] = grad_a(prep[i], E, tape.val(g.gx).col(i).head(n));
      gbar_a[i] = VectorXd::Zero(n);
      if (ft.sobolev_g && batch(i).grad.norm() > 0.0) ++n1;
      if (ft.sobolev_hvp && targets_hv[i].norm() > 0.0) ++n2;
    }
    for (long i = 0; i < B; ++i) {
      const Prepared& p = prep[i];
      const double f = tape.val(g.f)(0, i), E = std::exp(f);
      const VectorXd q = tape.val(g.gx).col(i).head(n);
      if (ft.sobolev_g && batch(i).grad.norm() > 0.0) {
        const VectorXd G = to_u(p, ga[i]);
        report.l1 += (1.0 - cosine(G, batch(i).grad)) / n1;
        const VectorXd dG = cosine_distance_grad(G, batch(i).grad) / n1;
        gbar_a[i] += p.J.size() ? VectorXd(p.J * dG) : dG;
      }
      if (ft.sobolev_hvp && targets_hv[i].norm() > 0.0) {
        const VectorXd w = V.col(i).head(n);
        const VectorXd r = g.hx < 0 ? VectorXd::Zero(n) : VectorXd(tape.val(g.hx).col(i).head(n));
        const VectorXd ha = hvp_a(params, p, E, q, r, w);
        VectorXd Hv = to_u(p, ha);
        if (jdot_t[i].size()) Hv += jdot_t[i] * ga[i];
        report.l2 += (1.0 - cosine(Hv, targets_hv[i])) / n2;
        const VectorXd dH = cosine_distance_grad(Hv, targets_hv[i]) / n2;
        const VectorXd hb = p.J.size() ? VectorXd(p.J * dH) : dH;
        if (jdot_t[i].size()) gbar_a[i] += jdot_t[i].transpose() * dH;
        // Adjoints of h_a = E (ds (q.w) + (ds.w) q + s (q (q.w) + r) [+ 2 w]).
        fbar(0, i) += hb.dot(ha);
        const double qw = q.dot(w);
        qbar.col(i).head(n) += E * (hb.dot(p.ds) * w + p.ds.dot(w) * hb + p.s * (hb * qw + hb.dot(q) * w));
        rbar.col(i).head(n) += E * p.s * hb;
      }
      // Adjoints of g_a = E (ds + s q).
      fbar(0, i) += gbar_a[i].dot(ga[i]);
      qbar.col(i).head(n) += E * p.s * gbar_a[i];
    }
  }
  report.total = report.l0 + report.l1 + report.l2;

  if (gradient) {
    tape.seed(g.f, fbar);
    if (g.gx >= 0) tape.seed(g.gx, qbar);
    if (g.hx >= 0) tape.seed(g.hx, rbar);
    tape.backward();
    long k = 0;
    for (std::size_t l = 0; l < g.weights.size(); ++l) {
      const auto& gw = tape.grad(g.weights[l]);
      const long nw = params.weights[l].size();
      if (gw.size()) gradient->segment(k, nw) = gw.reshaped();
      k += nw;
      const auto& gb = tape.grad(g.biases[l]);
      const long nb = params.biases[l].size();
      if (gb.size()) gradient->segment(k, nb) = gb.reshaped();
      k += nb;
    }
  }
  return report;
}

}  // namespace detail

namespace {

std::vector<const SampleRecord*> pointers(std::span<const SampleRecord> batch) {
  std::vector<const SampleRecord*> out;
  for (const auto& r : batch) out.push_back(&r);
  return out;
}

}  // namespace

LossReport loss(const SurrogateParams& params, std::span<const SampleRecord> batch, std::mt19937_64& rng,
                const LossOptions& options) {
  return detail::run_loss(params, pointers(batch), rng, nullptr, options);
}

LossReport loss_and_gradient(const SurrogateParams& params, std::span<const SampleRecord> batch,
                             std::mt19937_64& rng, VectorXd& gradient, const LossOptions& options) {
  return detail::run_loss(params, pointers(batch), rng, &gradient, options);
}

Metrics evaluate_metrics(const SurrogateParams& params, std::span<const SampleRecord> records, std::uint64_t seed) {
  Metrics m;
  if (records.empty()) return m;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  const int n = params.boundary_dofs();
  long ne = 0, ng = 0, nh = 0;
  for (const SampleRecord& r : records) {
    VectorXd v(n);
    for (int k = 0; k < n; ++k) v[k] = normal(rng);
    if (r.energy > 0.0) {
      m.e_pct_err += 100.0 * std::abs(surrogate_energy(params, r.u, r.xi) - r.energy) / r.energy;
      ++ne;
    }
    if (r.grad.norm() > 0.0) {
      m.g_sim += cosine(surrogate_grad(params, r.u, r.xi), r.grad);
      ++ng;
    }
    const VectorXd t = r.hessian * v;
    if (t.norm() > 0.0) {
      m.hvp_sim += cosine(surrogate_hvp(params, r.u, r.xi, v), t);
      ++nh;
    }
  }
  if (ne) m.e_pct_err /= ne;
  if (ng) m.g_sim /= ng;
  if (nh) m.hvp_sim /= nh;
  return m;
}

}  // namespace ces::surrogate
