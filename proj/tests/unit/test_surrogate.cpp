#include "doctest.h"

#include "ces/surrogate.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

using namespace ces;
using namespace ces::surrogate;
using geometry::PoreShape;

namespace {

VectorXd randn(long n, double scale, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, scale);
  VectorXd v(n);
  for (long i = 0; i < n; ++i) v[i] = g(rng);
  return v;
}

SurrogateParams random_params(int width, Features f, std::uint64_t seed, int N = 10) {
  ArchConfig arch;
  arch.N = N;
  arch.width = width;
  arch.features = f;
  SurrogateParams p = init_params(arch, seed);
  std::mt19937_64 rng(seed + 99);
  for (auto& b : p.biases) b = randn(b.size(), 0.1, rng);
  return p;
}

// Rest-relative rigid motion of the control points.
VectorXd rigid(const basis::ControlLayout& layout, double theta, double tx, double ty) {
  const Eigen::Rotation2Dd R(theta);
  VectorXd u(layout.num_dofs());
  for (int j = 0; j < layout.num_points(); ++j) {
    const Eigen::Vector2d X = layout.positions()[j];
    u.segment<2>(2 * j) = R * X + Eigen::Vector2d(tx, ty) - X;
  }
  return u;
}

MatrixXd full_hessian(const SurrogateParams& p, const VectorXd& u, const PoreShape& xi) {
  const long n = u.size();
  MatrixXd H(n, n);
  for (long k = 0; k < n; ++k) H.col(k) = surrogate_hvp(p, u, xi, VectorXd::Unit(n, k));
  return 0.5 * (H + H.transpose());
}

SampleRecord self_record(const SurrogateParams& p, const VectorXd& u, const PoreShape& xi) {
  SampleRecord r;
  r.u = u;
  r.xi = xi;
  r.energy = surrogate_energy(p, u, xi);
  r.grad = surrogate_grad(p, u, xi);
  r.hessian = full_hessian(p, u, xi);
  return r;
}

// Synthetic labelled states from a random "teacher" surrogate.
std::vector<SampleRecord> teacher_records(int count, std::uint64_t seed) {
  const SurrogateParams teacher = random_params(16, Features{}, seed);
  const basis::ControlLayout layout(10, 2.0);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> box(-0.2, 0.2);
  std::vector<SampleRecord> out;
  for (int i = 0; i < count; ++i)
    out.push_back(self_record(teacher, VectorXd(randn(72, 0.05, rng) + rigid(layout, 0.1 * i, 0.0, 0.01)),
                              PoreShape{box(rng), box(rng)}));
  return out;
}

}  // namespace

TEST_CASE("architecture and initialization") {
  const SurrogateParams p = init_params(ArchConfig{}, 3);
  CHECK(p.input_dim() == 74);
  REQUIRE(p.weights.size() == 4);
  CHECK(p.weights[0].rows() == 128);
  CHECK(p.weights[0].cols() == 74);
  CHECK(p.weights[3].rows() == 1);
  CHECK(p.num_parameters() == 74 * 128 + 128 + 2 * (128 * 128 + 128) + 128 + 1);
  for (const auto& b : p.biases) CHECK(b.isZero());
  // He scaling: sample variance near 2 / fan_in.
  const double var = p.weights[1].squaredNorm() / p.weights[1].size();
  CHECK(var == doctest::Approx(2.0 / 128).epsilon(0.05));
  SurrogateParams q = p;
  unflatten(q, 2.0 * flatten(p));
  CHECK(q.weights[2] == 2.0 * p.weights[2]);
  CHECK(flatten(init_params(ArchConfig{}, 3)) == flatten(p));
}

TEST_CASE("hand evaluation of a one-unit network") {
  ArchConfig arch;
  arch.N = 4;
  arch.width = 1;
  arch.hidden_layers = 1;
  arch.features.remove_rigid = false;
  SurrogateParams p = init_params(arch, 0);
  p.weights[0].setZero();
  p.weights[0](0, 0) = 2.0;
  p.weights[0](0, 5) = -1.0;
  p.weights[0](0, 24) = 0.5;  // alpha
  p.biases[0](0) = 0.1;
  p.weights[1](0, 0) = -0.7;
  p.biases[1](0) = 0.3;
  VectorXd u = VectorXd::Zero(24);
  u[0] = 0.2;
  u[5] = 0.1;
  u[7] = -0.3;
  const PoreShape xi{0.1, -0.05};
  const double z = 2.0 * 0.2 - 0.1 + 0.5 * 0.1 + 0.1;
  const double f = -0.7 * z / (1.0 + std::exp(-z)) + 0.3;
  CHECK(network_output(p, u, xi) == doctest::Approx(f).epsilon(1e-15));
  CHECK(surrogate_energy(p, u, xi) == doctest::Approx((0.04 + 0.01 + 0.09) * std::exp(f)).epsilon(1e-14));

  p.arch.features.scale_by_norm = false;
  CHECK(surrogate_energy(p, u, xi) == doctest::Approx(std::exp(f) - 1.0).epsilon(1e-14));
}

TEST_CASE("energy vanishes on rigid motions and is nonnegative") {
  const SurrogateParams p = random_params(32, Features{}, 4);
  const basis::ControlLayout layout(10, 2.0);
  std::mt19937_64 rng(4);
  const PoreShape xi{0.1, 0.05};
  CHECK(surrogate_energy(p, VectorXd::Zero(72), xi) == 0.0);
  CHECK(surrogate_energy(p, rigid(layout, 0.7, 0.3, -0.2), xi) < 1e-25);
  for (int i = 0; i < 20; ++i) CHECK(surrogate_energy(p, randn(72, 0.1, rng), xi) >= 0.0);

  const VectorXd u = randn(72, 0.05, rng);
  CHECK(surrogate_grad(p, VectorXd::Zero(72), xi).norm() == 0.0);
  // Translation invariance and rigid-mode orthogonality.
  const double e = surrogate_energy(p, u, xi);
  VectorXd moved(72);
  const Eigen::Rotation2Dd R(1.1);
  for (int j = 0; j < 36; ++j) {
    const Eigen::Vector2d X = layout.positions()[j];
    moved.segment<2>(2 * j) = R * (X + u.segment<2>(2 * j)) + Eigen::Vector2d(0.4, -0.1) - X;
  }
  CHECK(std::abs(surrogate_energy(p, moved, xi) - e) <= 1e-10 * e);
  const VectorXd g = surrogate_grad(p, u, xi);
  VectorXd spin(72);
  for (int j = 0; j < 36; ++j) {
    const Eigen::Vector2d x = layout.positions()[j] + u.segment<2>(2 * j);
    spin.segment<2>(2 * j) = Eigen::Vector2d(-x.y(), x.x());
  }
  CHECK(std::abs(g.dot(rigid(layout, 0.0, 1.0, 0.0))) < 1e-8 * g.norm());
  CHECK(std::abs(g.dot(rigid(layout, 0.0, 0.0, 1.0))) < 1e-8 * g.norm());
  CHECK(std::abs(g.dot(spin)) < 1e-8 * g.norm() * spin.norm());
}

TEST_CASE("gradient and HVP match finite differences") {
  for (const bool rigid_off : {false, true}) {
    Features f;
    f.remove_rigid = !rigid_off;
    const SurrogateParams p = random_params(128, f, 5);
    std::mt19937_64 rng(5);
    const basis::ControlLayout layout(10, 2.0);
    const VectorXd u = randn(72, 0.05, rng) + rigid(layout, 0.4, 0.1, 0.0);
    const PoreShape xi{-0.1, 0.07};
    const VectorXd g = surrogate_grad(p, u, xi);
    const double h = 1e-6;
    VectorXd fd(72);
    for (int k = 0; k < 72; ++k) {
      VectorXd up = u, um = u;
      up[k] += h;
      um[k] -= h;
      fd[k] = (surrogate_energy(p, up, xi) - surrogate_energy(p, um, xi)) / (2 * h);
    }
    CHECK((g - fd).norm() / g.norm() < 1e-6);

    const VectorXd v = randn(72, 1.0, rng), w = randn(72, 1.0, rng);
    const VectorXd hv = surrogate_hvp(p, u, xi, v);
    const VectorXd fd_hv = (surrogate_grad(p, VectorXd(u + h * v), xi) - surrogate_grad(p, VectorXd(u - h * v), xi)) / (2 * h);
    CHECK((hv - fd_hv).norm() / hv.norm() < 1e-5);
    CHECK(std::abs(w.dot(hv) - v.dot(surrogate_hvp(p, u, xi, w))) < 1e-8 * std::max(1.0, std::abs(w.dot(hv))));
    CHECK(surrogate_hvp(p, u, xi, VectorXd::Zero(72)).norm() == 0.0);
  }
}

TEST_CASE("constant network gives a scaled quadratic") {
  SurrogateParams p = random_params(16, Features{}, 6);
  const double c = 2.5;
  p.weights.back().setZero();
  p.biases.back()(0) = std::log(c);
  const basis::ControlLayout layout(10, 2.0);
  const basis::Procrustes proc(layout);
  std::mt19937_64 rng(6);
  const VectorXd u = randn(72, 0.05, rng);
  const VectorXd expected = c * proc.vjp(u, 2.0 * proc.align(u).aligned);
  CHECK((surrogate_grad(p, u, PoreShape{}) - expected).norm() < 1e-12 * expected.norm());
}

TEST_CASE("batched evaluation agrees with single evaluation") {
  const SurrogateParams p = random_params(32, Features{}, 7);
  std::mt19937_64 rng(7);
  std::vector<VectorXd> us;
  std::vector<PoreShape> xis;
  for (int i = 0; i < 5; ++i) {
    us.push_back(randn(72, 0.05, rng));
    xis.push_back(PoreShape{0.02 * i, -0.01 * i});
  }
  const auto ev = evaluate_batch(p, us, xis, true);
  for (int i = 0; i < 5; ++i) {
    CHECK(ev[i].energy == doctest::Approx(surrogate_energy(p, us[i], xis[i])).epsilon(1e-13));
    CHECK((ev[i].grad - surrogate_grad(p, us[i], xis[i])).norm() < 1e-13 * ev[i].grad.norm());
  }
}

TEST_CASE("loss semantics") {
  const SurrogateParams p = random_params(32, Features{}, 8);
  std::mt19937_64 rng(8);
  std::vector<SampleRecord> recs;
  for (int i = 0; i < 6; ++i) recs.push_back(self_record(p, randn(72, 0.05, rng), PoreShape{0.01 * i, 0.0}));

  std::mt19937_64 r1(1);
  const LossReport self = loss(p, recs, r1);
  CHECK(std::abs(self.l0) < 1e-10);
  CHECK(std::abs(self.l1) < 1e-10);
  CHECK(std::abs(self.l2) < 1e-10);
  CHECK(self.total == self.l0 + self.l1 + self.l2);

  auto flipped = recs;
  for (auto& r : flipped) r.grad = -r.grad;
  std::mt19937_64 r2(1);
  CHECK(loss(p, flipped, r2).l1 == doctest::Approx(2.0).epsilon(1e-12));

  // Cosine terms ignore target scale.
  auto other = teacher_records(6, 21);
  auto scaled = other;
  for (auto& r : scaled) {
    r.grad *= 1e3;
    r.hessian *= 1e3;
  }
  std::mt19937_64 ra(2), rb(2);
  const LossReport a = loss(p, other, ra), b = loss(p, scaled, rb);
  CHECK(std::abs(a.l1 - b.l1) < 1e-10);
  CHECK(std::abs(a.l2 - b.l2) < 1e-10);
  CHECK(a.l1 >= 0.0);
  CHECK(a.l1 <= 2.0);
  CHECK(a.l2 >= 0.0);
  CHECK(a.l2 <= 2.0);
  CHECK(a.l0 >= 0.0);

  std::mt19937_64 rc(2);
  const LossReport c = loss(p, other, rc);
  CHECK(c.l0 == a.l0);
  CHECK(c.l1 == a.l1);
  CHECK(c.l2 == a.l2);

  // Rest states carry no log-stiffness target.
  SampleRecord rest = recs[0];
  rest.u.setZero();
  rest.energy = 0.0;
  rest.grad.setZero();
  rest.hessian = full_hessian(p, rest.u, rest.xi);
  std::vector<SampleRecord> with_rest{rest};
  std::mt19937_64 rd(3);
  const LossReport lr = loss(p, with_rest, rd);
  CHECK(lr.l0 == 0.0);
  CHECK(std::isfinite(lr.total));

  Features off;
  off.sobolev_g = off.sobolev_hvp = false;
  SurrogateParams q = p;
  q.arch.features = off;
  std::mt19937_64 re(2);
  const LossReport z = loss(q, other, re);
  CHECK(z.l1 == 0.0);
  CHECK(z.l2 == 0.0);
  CHECK(z.total == z.l0);

  auto bad = other;
  bad[3].grad[5] = std::nan("");
  std::mt19937_64 rf(2);
  try {
    loss(p, bad, rf);
    FAIL("expected a target error");
  } catch (const TargetError& e) {
    CHECK(e.record() == 3);
  }
}

TEST_CASE("parameter gradient of the losses matches finite differences") {
  const auto recs = teacher_records(5, 31);
  const Features all;
  std::vector<Features> variants(5, all);
  variants[1].scale_by_norm = false;
  variants[2].remove_rigid = false;
  variants[3].sobolev_g = false;
  variants[4].sobolev_hvp = false;
  for (const Features& f : variants) {
    const SurrogateParams p = random_params(8, f, 9);
    VectorXd grad;
    std::mt19937_64 r0(4);
    const LossReport base = loss_and_gradient(p, recs, r0, grad);
    std::mt19937_64 rcheck(4);
    CHECK(loss(p, recs, rcheck).total == base.total);

    const VectorXd theta = flatten(p);
    std::mt19937_64 pick(10);
    std::uniform_int_distribution<long> idx(0, theta.size() - 1);
    double err = 0.0, scale = 0.0;
    for (int t = 0; t < 60; ++t) {
      const long k = idx(pick);
      const double h = 1e-6;
      SurrogateParams pp = p, pm = p;
      VectorXd tp = theta, tm = theta;
      tp[k] += h;
      tm[k] -= h;
      unflatten(pp, tp);
      unflatten(pm, tm);
      std::mt19937_64 ra(4), rb(4);
      const double fd = (loss(pp, recs, ra).total - loss(pm, recs, rb).total) / (2 * h);
      err = std::max(err, std::abs(fd - grad[k]));
      scale = std::max(scale, std::abs(grad[k]));
    }
    CHECK(err < 1e-6 * std::max(scale, 1.0));
  }
}

TEST_CASE("training") {
  const auto data = teacher_records(64, 41);
  const std::span<const SampleRecord> train_set(data.data(), 48), val_set(data.data() + 48, 16);
  const SurrogateParams p0 = random_params(16, Features{}, 11);
  TrainConfig cfg;
  cfg.batch = 16;
  cfg.lr = 3e-3;
  cfg.seed = 5;

  cfg.epochs = 0;
  CHECK(flatten(train(p0, train_set, val_set, cfg).params) == flatten(p0));

  cfg.epochs = 30;
  const TrainResult a = train(p0, train_set, val_set, cfg);
  const TrainResult b = train(p0, train_set, val_set, cfg);
  REQUIRE(a.history.size() == 30);
  CHECK(a.history.back().steps == 90);
  CHECK(flatten(a.params) == flatten(b.params));
  for (std::size_t e = 0; e < a.history.size(); ++e) CHECK(a.history[e].train.total == b.history[e].train.total);
  CHECK(a.history.back().train.total < 0.5 * a.history.front().train.total);
  CHECK(a.history.back().validation.g_sim > a.history.front().validation.g_sim);

  cfg.max_steps = 7;
  CHECK(train(p0, train_set, val_set, cfg).state.step == 7);
}

TEST_CASE("checkpoints round trip and resume exactly") {
  const auto data = teacher_records(32, 51);
  const SurrogateParams p0 = random_params(16, Features{true, true, true, false}, 12);
  TrainConfig cfg;
  cfg.batch = 8;
  cfg.lr = 1e-3;
  cfg.seed = 9;
  cfg.epochs = 4;
  const TrainResult whole = train(p0, data, {}, cfg);

  cfg.epochs = 2;
  const TrainResult first = train(p0, data, {}, cfg);
  const auto path = std::filesystem::temp_directory_path() / "ces_test_checkpoint.bin";
  save_checkpoint(path, first.params, first.state, {{"seed", "9"}});
  const Checkpoint ck = load_checkpoint(path);
  CHECK(flatten(ck.params) == flatten(first.params));
  CHECK(ck.params.arch.features.sobolev_hvp == false);
  REQUIRE(ck.state.has_value());
  CHECK(ck.state->step == first.state.step);
  cfg.epochs = 4;
  const TrainResult resumed = train(ck.params, data, {}, cfg, ck.state);
  CHECK(flatten(resumed.params) == flatten(whole.params));
  CHECK(std::filesystem::exists(path.string() + ".meta"));
  std::filesystem::remove(path);
  std::filesystem::remove(path.string() + ".meta");

  const auto junk = std::filesystem::temp_directory_path() / "ces_test_junk.bin";
  { std::ofstream(junk) << "not a checkpoint"; }
  CHECK_THROWS(load_checkpoint(junk));
  std::filesystem::remove(junk);
}
