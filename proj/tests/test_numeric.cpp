#include <cmath>
#include <numbers>
#include <omp.h>

#include "doctest.h"
#include "oracles.hpp"

#include "cereal/datagen.hpp"
#include "cereal/error.hpp"
#include "cereal/fixmatch.hpp"
#include "cereal/kernels.hpp"
#include "cereal/mlp.hpp"
#include "cereal/training.hpp"

using namespace cereal;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng, double zero_share = 0.0) {
  Matrix m(r, c);
  for (auto& v : m.values()) v = rng.uniform() < zero_share ? 0.0 : rng.normal();
  return m;
}

/// Two Gaussian blobs in 2-d centered at (-2, 0) and (2, 0).
void two_blobs(std::size_t n, Rng& rng, Matrix& x, std::vector<int>& y) {
  x = Matrix(n, 2);
  y.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = static_cast<int>(i % 2);
    x(i, 0) = (y[i] ? 2.0 : -2.0) + 0.5 * rng.normal();
    x(i, 1) = 0.5 * rng.normal();
  }
}

double accuracy(const Mlp& m, const Matrix& x, const std::vector<int>& y) {
  const auto p = argmax_rows(forward(m, x, Mode::eval));
  int ok = 0;
  for (std::size_t i = 0; i < y.size(); ++i) ok += p[i] == y[i];
  return static_cast<double>(ok) / static_cast<double>(y.size());
}

}  // namespace

TEST_SUITE("kernels") {

TEST_CASE("parallel kernels are bit-identical to the serial reference") {
  omp_set_num_threads(4);
  Rng rng(17);
  for (std::size_t rows : {1u, 7u, 300u, 1100u}) {
    const Matrix a = random_matrix(rows, 37, rng, 0.3);
    const Matrix b = random_matrix(37, 29, rng);
    Matrix cs(rows, 29), cp(rows, 29);
    kernels::serial::gemm_nn(a, b, cs);
    kernels::parallel::gemm_nn(a, b, cp);
    CHECK(cs == cp);
    kernels::serial::gemm_nn(a, b, cs, true);
    kernels::parallel::gemm_nn(a, b, cp, true);
    CHECK(cs == cp);

    const Matrix a2 = random_matrix(rows, 33, rng, 0.3);
    const Matrix b2 = random_matrix(rows, 21, rng);
    Matrix ts(33, 21), tp(33, 21);
    kernels::serial::gemm_tn(a2, b2, ts);
    kernels::parallel::gemm_tn(a2, b2, tp);
    CHECK(ts == tp);

    const Matrix centers = random_matrix(6, 37, rng);
    std::vector<int> as(rows), ap(rows);
    std::vector<double> ds(rows), dp(rows);
    kernels::serial::nearest_center(a, centers, as, ds);
    kernels::parallel::nearest_center(a, centers, ap, dp);
    CHECK(as == ap);
    CHECK(ds == dp);

    Matrix ss = random_matrix(rows, 9, rng), sp = ss;
    kernels::serial::softmax_rows(ss);
    kernels::parallel::softmax_rows(sp);
    CHECK(ss == sp);
  }
  omp_set_num_threads(1);
}

TEST_CASE("gemm against a naive triple loop") {
  Rng rng(3);
  const Matrix a = random_matrix(5, 4, rng), b = random_matrix(4, 3, rng);
  Matrix c(5, 3);
  kernels::gemm_nn(a, b, c);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      long double s = 0;
      for (std::size_t k = 0; k < 4; ++k) s += static_cast<long double>(a(i, k)) * b(k, j);
      CHECK(std::fabs(c(i, j) - static_cast<double>(s)) < 1e-12);
    }
  Matrix t(4, 3);
  const Matrix a5 = random_matrix(5, 4, rng), b5 = random_matrix(5, 3, rng);
  kernels::gemm_tn(a5, b5, t);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      long double s = 0;
      for (std::size_t k = 0; k < 5; ++k) s += static_cast<long double>(a5(k, i)) * b5(k, j);
      CHECK(std::fabs(t(i, j) - static_cast<double>(s)) < 1e-12);
    }
}

TEST_CASE("nearest center ties go to the lowest index") {
  Matrix p(1, 1), c(2, 1);
  c(0, 0) = -1.0;
  c(1, 0) = 1.0;
  std::vector<int> a(1);
  std::vector<double> d(1);
  kernels::nearest_center(p, c, a, d);
  CHECK(a[0] == 0);
  CHECK(d[0] == 1.0);
}

}

TEST_SUITE("surrogate") {

TEST_CASE("layer shapes chain from input to classes") {
  Rng rng(1);
  const auto m = Mlp::he_uniform(mlp_widths(16, 128, 4, 8), 0.2, rng);
  REQUIRE(m.num_layers() == 4);
  CHECK(m.layers()[0].weight.rows() == 16);
  CHECK(m.layers()[0].weight.cols() == 128);
  CHECK(m.layers()[3].weight.cols() == 8);
  CHECK(m.layers()[3].bias.size() == 8);
}

TEST_CASE("softmax rows sum to one; zero model is uniform") {
  Rng rng(2);
  const auto m = Mlp::he_uniform({5, 7, 3}, 0.2, rng);
  const Matrix x = random_matrix(11, 5, rng);
  for (Mode mode : {Mode::eval, Mode::train}) {
    Rng d(4);
    const Matrix p = forward(m, x, mode, &d);
    for (std::size_t r = 0; r < p.rows(); ++r) {
      double s = 0;
      for (double v : p.row(r)) {
        CHECK(v >= 0.0);
        s += v;
      }
      CHECK(std::fabs(s - 1.0) < 1e-9);
    }
  }
  const Mlp zero({5, 7, 4}, 0.2);
  const Matrix pz = forward(zero, x, Mode::eval);
  for (double v : pz.values()) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("train-mode forward is deterministic per rng and differs from eval") {
  Rng rng(5);
  const auto m = Mlp::he_uniform({4, 32, 32, 3}, 0.2, rng);
  const Matrix x = random_matrix(6, 4, rng);
  Rng a(9), b(9);
  CHECK(forward(m, x, Mode::train, &a) == forward(m, x, Mode::train, &b));
  Rng c(9);
  CHECK_FALSE(forward(m, x, Mode::train, &c) == forward(m, x, Mode::eval));
  CHECK_THROWS_AS(forward(m, random_matrix(2, 5, rng), Mode::eval), Error);
}

TEST_CASE("dropout masks do not depend on batch composition") {
  Rng rng(6);
  const auto m = Mlp::he_uniform({3, 16, 2}, 0.5, rng);
  const Matrix x = random_matrix(4, 3, rng);
  Rng a(1), b(1);
  const Matrix full = forward(m, x, Mode::train, &a);
  const std::vector<std::size_t> first_two{0, 1};
  const Matrix part = forward(m, x.gather(first_two), Mode::train, &b);
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t c = 0; c < 2; ++c) CHECK(full(r, c) == part(r, c));
}

TEST_CASE("analytic gradients match central differences") {
  Rng rng(123);
  for (int inst = 0; inst < 20; ++inst) {
    const std::size_t d = 2 + rng.below(5), h = 3 + rng.below(6), k = 2 + rng.below(3);
    const std::size_t layers = 1 + rng.below(4);
    auto m = Mlp::he_uniform(mlp_widths(d, h, layers, k), 0.0, rng);
    for (auto& layer : m.layers())
      for (auto& b : layer.bias) b = 0.1 * rng.normal();
    const Matrix x = random_matrix(5, d, rng);
    std::vector<int> y(5);
    for (auto& v : y) v = static_cast<int>(rng.below(k));
    const auto pass = forward_pass(m, x, Mode::eval);
    const auto analytic = backward(m, pass, cross_entropy_grad(pass.probs, y, 1.0 / 5.0));
    const auto numeric = oracle::numeric_gradient(
        m, [&](const Mlp& p) { return cross_entropy_logits(forward_pass(p, x, Mode::eval).logits, y); }, 1e-5);
    CHECK(oracle::relative_error(analytic, numeric) < 1e-4);
  }
}

TEST_CASE("mc dropout reductions") {
  Rng rng(8);
  const auto m = Mlp::he_uniform({3, 8, 8, 4}, 0.2, rng);
  const Matrix x = random_matrix(1, 3, rng);
  Rng a(3), b(3);
  const Matrix one = mc_dropout_predict(m, x.row(0), 1, a);
  const Matrix direct = forward(m, x, Mode::train, &b);
  CHECK(one == direct);

  auto no_drop = m;
  no_drop.set_dropout_rate(0.0);
  Rng c(4);
  const Matrix passes = mc_dropout_predict(no_drop, x.row(0), 10, c);
  const Matrix eval = forward(m, x, Mode::eval);
  for (std::size_t p = 0; p < 10; ++p)
    for (std::size_t j = 0; j < 4; ++j) CHECK(passes(p, j) == eval(0, j));

  const Mlp zero({3, 8, 4}, 0.2);
  Rng z(5);
  const Matrix flat = mc_dropout_predict(zero, x.row(0), 10, z);
  for (double v : flat.values()) CHECK(v == doctest::Approx(0.25));
  Rng e(6);
  CHECK_THROWS_AS(mc_dropout_predict(m, x.row(0), 0, e), Error);
}

TEST_CASE("checkpoint json round-trips exactly") {
  Rng rng(10);
  const auto m = Mlp::he_uniform({6, 5, 3}, 0.2, rng);
  CHECK(Mlp::from_json(nlohmann::json::parse(m.to_json().dump())) == m);
}

TEST_CASE("supervised training separates two blobs") {
  Rng data(21);
  Matrix x;
  std::vector<int> y;
  two_blobs(100, data, x, y);
  ModelConfig mc;
  mc.hidden_width = 32;
  TrainReport report;
  const auto m = train_supervised(Rng(1), x, y, 2, mc, TrainConfig{}, &report);
  CHECK(report.validation_points == 20);
  CHECK(report.train_points == 80);
  CHECK(report.best_epoch >= 0);
  CHECK(accuracy(m, x, y) >= 0.95);
  CHECK(report.train_loss.back() < report.train_loss.front());
}

TEST_CASE("single-class data is learned as a constant") {
  Rng data(22);
  const Matrix x = random_matrix(12, 3, data);
  const std::vector<int> y(12, 0);
  ModelConfig mc;
  mc.hidden_width = 16;
  const auto m = train_supervised(Rng(2), x, y, 3, mc, TrainConfig{});
  CHECK(accuracy(m, x, y) == 1.0);
}

TEST_CASE("training is bit-deterministic and skips validation on tiny sets") {
  Rng data(23);
  Matrix x;
  std::vector<int> y;
  two_blobs(9, data, x, y);
  ModelConfig mc;
  mc.hidden_width = 8;
  TrainConfig tc;
  tc.epochs = 5;
  TrainReport r;
  const auto a = train_supervised(Rng(7), x, y, 2, mc, tc, &r);
  const auto b = train_supervised(Rng(7), x, y, 2, mc, tc);
  CHECK(a == b);
  CHECK(r.validation_points == 0);
  CHECK(r.best_epoch == 4);
  const auto c = train_supervised(Rng(8), x, y, 2, mc, tc);
  CHECK_FALSE(a == c);
}

TEST_CASE("training preconditions") {
  ModelConfig mc;
  TrainConfig tc;
  CHECK_THROWS_AS(train_supervised(Rng(1), Matrix(0, 2), {}, 2, mc, tc), Error);
  const std::vector<int> bad{5};
  CHECK_THROWS_AS(train_supervised(Rng(1), Matrix(1, 2), bad, 2, mc, tc), Error);
  tc.validation_fraction = 1.5;
  CHECK_THROWS_AS(tc.validate(), Error);
}

TEST_CASE("cosine schedule") {
  TrainConfig tc;
  tc.learning_rate = 0.03;
  tc.schedule = Schedule::cosine;
  CHECK(scheduled_lr(tc, 0, 100) == 0.03);
  CHECK(scheduled_lr(tc, 100, 100) == doctest::Approx(0.03 * std::cos(7.0 * std::numbers::pi / 16.0)));
  tc.schedule = Schedule::constant;
  CHECK(scheduled_lr(tc, 50, 100) == 0.03);
}

TEST_CASE("standardized columns have zero mean and unit variance") {
  Rng rng(31);
  Matrix x = random_matrix(50, 3, rng);
  for (std::size_t r = 0; r < 50; ++r) {
    x(r, 0) = 10.0 + 4.0 * x(r, 0);
    x(r, 2) = 7.0;
  }
  const Matrix z = standardize_columns(x);
  for (std::size_t c = 0; c < 3; ++c) {
    double m = 0, v = 0;
    for (std::size_t r = 0; r < 50; ++r) m += z(r, c);
    m /= 50;
    for (std::size_t r = 0; r < 50; ++r) v += (z(r, c) - m) * (z(r, c) - m);
    CHECK(std::fabs(m) < 1e-12);
    CHECK(std::fabs(v / 50 - (c == 2 ? 0.0 : 1.0)) < 1e-12);
  }
}

}

TEST_SUITE("semisup") {

TEST_CASE("mixup identities") {
  Rng rng(1);
  const Matrix batch = random_matrix(5, 3, rng);
  const std::vector<std::size_t> partner{1, 2, 3, 4, 0};
  const std::vector<double> ones(5, 1.0);
  CHECK(apply_mixup(batch, partner, ones) == batch);

  Matrix same(2, 3, 0.25);
  const std::vector<std::size_t> swap{1, 0};
  const std::vector<double> half(2, 0.5);
  CHECK(apply_mixup(same, swap, half) == same);

  auto mixed = mixup_batch(batch, 9.0, rng);
  for (double c : mixed.coef) {
    CHECK(c >= 0.5);
    CHECK(c <= 1.0);
  }
  CHECK_THROWS_AS(mixup_batch(random_matrix(1, 3, rng), 9.0, rng), Error);
}

TEST_CASE("folded Beta(9,9) coefficient mean") {
  Rng rng(2);
  const Matrix batch(1000, 1);
  double sum = 0;
  int n = 0;
  for (int t = 0; t < 100; ++t) {
    const auto m = mixup_batch(batch, 9.0, rng);
    for (double c : m.coef) {
      sum += c;
      ++n;
    }
  }
  const double mean = sum / n;
  CHECK(mean >= 0.55);
  CHECK(mean <= 0.62);
}

TEST_CASE("fixmatch loss decomposition and threshold") {
  Rng rng(3);
  const auto m = Mlp::he_uniform({4, 16, 16, 3}, 0.2, rng);
  const Matrix lx = random_matrix(8, 4, rng), ux = random_matrix(56, 4, rng);
  std::vector<int> ly(8);
  for (auto& v : ly) v = static_cast<int>(rng.below(3));
  FixMatchConfig cfg;
  cfg.threshold = 0.3;
  Rng a(5);
  const auto l = fixmatch_loss(m, lx, ly, ux, cfg, a);
  CHECK(l.loss == l.supervised + cfg.unlabeled_weight * l.unsupervised);
  CHECK(l.supervised >= 0.0);
  CHECK(l.unsupervised >= 0.0);
  CHECK(l.mask_rate > 0.0);

  cfg.threshold = 1.0;
  Rng b(5);
  const auto none = fixmatch_loss(m, lx, ly, ux, cfg, b);
  CHECK(none.mask_rate == 0.0);
  CHECK(none.unsupervised == 0.0);
  CHECK(none.loss == none.supervised);

  cfg.threshold = 0.3;
  cfg.unlabeled_weight = 0.0;
  Rng c(5);
  const auto off = fixmatch_loss(m, lx, ly, ux, cfg, c);
  CHECK(off.loss == off.supervised);
}

TEST_CASE("raising the threshold never raises the mask rate") {
  Rng rng(4);
  const auto m = Mlp::he_uniform({3, 8, 2}, 0.2, rng);
  const Matrix lx = random_matrix(4, 3, rng), ux = random_matrix(40, 3, rng);
  const std::vector<int> ly{0, 1, 0, 1};
  FixMatchConfig cfg;
  double last = 1.0;
  for (double tau : {0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 1.0}) {
    cfg.threshold = tau;
    Rng r(11);
    const double rate = fixmatch_loss(m, lx, ly, ux, cfg, r).mask_rate;
    CHECK(rate <= last);
    last = rate;
  }
}

TEST_CASE("single confident unlabeled point under identity mixup") {
  Mlp m({2, 2}, 0.0);
  m.layers()[0].weight(0, 0) = 1.0;
  Matrix lx(1, 2);
  const std::vector<int> ly{0};
  Matrix ux(1, 2);
  ux(0, 0) = 4.0;
  FixMatchConfig cfg;
  Rng rng(1);
  const auto l = fixmatch_loss(m, lx, ly, ux, cfg, rng, 1.0);
  // logits (4, 0): confidence 1 / (1 + e^-4) > 0.95, target class 0
  CHECK(l.mask_rate == 1.0);
  CHECK(l.unsupervised == doctest::Approx(std::log1p(std::exp(-4.0))).epsilon(1e-12));
  CHECK(l.supervised == doctest::Approx(std::numbers::ln2).epsilon(1e-12));
}

TEST_CASE("fixmatch reduces to supervised training bit-identically") {
  Rng data(5);
  Matrix x;
  std::vector<int> y;
  two_blobs(40, data, x, y);
  const Matrix ux = random_matrix(30, 2, data);
  ModelConfig mc;
  mc.hidden_width = 16;
  FixMatchConfig cfg;
  cfg.epochs = 4;
  const auto sup = train_supervised(Rng(9), x, y, 2, mc, cfg.supervised_equivalent());
  CHECK(train_fixmatch(Rng(9), x, y, 2, Matrix(0, 2), mc, cfg) == sup);
  cfg.unlabeled_weight = 0.0;
  CHECK(train_fixmatch(Rng(9), x, y, 2, ux, mc, cfg) == sup);
  cfg.unlabeled_weight = 1.0;
  CHECK_FALSE(train_fixmatch(Rng(9), x, y, 2, ux, mc, cfg) == sup);
}

TEST_CASE("fixmatch beats supervised with fifty labels on eight blobs") {
  double fm = 0, sup = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    BlobSpec spec;
    spec.n_points = 1000;
    spec.n_clusters = 8;
    spec.dimension = 16;
    spec.cluster_std = 4.0;
    spec.seed = 100 + seed;
    const auto blobs = make_blobs(spec);
    const Matrix x = standardize_columns(blobs.dataset.vectors());
    std::vector<std::size_t> li, ui;
    for (std::size_t i = 0; i < spec.n_points; ++i) (i < 50 ? li : ui).push_back(i);
    std::vector<int> ly, uy;
    for (auto i : li) ly.push_back(blobs.labels[i]);
    for (auto i : ui) uy.push_back(blobs.labels[i]);
    const Matrix lx = x.gather(li), ux = x.gather(ui);
    ModelConfig mc;
    mc.hidden_width = 32;
    FixMatchConfig cfg;
    cfg.epochs = 128;
    sup += accuracy(train_supervised(Rng(seed), lx, ly, 8, mc, cfg.supervised_equivalent()), ux, uy);
    fm += accuracy(train_fixmatch(Rng(seed), lx, ly, 8, ux, mc, cfg), ux, uy);
  }
  MESSAGE("fixmatch " << fm / 5 << " supervised " << sup / 5);
  CHECK(fm > sup);
}

}
