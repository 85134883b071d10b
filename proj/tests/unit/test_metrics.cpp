#include <cmath>

#include "doctest.h"
#include "error_code.hpp"
#include "metrics.hpp"
#include "synthetic.hpp"

using namespace hyperrna;
using hyperrna::testing::code_of;

namespace {

std::vector<Vec3> random_cloud(Rng& rng, std::size_t n, double spread = 5.0) {
  std::vector<Vec3> pts(n);
  for (auto& p : pts) p = {rng.normal() * spread, rng.normal() * spread, rng.normal() * spread};
  return pts;
}

Mat3 quat_to_matrix(double w, double x, double y, double z) {
  const double n = std::sqrt(w * w + x * x + y * y + z * z);
  w /= n, x /= n, y /= n, z /= n;
  return {{{1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)},
           {2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)},
           {2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)}}};
}

// RMSD after centering both clouds and rotating p by r.
double centered_rmsd(const std::vector<Vec3>& p, const std::vector<Vec3>& q, const Mat3& r) {
  Vec3 cp{}, cq{};
  for (std::size_t i = 0; i < p.size(); ++i)
    for (int c = 0; c < 3; ++c) cp[c] += p[i][c] / p.size(), cq[c] += q[i][c] / q.size();
  double s = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const Vec3 x = testing::rotate(r, Vec3{p[i][0] - cp[0], p[i][1] - cp[1], p[i][2] - cp[2]});
    for (int c = 0; c < 3; ++c) s += std::pow(x[c] - (q[i][c] - cq[c]), 2);
  }
  return std::sqrt(s / p.size());
}

// Random quaternion search followed by shrinking local perturbation.
double search_min_rmsd(const std::vector<Vec3>& p, const std::vector<Vec3>& q, Rng& rng) {
  std::array<double, 4> best{1, 0, 0, 0};
  double best_val = INFINITY;
  for (int i = 0; i < 20000; ++i) {
    std::array<double, 4> c{rng.normal(), rng.normal(), rng.normal(), rng.normal()};
    const double v = centered_rmsd(p, q, quat_to_matrix(c[0], c[1], c[2], c[3]));
    if (v < best_val) best_val = v, best = c;
  }
  for (double step = 0.1; step > 1e-9; step *= 0.7) {
    for (int i = 0; i < 200; ++i) {
      std::array<double, 4> c = best;
      for (double& x : c) x += rng.normal() * step;
      const double v = centered_rmsd(p, q, quat_to_matrix(c[0], c[1], c[2], c[3]));
      if (v < best_val) best_val = v, best = c;
    }
  }
  return best_val;
}

double dist(const Vec3& a, const Vec3& b) {
  return std::sqrt(std::pow(a[0] - b[0], 2) + std::pow(a[1] - b[1], 2) + std::pow(a[2] - b[2], 2));
}

double lddt_oracle(const std::vector<Vec3>& ref, const std::vector<Vec3>& mod, double radius) {
  double kept = 0, total = 0;
  for (std::size_t i = 0; i < ref.size(); ++i)
    for (std::size_t j = 0; j < ref.size(); ++j) {
      if (i == j || (i > j ? i - j : j - i) < 2) continue;
      const double d = dist(ref[i], ref[j]);
      if (d >= radius) continue;
      const double err = std::abs(d - dist(mod[i], mod[j]));
      for (double t : kLddtThresholds) {
        total += 1;
        if (err < t) kept += 1;
      }
    }
  return total == 0 ? 1.0 : kept / total;
}

}  // namespace

TEST_CASE("recovery counts matching positions") {
  CHECK(recovery("ACGU", "ACGU") == 1.0);
  CHECK(recovery("ACGU", "ACGA") == 0.75);
  CHECK(recovery("AAAA", "UUUU") == 0.0);
  CHECK(code_of([] { recovery("ACG", "AC"); }) == ErrorCode::kLengthMismatch);
  CHECK(code_of([] { recovery("", ""); }) == ErrorCode::kEmptyInput);
}

TEST_CASE("kabsch_align recovers a rigid motion exactly") {
  Rng rng(41);
  for (int trial = 0; trial < 20; ++trial) {
    const auto p = random_cloud(rng, 3 + rng.below(30));
    const Mat3 r = testing::random_rotation(rng);
    const Vec3 t{rng.uniform(-20, 20), rng.uniform(-20, 20), rng.uniform(-20, 20)};
    std::vector<Vec3> q;
    for (const auto& x : p) q.push_back(testing::rigid(r, t, x));
    const AlignmentResult a = kabsch_align(p, q);
    CHECK(a.rmsd < 1e-9);
    for (int i = 0; i < 3; ++i) {
      CHECK(a.translation[i] == doctest::Approx(t[i]).epsilon(1e-9));
      for (int j = 0; j < 3; ++j) CHECK(a.rotation[i][j] == doctest::Approx(r[i][j]).epsilon(1e-9));
    }
  }
}

TEST_CASE("kabsch_align is the minimum over rotations and never reflects") {
  Rng rng(42);
  for (int trial = 0; trial < 4; ++trial) {
    const auto p = random_cloud(rng, 8);
    auto q = random_cloud(rng, 8);
    if (trial == 0)
      for (std::size_t i = 0; i < p.size(); ++i) q[i] = {-p[i][0], p[i][1], p[i][2]};  // mirror image
    const AlignmentResult a = kabsch_align(p, q);
    const double searched = search_min_rmsd(p, q, rng);
    CHECK(a.rmsd <= searched + 1e-9);
    CHECK(a.rmsd == doctest::Approx(searched).epsilon(1e-6));
    const Mat3& m = a.rotation;
    const double det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
                       m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
                       m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    CHECK(det == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(centered_rmsd(p, q, m) == doctest::Approx(a.rmsd).epsilon(1e-10));
  }
}

TEST_CASE("kabsch_align errors") {
  const std::vector<Vec3> two{{0, 0, 0}, {1, 0, 0}};
  CHECK(code_of([&] { kabsch_align(two, two); }) == ErrorCode::kTooFewPoints);
  const std::vector<Vec3> same{{1, 1, 1}, {1, 1, 1}, {1, 1, 1}};
  CHECK(code_of([&] { kabsch_align(same, same); }) == ErrorCode::kDegenerateConfiguration);
  const std::vector<Vec3> three{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
  CHECK(code_of([&] { kabsch_align(three, two); }) == ErrorCode::kLengthMismatch);
}

TEST_CASE("lddt matches a pairwise loop oracle") {
  Rng rng(43);
  for (int trial = 0; trial < 30; ++trial) {
    const auto ref = random_cloud(rng, 2 + rng.below(25), 6.0);
    std::vector<Vec3> mod = ref;
    const double noise = rng.uniform(0, 3);
    for (auto& x : mod)
      for (double& c : x) c += rng.normal() * noise;
    CHECK(lddt(ref, mod) == doctest::Approx(lddt_oracle(ref, mod, 15.0)).epsilon(1e-14));
  }
  const auto ref = random_cloud(rng, 10);
  CHECK(lddt(ref, ref) == 1.0);
  const std::vector<Vec3> pair{{0, 0, 0}, {1, 0, 0}};
  CHECK(lddt(pair, pair) == 1.0);  // no pair with separation >= 2
}

TEST_CASE("perplexity of uniform logits is four and of a confident correct model near one") {
  const std::vector<double> flat(12, 0.0);
  const std::vector<std::size_t> truth{0, 3, 1};
  CHECK(perplexity(flat, truth) == doctest::Approx(4.0).epsilon(1e-14));
  std::vector<double> sharp(12, 0.0);
  for (std::size_t t = 0; t < 3; ++t) sharp[t * 4 + truth[t]] = 50.0;
  CHECK(perplexity(sharp, truth) == doctest::Approx(1.0).epsilon(1e-12));
  // Hand value: one row with p(true) = e / (e + 3).
  const std::vector<double> one{1, 0, 0, 0};
  CHECK(perplexity(one, std::vector<std::size_t>{0}) == doctest::Approx((std::exp(1.0) + 3) / std::exp(1.0)));
  CHECK(code_of([&] { perplexity(flat, std::vector<std::size_t>{0}); }) == ErrorCode::kLengthMismatch);
}

TEST_CASE("sequence_diversity averages pairwise Hamming fractions") {
  const std::vector<std::string> s{"AAAA", "AAAU", "UUUU"};
  // pairs: 1/4, 4/4, 3/4
  CHECK(sequence_diversity(s) == doctest::Approx((0.25 + 1.0 + 0.75) / 3));
  const std::vector<std::string> same{"ACGU", "ACGU"};
  CHECK(sequence_diversity(same) == 0.0);
  const std::vector<std::string> single{"ACGU"};
  CHECK(code_of([&] { sequence_diversity(single); }) == ErrorCode::kTooFewSamples);
  const std::vector<std::string> ragged{"ACGU", "ACG"};
  CHECK(code_of([&] { sequence_diversity(ragged); }) == ErrorCode::kLengthMismatch);
}

TEST_CASE("mean_sem uses the sample standard deviation") {
  const std::vector<double> v{1, 2, 3, 4};
  const MeanSem m = mean_sem(v);
  CHECK(m.mean == 2.5);
  CHECK(m.sem == doctest::Approx(std::sqrt(5.0 / 3.0) / 2.0).epsilon(1e-14));
  CHECK(mean_sem(std::vector<double>{7}).sem == 0.0);
  CHECK(code_of([] { mean_sem(std::vector<double>{}); }) == ErrorCode::kEmptyInput);
}
