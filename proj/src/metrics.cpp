#include "metrics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "error.hpp"

namespace hyperrna {

namespace {

void require_equal_lengths(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw Error(ErrorCode::kLengthMismatch, std::string(what) + ": " + std::to_string(a) + " vs " +
                                                std::to_string(b));
  }
}

double dist(const Vec3& a, const Vec3& b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

}  // namespace

double recovery(std::string_view truth, std::string_view predicted) {
  require_equal_lengths(truth.size(), predicted.size(), "recovery");
  if (truth.empty()) throw Error(ErrorCode::kEmptyInput, "recovery of empty sequences");
  std::size_t same = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) same += truth[i] == predicted[i];
  return static_cast<double>(same) / static_cast<double>(truth.size());
}

AlignmentResult kabsch_align(std::span<const Vec3> p, std::span<const Vec3> q) {
  require_equal_lengths(p.size(), q.size(), "kabsch_align");
  if (p.size() < 3) {
    throw Error(ErrorCode::kTooFewPoints, "superposition needs at least 3 points, got " +
                                              std::to_string(p.size()));
  }
  const std::size_t n = p.size();
  Eigen::Vector3d pc = Eigen::Vector3d::Zero(), qc = Eigen::Vector3d::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    pc += Eigen::Vector3d(p[i][0], p[i][1], p[i][2]);
    qc += Eigen::Vector3d(q[i][0], q[i][1], q[i][2]);
  }
  pc /= static_cast<double>(n);
  qc /= static_cast<double>(n);
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Vector3d a = Eigen::Vector3d(p[i][0], p[i][1], p[i][2]) - pc;
    const Eigen::Vector3d b = Eigen::Vector3d(q[i][0], q[i][1], q[i][2]) - qc;
    cov += a * b.transpose();
  }
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Vector3d s = svd.singularValues();
  if (!(s[0] > 0.0) || s[1] <= 1e-10 * s[0]) {
    throw Error(ErrorCode::kDegenerateConfiguration,
                "covariance rank < 2 (points are coincident or collinear)");
  }
  const Eigen::Matrix3d u = svd.matrixU();
  const Eigen::Matrix3d v = svd.matrixV();
  Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
  if ((v * u.transpose()).determinant() < 0.0) d(2, 2) = -1.0;
  const Eigen::Matrix3d r = v * d * u.transpose();
  const Eigen::Vector3d t = qc - r * pc;

  AlignmentResult out;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) out.rotation[i][j] = r(i, j);
    out.translation[i] = t[i];
  }
  double sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Vector3d moved = r * Eigen::Vector3d(p[i][0], p[i][1], p[i][2]) + t;
    sq += (moved - Eigen::Vector3d(q[i][0], q[i][1], q[i][2])).squaredNorm();
  }
  out.rmsd = std::sqrt(sq / static_cast<double>(n));
  return out;
}

double lddt(std::span<const Vec3> reference, std::span<const Vec3> model, double radius,
            std::span<const double> thresholds) {
  require_equal_lengths(reference.size(), model.size(), "lddt");
  std::size_t pairs = 0;
  std::size_t preserved = 0;
  const std::size_t n = reference.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 2; j < n; ++j) {
      const double d_ref = dist(reference[i], reference[j]);
      if (!(d_ref < radius)) continue;
      const double diff = std::abs(dist(model[i], model[j]) - d_ref);
      ++pairs;
      for (double th : thresholds) preserved += diff < th;
    }
  }
  if (pairs == 0) return 1.0;
  return static_cast<double>(preserved) / static_cast<double>(pairs * thresholds.size());
}

double perplexity(std::span<const double> logits, std::span<const std::size_t> truth) {
  if (logits.size() != truth.size() * 4) {
    throw Error(ErrorCode::kLengthMismatch, std::to_string(logits.size() / 4) +
                                                " logit rows for " + std::to_string(truth.size()) +
                                                " positions");
  }
  if (truth.empty()) throw Error(ErrorCode::kEmptyInput, "perplexity of an empty sequence");
  double ce = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double* row = logits.data() + i * 4;
    const double mx = *std::max_element(row, row + 4);
    double total = 0.0;
    for (int c = 0; c < 4; ++c) total += std::exp(row[c] - mx);
    ce -= row[truth[i]] - mx - std::log(total);
  }
  return std::exp(ce / static_cast<double>(truth.size()));
}

double sequence_diversity(std::span<const std::string> samples) {
  if (samples.size() < 2) {
    throw Error(ErrorCode::kTooFewSamples, "diversity needs at least 2 samples, got " +
                                               std::to_string(samples.size()));
  }
  const std::size_t len = samples[0].size();
  if (len == 0) throw Error(ErrorCode::kEmptyInput, "diversity of empty sequences");
  for (const auto& s : samples) require_equal_lengths(len, s.size(), "sequence_diversity");
  double total = 0.0;
  std::size_t pairs = 0;
  for (std::size_t a = 0; a < samples.size(); ++a) {
    for (std::size_t b = a + 1; b < samples.size(); ++b) {
      std::size_t diff = 0;
      for (std::size_t i = 0; i < len; ++i) diff += samples[a][i] != samples[b][i];
      total += static_cast<double>(diff) / static_cast<double>(len);
      ++pairs;
    }
  }
  return total / static_cast<double>(pairs);
}

MeanSem mean_sem(std::span<const double> values) {
  if (values.empty()) throw Error(ErrorCode::kEmptyInput, "mean of zero values");
  MeanSem out;
  const double n = static_cast<double>(values.size());
  for (double v : values) out.mean += v;
  out.mean /= n;
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - out.mean) * (v - out.mean);
    out.sem = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
  }
  return out;
}

}  // namespace hyperrna
