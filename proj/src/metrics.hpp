#pragma once

#include <array>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "structure_io.hpp"

namespace hyperrna {

using Mat3 = std::array<std::array<double, 3>, 3>;

struct AlignmentResult {
  Mat3 rotation{};  // maps P into the frame of Q: q ~ R p + t
  Vec3 translation{};
  double rmsd = 0.0;
};

// Fraction of positions with identical letters.
double recovery(std::string_view truth, std::string_view predicted);

// Least-squares superposition of P onto Q (SVD of the centered covariance,
// with the smallest singular direction flipped when needed to avoid a
// reflection).
AlignmentResult kabsch_align(std::span<const Vec3> p, std::span<const Vec3> q);

inline constexpr std::array<double, 4> kLddtThresholds = {0.5, 1.0, 2.0, 4.0};

// Superposition-free lDDT over pairs with reference distance below `radius`
// and sequence separation of at least 2. Returns 1 when no pair qualifies.
double lddt(std::span<const Vec3> reference, std::span<const Vec3> model, double radius = 15.0,
            std::span<const double> thresholds = kLddtThresholds);

// exp of the mean per-position cross-entropy; `logits` is L x 4, row-major.
double perplexity(std::span<const double> logits, std::span<const std::size_t> truth);

// Mean normalized Hamming distance over unordered pairs.
double sequence_diversity(std::span<const std::string> samples);

struct MeanSem {
  double mean = 0.0;
  double sem = 0.0;  // sample standard deviation / sqrt(n); 0 for n = 1
};

MeanSem mean_sem(std::span<const double> values);

}  // namespace hyperrna
