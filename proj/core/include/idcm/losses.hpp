#pragma once

#include <span>
#include <vector>

namespace idcm {

struct PairLoss {
    double loss = 0.0;
    double d_pos = 0.0;
    double d_neg = 0.0;
};

/// -log sigmoid(s_pos - s_neg), computed stably.
PairLoss ranknet_loss(double s_pos, double s_neg);

struct ListLoss {
    double loss = 0.0;
    std::vector<double> grad;  // d loss / d student
};

/// Mean squared error over passages.
ListLoss kd_mse_loss(std::span<const double> student, std::span<const double> teacher);

/// Cross entropy between the passage softmax of teacher and student. Needs n >= 2.
ListLoss kd_ce_loss(std::span<const double> student, std::span<const double> teacher);

/// LambdaLoss NDCG-Loss2 with binary gains on the teacher's top_k passages.
///
/// Student ranks r come from a descending sort of the student scores (ties to the lower
/// index). For every pair with G_i > G_j:
///
///   loss += -delta_ij * log sigmoid(s_i - s_j)
///   delta_ij = |G_i - G_j| * |1/D(|r_i - r_j|) - 1/D(|r_i - r_j| + 1)|,  D(x) = log2(1 + x)
///
/// with G = gain / maxDCG. Ranks are treated as constants when differentiating. When all
/// gains are equal (top_k >= n) the loss and gradient are zero.
ListLoss kd_ndcg2_loss(std::span<const double> student, std::span<const double> teacher, int top_k);

/// Teacher top-k indicator (ties to the lower index).
std::vector<double> binary_topk_gains(std::span<const double> teacher, int top_k);

/// 1-based positions of each passage under a descending sort of `scores` (ties to the lower index).
std::vector<int> descending_ranks(std::span<const double> scores);

} // namespace idcm
