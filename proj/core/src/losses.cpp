#include "idcm/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "idcm/cascade.hpp"
#include "idcm/util.hpp"

namespace idcm {

namespace {

// log(1 + exp(-x)) without overflow
double softplus_neg(double x) {
    if (x > 0) {
        return std::log1p(std::exp(-x));
    }
    return -x + std::log1p(std::exp(x));
}

double sigmoid(double x) {
    if (x >= 0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

std::vector<double> softmax(std::span<const double> v) {
    const double mx = *std::max_element(v.begin(), v.end());
    std::vector<double> out(v.size());
    double z = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        out[i] = std::exp(v[i] - mx);
        z += out[i];
    }
    for (auto& x : out) {
        x /= z;
    }
    return out;
}

double log_discount(double x) { return std::log2(1.0 + x); }

void check_lengths(std::span<const double> student, std::span<const double> teacher, const char* what) {
    if (student.size() != teacher.size()) {
        throw Error(std::string(what) + ": student has " + std::to_string(student.size()) + " scores, teacher " +
                    std::to_string(teacher.size()));
    }
}

} // namespace

PairLoss ranknet_loss(double s_pos, double s_neg) {
    const double diff = s_pos - s_neg;
    PairLoss out;
    out.loss = softplus_neg(diff);
    const double g = -(1.0 - sigmoid(diff));
    out.d_pos = g;
    out.d_neg = -g;
    return out;
}

ListLoss kd_mse_loss(std::span<const double> student, std::span<const double> teacher) {
    check_lengths(student, teacher, "kd_mse_loss");
    if (student.empty()) {
        throw Error("kd_mse_loss: needs at least one passage");
    }
    const double n = static_cast<double>(student.size());
    ListLoss out;
    out.grad.resize(student.size());
    for (std::size_t i = 0; i < student.size(); ++i) {
        const double d = student[i] - teacher[i];
        out.loss += d * d / n;
        out.grad[i] = 2.0 * d / n;
    }
    return out;
}

ListLoss kd_ce_loss(std::span<const double> student, std::span<const double> teacher) {
    check_lengths(student, teacher, "kd_ce_loss");
    if (student.size() < 2) {
        throw Error("kd_ce_loss: needs at least two passages");
    }
    auto p = softmax(teacher);
    auto q = softmax(student);
    const double mx = *std::max_element(student.begin(), student.end());
    double lse = 0.0;
    for (double s : student) {
        lse += std::exp(s - mx);
    }
    lse = mx + std::log(lse);
    ListLoss out;
    out.grad.resize(student.size());
    for (std::size_t i = 0; i < student.size(); ++i) {
        out.loss -= p[i] * (student[i] - lse);
        out.grad[i] = q[i] - p[i];
    }
    return out;
}

std::vector<int> descending_ranks(std::span<const double> scores) {
    std::vector<int> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return scores[static_cast<std::size_t>(a)] > scores[static_cast<std::size_t>(b)];
    });
    std::vector<int> rank(scores.size());
    for (std::size_t pos = 0; pos < order.size(); ++pos) {
        rank[static_cast<std::size_t>(order[pos])] = static_cast<int>(pos) + 1;
    }
    return rank;
}

std::vector<double> binary_topk_gains(std::span<const double> teacher, int top_k) {
    std::vector<double> gains(teacher.size(), 0.0);
    if (teacher.empty() || top_k < 1) {
        return gains;
    }
    for (int idx : select_top_k(teacher, top_k)) {
        gains[static_cast<std::size_t>(idx)] = 1.0;
    }
    return gains;
}

ListLoss kd_ndcg2_loss(std::span<const double> student, std::span<const double> teacher, int top_k) {
    check_lengths(student, teacher, "kd_ndcg2_loss");
    const std::size_t n = student.size();
    if (n < 2) {
        throw Error("kd_ndcg2_loss: needs at least two passages");
    }
    if (top_k < 1) {
        throw Error("kd_ndcg2_loss: top_k must be >= 1");
    }
    ListLoss out;
    out.grad.assign(n, 0.0);
    if (static_cast<std::size_t>(top_k) >= n) {
        warn("kd_ndcg2_loss: top_k >= passage count, every passage has gain; loss is zero");
        return out;
    }

    auto gains = binary_topk_gains(teacher, top_k);
    double max_dcg = 0.0;
    for (int r = 1; r <= top_k; ++r) {
        max_dcg += 1.0 / log_discount(r);  // binary gain 2^1 - 1 = 1
    }
    for (auto& g : gains) {
        g /= max_dcg;
    }
    auto rank = descending_ranks(student);

    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (!(gains[i] > gains[j])) {
                continue;
            }
            const double dist = std::abs(rank[i] - rank[j]);
            const double delta =
                std::abs(gains[i] - gains[j]) * std::abs(1.0 / log_discount(dist) - 1.0 / log_discount(dist + 1.0));
            const double diff = student[i] - student[j];
            out.loss += delta * softplus_neg(diff);
            const double g = -delta * (1.0 - sigmoid(diff));
            out.grad[i] += g;
            out.grad[j] -= g;
        }
    }
    return out;
}

} // namespace idcm
