#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <vector>

#include "survnn/survival.hpp"

namespace survnn {

// Exact pair counts: numerator kept in half-units so prediction ties
// (worth 0.5) stay integral.
struct CIndexResult {
    std::int64_t concordant_x2 = 0;   // 2 * (concordant + 0.5 * tied)
    std::int64_t comparable = 0;      // pairs with T_i > T_j and event_j = 1

    std::optional<double> value() const {
        if (comparable == 0) return std::nullopt;
        return static_cast<double>(concordant_x2) / (2.0 * static_cast<double>(comparable));
    }
};

struct AucResult {
    std::int64_t wins_x2 = 0;         // 2 * (pos > neg) + (pos == neg)
    std::int64_t pairs = 0;           // |pos| * |neg|

    std::optional<double> value() const {
        if (pairs == 0) return std::nullopt;
        return static_cast<double>(wins_x2) / (2.0 * static_cast<double>(pairs));
    }
};

struct MetricReport {
    std::optional<double> auc;
    std::optional<double> c1;
    std::optional<double> c2;
    std::int64_t n_pairs_c1 = 0;
    std::int64_t n_pairs_c2 = 0;
};

// Harrell's C in the hazard-ordering form:
//   sum_{i!=j} 1{f_i < f_j} 1{T_i > T_j} event_j / sum_{i!=j} 1{T_i > T_j} event_j,
// prediction ties counting one half. O(n log n) via a Fenwick tree over
// prediction ranks; must agree exactly with the brute-force double loop.
CIndexResult c_index(const Eigen::VectorXd& f_hat, const SurvivalData& data);

// c_index restricted to records where mask[i] != 0.
CIndexResult c_index_subset(const Eigen::VectorXd& f_hat,
                            const SurvivalData& data,
                            const Eigen::VectorXi& mask);

// Mann-Whitney AUC with tie halving; exact integer counts.
AucResult auc(const Eigen::VectorXd& scores, const Eigen::VectorXi& labels);

}  // namespace survnn
