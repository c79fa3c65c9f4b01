#include "survnn/metrics.hpp"

#include <algorithm>
#include <numeric>

#include "survnn/errors.hpp"

namespace survnn {
namespace {

class Fenwick {
  public:
    explicit Fenwick(int n) : tree_(static_cast<std::size_t>(n) + 1, 0) {}

    void add(int pos, int delta) {
        for (int i = pos + 1; i < static_cast<int>(tree_.size()); i += i & -i)
            tree_[static_cast<std::size_t>(i)] += delta;
    }
    // Sum of counts at positions [0, pos).
    std::int64_t prefix(int pos) const {
        std::int64_t s = 0;
        for (int i = pos; i > 0; i -= i & -i) s += tree_[static_cast<std::size_t>(i)];
        return s;
    }

  private:
    std::vector<std::int64_t> tree_;
};

// Dense ranks of v (equal values share a rank).
std::vector<int> dense_ranks(const std::vector<double>& v, int& n_ranks) {
    std::vector<double> sorted = v;
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    n_ranks = static_cast<int>(sorted.size());
    std::vector<int> ranks(v.size());
    for (std::size_t i = 0; i < v.size(); ++i)
        ranks[i] = static_cast<int>(std::lower_bound(sorted.begin(), sorted.end(), v[i]) -
                                    sorted.begin());
    return ranks;
}

CIndexResult c_index_impl(const std::vector<double>& f,
                          const std::vector<double>& time,
                          const std::vector<int>& event) {
    const std::size_t n = f.size();
    CIndexResult result;
    if (n < 2) return result;

    int n_ranks = 0;
    const std::vector<int> rank = dense_ranks(f, n_ranks);

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return time[static_cast<std::size_t>(a)] <
                                                time[static_cast<std::size_t>(b)]; });

    // Walk tied-time groups in ascending time. The tree holds the prediction
    // ranks of every record with a strictly larger time; same-time pairs are
    // not comparable.
    Fenwick tree(n_ranks);
    std::int64_t remaining = static_cast<std::int64_t>(n);
    for (std::size_t i = 0; i < n; ++i) tree.add(rank[static_cast<std::size_t>(order[i])], 1);

    std::size_t pos = 0;
    while (pos < n) {
        std::size_t group_end = pos;
        const double t = time[static_cast<std::size_t>(order[pos])];
        while (group_end < n && time[static_cast<std::size_t>(order[group_end])] == t) {
            tree.add(rank[static_cast<std::size_t>(order[group_end])], -1);
            --remaining;
            ++group_end;
        }
        for (std::size_t k = pos; k < group_end; ++k) {
            const int j = order[k];
            if (event[static_cast<std::size_t>(j)] != 1) continue;
            const int rj = rank[static_cast<std::size_t>(j)];
            const std::int64_t below = tree.prefix(rj);              // f_i < f_j
            const std::int64_t tied = tree.prefix(rj + 1) - below;   // f_i == f_j
            result.comparable += remaining;
            result.concordant_x2 += 2 * below + tied;
        }
        pos = group_end;
    }
    return result;
}

}  // namespace

CIndexResult c_index(const Eigen::VectorXd& f_hat, const SurvivalData& data) {
    if (f_hat.size() != data.size()) throw ConfigError("c_index length mismatch");
    std::vector<double> f(f_hat.data(), f_hat.data() + f_hat.size());
    std::vector<double> t(data.time.data(), data.time.data() + data.time.size());
    std::vector<int> e(data.event.data(), data.event.data() + data.event.size());
    return c_index_impl(f, t, e);
}

CIndexResult c_index_subset(const Eigen::VectorXd& f_hat,
                            const SurvivalData& data,
                            const Eigen::VectorXi& mask) {
    if (f_hat.size() != data.size() || mask.size() != data.size())
        throw ConfigError("c_index_subset length mismatch");
    std::vector<double> f, t;
    std::vector<int> e;
    for (Eigen::Index i = 0; i < data.size(); ++i) {
        if (mask(i) == 0) continue;
        f.push_back(f_hat(i));
        t.push_back(data.time(i));
        e.push_back(data.event(i));
    }
    return c_index_impl(f, t, e);
}

AucResult auc(const Eigen::VectorXd& scores, const Eigen::VectorXi& labels) {
    if (scores.size() != labels.size()) throw ConfigError("auc length mismatch");
    AucResult result;
    const Eigen::Index n = scores.size();
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return scores(a) < scores(b); });

    std::int64_t n_pos = 0, n_neg = 0;
    for (Eigen::Index i = 0; i < n; ++i) (labels(i) == 1 ? n_pos : n_neg)++;
    result.pairs = n_pos * n_neg;
    if (n_pos == 0 || n_neg == 0) return result;

    std::int64_t neg_below = 0;
    std::size_t pos = 0;
    const std::size_t nn = static_cast<std::size_t>(n);
    while (pos < nn) {
        std::size_t group_end = pos;
        const double s = scores(order[pos]);
        std::int64_t group_pos = 0, group_neg = 0;
        while (group_end < nn && scores(order[group_end]) == s) {
            (labels(order[group_end]) == 1 ? group_pos : group_neg)++;
            ++group_end;
        }
        result.wins_x2 += group_pos * (2 * neg_below + group_neg);
        neg_below += group_neg;
        pos = group_end;
    }
    return result;
}

}  // namespace survnn
