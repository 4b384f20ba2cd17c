#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "latdet/constellation.hpp"

namespace latdet {

// Node-counting convention shared by every detector in this header: one
// visited node is one evaluation of a single-stage squared-residual term of
// the accumulative metric for one candidate symbol.

/// Per-stage retention limits of the M-algorithm, stored in detection order:
/// limits[0] applies to the first detection stage (the last row of R).
struct MSchedule {
    std::vector<int> limits;

    explicit MSchedule(std::vector<int> l) : limits(std::move(l)) {
        if (limits.empty()) throw std::invalid_argument("MSchedule: schedule must not be empty");
        for (int m : limits) {
            if (m < 1) throw std::invalid_argument("MSchedule: every stage limit must be >= 1");
        }
    }

    int size() const { return static_cast<int>(limits.size()); }
};

/// The schedule shape used throughout: [q, q^2, q^3, q^3, ..., q^3].
inline MSchedule default_schedule(int n_s, const PamAlphabet& alphabet) {
    if (n_s < 1) throw std::invalid_argument("default_schedule: n_s must be >= 1");
    const std::uint64_t q = static_cast<std::uint64_t>(alphabet.q);
    const std::uint64_t cap = q * q * q;
    std::vector<int> limits(static_cast<std::size_t>(n_s));
    std::uint64_t m = 1;
    for (auto& l : limits) {
        if (m < cap) m *= q;
        if (m > static_cast<std::uint64_t>(std::numeric_limits<int>::max())) {
            throw std::invalid_argument("default_schedule: stage limit overflows int");
        }
        l = static_cast<int>(std::min(m, cap));
    }
    return MSchedule(std::move(limits));
}

struct DetectionResult {
    SymbolVector solution;
    double metric = 0.0;  // squared Euclidean distance ||R x - y||^2
    std::uint64_t nodes_visited = 0;
    bool terminated_early = false;
};

/// Partial branch of the detection tree. idx[row] holds the chosen alphabet
/// index for every already-decided row (detection fills rows n_s-1 downward,
/// undecided rows are -1); metric is the accumulative metric over those rows.
struct Branch {
    std::vector<int> idx;
    double metric = 0.0;
};

/// Survivor lists after each stage's selection step, for instrumentation.
struct BeamTrace {
    std::vector<std::vector<Branch>> stages;
};

namespace detail {

inline int validate_reduced_system(const Eigen::MatrixXd& r_upper, const Eigen::VectorXd& y,
                                   const PamAlphabet& alphabet) {
    const int n = static_cast<int>(r_upper.rows());
    if (r_upper.cols() != n) throw std::invalid_argument("detector: R must be square");
    if (y.size() != n) throw std::invalid_argument("detector: y length must match R");
    if (alphabet.q < 2) throw std::invalid_argument("detector: alphabet has no levels");
    for (int i = 0; i < n; ++i) {
        if (!(r_upper(i, i) > 0.0)) {
            throw std::invalid_argument("detector: R diagonal must be strictly positive");
        }
        for (int j = 0; j < i; ++j) {
            if (r_upper(i, j) != 0.0) {
                throw std::invalid_argument("detector: R must be upper triangular");
            }
        }
    }
    return n;
}

// Interference of the already-decided rows on the given row.
inline double interference(const std::vector<int>& idx, int row, const Eigen::MatrixXd& r_upper,
                           const PamAlphabet& alphabet) {
    const int n = static_cast<int>(r_upper.rows());
    double acc = 0.0;
    for (int j = row + 1; j < n; ++j) {
        acc += r_upper(row, j) * alphabet.levels[static_cast<std::size_t>(idx[static_cast<std::size_t>(j)])];
    }
    return acc;
}

struct Candidate {
    double metric;
    int child;   // alphabet index
    int parent;  // position in the parent list
};

// Ordering used by every beam sort: metric, then child index, then parent
// order. Fully deterministic so different detectors agree on ties.
inline bool candidate_less(const Candidate& a, const Candidate& b) {
    if (a.metric != b.metric) return a.metric < b.metric;
    if (a.child != b.child) return a.child < b.child;
    return a.parent < b.parent;
}

// Extend every parent to all q children of the given row, charging one node
// per child term.
inline void extend_all(const std::vector<Branch>& parents, int row, const Eigen::MatrixXd& r_upper,
                       const Eigen::VectorXd& y, const PamAlphabet& alphabet,
                       std::vector<Candidate>& out, std::uint64_t& nodes) {
    out.clear();
    for (int p = 0; p < static_cast<int>(parents.size()); ++p) {
        const Branch& br = parents[static_cast<std::size_t>(p)];
        const double base = y(row) - interference(br.idx, row, r_upper, alphabet);
        for (int k = 0; k < alphabet.q; ++k) {
            const double resid = base - r_upper(row, row) * alphabet.levels[static_cast<std::size_t>(k)];
            out.push_back({br.metric + resid * resid, k, p});
            ++nodes;
        }
    }
}

inline std::uint64_t saturating_mul(std::uint64_t a, std::uint64_t b) {
    if (a != 0 && b > std::numeric_limits<std::uint64_t>::max() / a) {
        return std::numeric_limits<std::uint64_t>::max();
    }
    return a * b;
}

inline std::uint64_t saturating_add(std::uint64_t a, std::uint64_t b) {
    if (b > std::numeric_limits<std::uint64_t>::max() - a) {
        return std::numeric_limits<std::uint64_t>::max();
    }
    return a + b;
}

}  // namespace detail

/// One-stage extension of the accumulative metric: the returned value is
/// branch.metric plus the squared residual of `candidate` at `row`, and the
/// caller's node counter is charged one node. The branch must have decided
/// exactly the rows already detected (rows > row); undecided rows stay -1.
inline double branch_metric(const Branch& branch, int row, int candidate,
                            const Eigen::MatrixXd& r_upper, const Eigen::VectorXd& y,
                            const PamAlphabet& alphabet, std::uint64_t& node_counter) {
    const int n = static_cast<int>(r_upper.rows());
    if (row < 0 || row >= n) throw std::invalid_argument("branch_metric: row out of range");
    if (candidate < 0 || candidate >= alphabet.q) {
        throw std::invalid_argument("branch_metric: candidate index out of range");
    }
    const double base = y(row) - detail::interference(branch.idx, row, r_upper, alphabet);
    const double resid = base - r_upper(row, row) * alphabet.levels[static_cast<std::size_t>(candidate)];
    ++node_counter;
    return branch.metric + resid * resid;
}

/// Babai point by successive interference cancellation: slice each row's
/// zero-forcing center from the last row upward. Visits exactly n_s nodes;
/// the returned metric is the full accumulative metric (BabaiDist).
inline DetectionResult babai_point(const Eigen::MatrixXd& r_upper, const Eigen::VectorXd& y,
                                   const PamAlphabet& alphabet) {
    const int n = detail::validate_reduced_system(r_upper, y, alphabet);
    std::vector<int> idx(static_cast<std::size_t>(n), -1);
    double metric = 0.0;
    std::uint64_t nodes = 0;
    for (int row = n - 1; row >= 0; --row) {
        const double base = y(row) - detail::interference(idx, row, r_upper, alphabet);
        const int k = slice(base / r_upper(row, row), alphabet);
        idx[static_cast<std::size_t>(row)] = k;
        const double resid = base - r_upper(row, row) * alphabet.levels[static_cast<std::size_t>(k)];
        metric += resid * resid;
        ++nodes;
    }
    return {make_symbol_vector(std::move(idx), alphabet), metric, nodes, false};
}

/// Depth-first Schnorr-Euchner sphere decoding. With the default infinite
/// initial radius this returns the exact constrained minimizer of
/// ||R x - y||^2 (the first leaf reached is the Babai point, after which the
/// radius shrinks to every new best leaf). With a finite radius the search
/// can end with no lattice point inside the sphere, reported as nullopt.
inline std::optional<DetectionResult> sphere_decode(
    const Eigen::MatrixXd& r_upper, const Eigen::VectorXd& y, const PamAlphabet& alphabet,
    double initial_radius_sq = std::numeric_limits<double>::infinity()) {
    const int n = detail::validate_reduced_system(r_upper, y, alphabet);
    if (!(initial_radius_sq > 0.0)) {
        throw std::invalid_argument("sphere_decode: initial squared radius must be positive");
    }
    const int q = alphabet.q;
    double radius = initial_radius_sq;
    std::uint64_t nodes = 0;

    // Per-row search state. accum/base describe the fixed prefix above a row;
    // order/next enumerate its children in SE order.
    std::vector<std::vector<int>> order(static_cast<std::size_t>(n),
                                        std::vector<int>(static_cast<std::size_t>(q)));
    std::vector<int> next(static_cast<std::size_t>(n), 0);
    std::vector<double> accum(static_cast<std::size_t>(n), 0.0);
    std::vector<double> base(static_cast<std::size_t>(n), 0.0);
    std::vector<int> chosen(static_cast<std::size_t>(n), -1);

    std::vector<int> best_idx;
    double best_metric = 0.0;
    bool found = false;

    const auto enter_row = [&](int row, double prefix_metric) {
        const auto r = static_cast<std::size_t>(row);
        base[r] = y(row) - detail::interference(chosen, row, r_upper, alphabet);
        accum[r] = prefix_metric;
        se_children(base[r] / r_upper(row, row), alphabet, order[r]);
        next[r] = 0;
    };

    int row = n - 1;
    enter_row(row, 0.0);
    while (row < n) {
        auto r = static_cast<std::size_t>(row);
        if (next[r] == q) {  // level exhausted, back up
            ++row;
            continue;
        }
        const int k = order[r][static_cast<std::size_t>(next[r]++)];
        const double resid = base[r] - r_upper(row, row) * alphabet.levels[static_cast<std::size_t>(k)];
        const double m = accum[r] + resid * resid;
        ++nodes;
        if (m > radius) {
            // SE order is nondecreasing in the stage term: every remaining
            // sibling lands outside the sphere too.
            next[r] = q;
            continue;
        }
        if (row == 0) {
            if (!found || m < best_metric) {
                found = true;
                best_metric = m;
                chosen[0] = k;
                best_idx = chosen;
                radius = m;
            }
            continue;
        }
        chosen[r] = k;
        --row;
        enter_row(row, m);
    }
    if (!found) return std::nullopt;
    return DetectionResult{make_symbol_vector(std::move(best_idx), alphabet), best_metric, nodes,
                           false};
}

/// Conventional QRD-M: breadth-first beam search that extends every retained
/// branch to all q children, sorts by accumulative metric, and keeps the best
/// min(M_i, available) branches per stage. Complexity is data-independent.
inline DetectionResult qrd_m(const Eigen::MatrixXd& r_upper, const Eigen::VectorXd& y,
                             const PamAlphabet& alphabet, const MSchedule& schedule,
                             BeamTrace* trace = nullptr) {
    const int n = detail::validate_reduced_system(r_upper, y, alphabet);
    if (schedule.size() != n) {
        throw std::invalid_argument("qrd_m: schedule length must equal the real dimension");
    }
    std::uint64_t nodes = 0;
    std::vector<Branch> parents{Branch{std::vector<int>(static_cast<std::size_t>(n), -1), 0.0}};
    std::vector<Branch> survivors;
    std::vector<detail::Candidate> cand;
    for (int s = 0; s < n; ++s) {
        const int row = n - 1 - s;
        detail::extend_all(parents, row, r_upper, y, alphabet, cand, nodes);
        std::sort(cand.begin(), cand.end(), detail::candidate_less);
        const auto keep = std::min<std::size_t>(
            static_cast<std::size_t>(schedule.limits[static_cast<std::size_t>(s)]), cand.size());
        survivors.clear();
        survivors.reserve(keep);
        for (std::size_t t = 0; t < keep; ++t) {
            Branch b = parents[static_cast<std::size_t>(cand[t].parent)];
            b.idx[static_cast<std::size_t>(row)] = cand[t].child;
            b.metric = cand[t].metric;
            survivors.push_back(std::move(b));
        }
        parents.swap(survivors);
        if (trace) trace->stages.push_back(parents);
    }
    const Branch& best = parents.front();  // survivors stay metric-sorted
    return {make_symbol_vector(best.idx, alphabet), best.metric, nodes, false};
}

enum class UlbcMode {
    Paper,   // first-stage early exit when a single branch survives
    Strict,  // no early exit; survivor sets match QRD-M's filtered by BabaiDist
};

/// Upper-lower bounded-complexity QRD-M: runs the QRD-M beam but first
/// computes the Babai point and, after each stage's selection, cancels every
/// survivor whose accumulative metric strictly exceeds BabaiDist (exact ties
/// survive, which keeps the Babai path itself alive). The visited-node count
/// is bounded by complexity_bounds() on every input.
inline DetectionResult ulbc_qrd_m(const Eigen::MatrixXd& r_upper, const Eigen::VectorXd& y,
                                  const PamAlphabet& alphabet, const MSchedule& schedule,
                                  UlbcMode mode = UlbcMode::Paper, BeamTrace* trace = nullptr) {
    const int n = detail::validate_reduced_system(r_upper, y, alphabet);
    if (schedule.size() != n) {
        throw std::invalid_argument("ulbc_qrd_m: schedule length must equal the real dimension");
    }
    DetectionResult babai = babai_point(r_upper, y, alphabet);
    const double babai_dist = babai.metric;
    std::uint64_t nodes = babai.nodes_visited;

    std::vector<Branch> parents{Branch{std::vector<int>(static_cast<std::size_t>(n), -1), 0.0}};
    std::vector<Branch> survivors;
    std::vector<detail::Candidate> cand;
    for (int s = 0; s < n; ++s) {
        const int row = n - 1 - s;
        detail::extend_all(parents, row, r_upper, y, alphabet, cand, nodes);
        std::sort(cand.begin(), cand.end(), detail::candidate_less);
        const auto keep = std::min<std::size_t>(
            static_cast<std::size_t>(schedule.limits[static_cast<std::size_t>(s)]), cand.size());
        survivors.clear();
        for (std::size_t t = 0; t < keep; ++t) {
            if (cand[t].metric > babai_dist) break;  // sorted: the rest exceed too
            Branch b = parents[static_cast<std::size_t>(cand[t].parent)];
            b.idx[static_cast<std::size_t>(row)] = cand[t].child;
            b.metric = cand[t].metric;
            survivors.push_back(std::move(b));
        }
        parents.swap(survivors);
        if (trace) trace->stages.push_back(parents);
        if (parents.empty()) {
            // Every retained branch was worse than the Babai point; by metric
            // monotonicity none could have completed to a better leaf.
            babai.nodes_visited = nodes;
            babai.terminated_early = true;
            return babai;
        }
        if (mode == UlbcMode::Paper && s == 0 && parents.size() == 1) {
            babai.nodes_visited = nodes;
            babai.terminated_early = true;
            return babai;
        }
    }
    const Branch& best = parents.front();
    if (best.metric < babai_dist) {
        return {make_symbol_vector(best.idx, alphabet), best.metric, nodes, false};
    }
    babai.nodes_visited = nodes;  // tie -> Babai point
    return babai;
}

/// Total node count of unpruned tree enumeration, sum over depths of q^d.
inline std::uint64_t full_enumeration_count(int n_s, const PamAlphabet& alphabet) {
    std::uint64_t total = 0;
    std::uint64_t layer = 1;
    for (int d = 0; d < n_s; ++d) {
        layer = detail::saturating_mul(layer, static_cast<std::uint64_t>(alphabet.q));
        total = detail::saturating_add(total, layer);
    }
    return total;
}

/// Exhaustive ML search over all q^{n_s} candidate vectors, used as the
/// correctness oracle for the tree detectors. Ties in the minimum resolve to
/// the lexicographically smallest index vector. Refuses problems whose
/// candidate count exceeds the cap.
inline DetectionResult ml_bruteforce(const Eigen::MatrixXd& r_upper, const Eigen::VectorXd& y,
                                     const PamAlphabet& alphabet,
                                     std::uint64_t enumeration_cap = 10'000'000) {
    const int n = detail::validate_reduced_system(r_upper, y, alphabet);
    std::uint64_t leaves = 1;
    for (int d = 0; d < n; ++d) {
        leaves = detail::saturating_mul(leaves, static_cast<std::uint64_t>(alphabet.q));
    }
    if (leaves > enumeration_cap) {
        throw std::invalid_argument("ml_bruteforce: q^n_s = " + std::to_string(leaves) +
                                    " exceeds enumeration cap " + std::to_string(enumeration_cap));
    }
    std::uint64_t nodes = 0;
    double best = std::numeric_limits<double>::infinity();
    std::vector<int> best_idx;
    std::vector<int> cur(static_cast<std::size_t>(n), -1);
    const auto walk = [&](const auto& self, int row, double prefix) -> void {
        const double base = y(row) - detail::interference(cur, row, r_upper, alphabet);
        for (int k = 0; k < alphabet.q; ++k) {
            const double resid = base - r_upper(row, row) * alphabet.levels[static_cast<std::size_t>(k)];
            const double m = prefix + resid * resid;
            ++nodes;
            cur[static_cast<std::size_t>(row)] = k;
            if (row == 0) {
                if (m < best || (m == best && std::lexicographical_compare(
                                                  cur.begin(), cur.end(), best_idx.begin(),
                                                  best_idx.end()))) {
                    best = m;
                    best_idx = cur;
                }
            } else {
                self(self, row - 1, m);
            }
        }
        cur[static_cast<std::size_t>(row)] = -1;
    };
    walk(walk, n - 1, 0.0);
    return {make_symbol_vector(std::move(best_idx), alphabet), best, nodes, false};
}

struct ComplexityBounds {
    std::uint64_t f_lb = 0;    // best-case ULBC QRD-M nodes: n_s + q
    std::uint64_t f_qrdm = 0;  // fixed QRD-M node count for the schedule
    std::uint64_t f_ub = 0;    // worst-case ULBC QRD-M nodes: f_qrdm + n_s
};

inline ComplexityBounds complexity_bounds(const MSchedule& schedule, int n_s,
                                          const PamAlphabet& alphabet) {
    if (schedule.size() != n_s) {
        throw std::invalid_argument("complexity_bounds: schedule length must equal n_s");
    }
    const auto q = static_cast<std::uint64_t>(alphabet.q);
    std::uint64_t parents = 1;
    std::uint64_t f_qrdm = 0;
    for (int s = 0; s < n_s; ++s) {
        const std::uint64_t children = detail::saturating_mul(parents, q);
        f_qrdm = detail::saturating_add(f_qrdm, children);
        parents = std::min<std::uint64_t>(
            static_cast<std::uint64_t>(schedule.limits[static_cast<std::size_t>(s)]), children);
    }
    const auto ns = static_cast<std::uint64_t>(n_s);
    return {ns + q, f_qrdm, detail::saturating_add(f_qrdm, ns)};
}

}  // namespace latdet
