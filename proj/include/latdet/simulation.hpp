#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <atomic>
#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <mutex>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "latdet/constellation.hpp"
#include "latdet/detectors.hpp"
#include "latdet/lattice.hpp"

namespace latdet {

enum class Detector : int {
    Babai = 0,
    Ml = 1,
    QrdM = 2,
    Sd = 3,
    UlbcPaper = 4,
    UlbcStrict = 5,
};

inline constexpr int kDetectorCount = 6;

inline constexpr std::array<Detector, kDetectorCount> kAllDetectors = {
    Detector::Babai, Detector::Ml,        Detector::QrdM,
    Detector::Sd,    Detector::UlbcPaper, Detector::UlbcStrict,
};

inline std::string detector_name(Detector d) {
    switch (d) {
        case Detector::Babai: return "babai";
        case Detector::Ml: return "ml";
        case Detector::QrdM: return "qrdm";
        case Detector::Sd: return "sd";
        case Detector::UlbcPaper: return "ulbc_paper";
        case Detector::UlbcStrict: return "ulbc_strict";
    }
    throw std::invalid_argument("detector_name: unknown detector");
}

inline Detector detector_from_name(const std::string& name) {
    for (Detector d : kAllDetectors) {
        if (detector_name(d) == name) return d;
    }
    throw std::invalid_argument("unknown detector '" + name +
                                "' (expected one of babai, ml, qrdm, sd, ulbc_paper, ulbc_strict)");
}

enum class Ordering {
    PlainQr,
    SortedQr,
};

inline std::string ordering_name(Ordering o) {
    return o == Ordering::PlainQr ? "plain" : "sorted";
}

inline Ordering ordering_from_name(const std::string& name) {
    if (name == "plain") return Ordering::PlainQr;
    if (name == "sorted") return Ordering::SortedQr;
    throw std::invalid_argument("unknown ordering '" + name + "' (expected plain or sorted)");
}

/// Full description of one Monte Carlo experiment.
struct SimConfig {
    int n_tx = 4;
    int n_rx = 4;
    int constellation_size = 16;
    std::vector<int> schedule;  // per-stage limits, empty -> default_schedule
    std::vector<double> snr_grid = {0.0, 4.0, 8.0, 12.0, 16.0, 20.0, 24.0};
    std::uint64_t trials_per_snr = 10000;
    std::uint64_t master_seed = 1;
    std::vector<Detector> detectors = {Detector::Babai, Detector::Sd, Detector::QrdM,
                                       Detector::UlbcPaper, Detector::UlbcStrict};
    Ordering ordering = Ordering::SortedQr;
    std::uint64_t ml_enumeration_cap = 10'000'000;

    int n_s() const { return 2 * n_tx; }

    bool enabled(Detector d) const {
        return std::find(detectors.begin(), detectors.end(), d) != detectors.end();
    }

    void validate() const {
        if (n_tx < 1) throw std::invalid_argument("config: n_tx must be >= 1");
        if (n_rx < n_tx) throw std::invalid_argument("config: n_rx must be >= n_tx");
        make_alphabet(constellation_size);  // throws naming constellation_size constraints
        if (!schedule.empty()) {
            if (static_cast<int>(schedule.size()) != n_s()) {
                throw std::invalid_argument("config: schedule must list exactly 2*n_tx limits, got " +
                                            std::to_string(schedule.size()));
            }
            for (int m : schedule) {
                if (m < 1) throw std::invalid_argument("config: schedule limits must be >= 1");
            }
        }
        if (snr_grid.empty()) throw std::invalid_argument("config: snr_grid must not be empty");
        for (double s : snr_grid) {
            if (std::isnan(s)) throw std::invalid_argument("config: snr_grid must not contain nan");
        }
        if (trials_per_snr < 1) throw std::invalid_argument("config: trials_per_snr must be >= 1");
        if (detectors.empty()) throw std::invalid_argument("config: detector_set must not be empty");
        if (enabled(Detector::Ml)) {
            std::uint64_t leaves = 1;
            const auto q = static_cast<std::uint64_t>(make_alphabet(constellation_size).q);
            for (int d = 0; d < n_s(); ++d) leaves = detail::saturating_mul(leaves, q);
            if (leaves > ml_enumeration_cap) {
                throw std::invalid_argument(
                    "config: ml detector needs q^(2*n_tx) = " + std::to_string(leaves) +
                    " <= enumeration cap " + std::to_string(ml_enumeration_cap));
            }
        }
    }

    MSchedule make_schedule(const PamAlphabet& alphabet) const {
        if (schedule.empty()) return default_schedule(n_s(), alphabet);
        return MSchedule(schedule);
    }
};

/// Every trial draws from its own generator seeded by (master seed, SNR, trial
/// index), so results do not depend on how trials are split across threads.
inline std::mt19937_64 make_trial_rng(std::uint64_t master_seed, double snr_db,
                                      std::uint64_t trial) {
    const auto snr_bits = std::bit_cast<std::uint64_t>(snr_db);
    std::seed_seq seq{
        static_cast<std::uint32_t>(master_seed), static_cast<std::uint32_t>(master_seed >> 32),
        static_cast<std::uint32_t>(snr_bits),    static_cast<std::uint32_t>(snr_bits >> 32),
        static_cast<std::uint32_t>(trial),       static_cast<std::uint32_t>(trial >> 32),
    };
    return std::mt19937_64(seq);
}

/// Rayleigh-fading channel: i.i.d. CN(0,1) entries, i.e. independent real and
/// imaginary parts with variance 1/2 each.
inline ComplexChannel gen_channel(int n_rx, int n_tx, std::mt19937_64& rng) {
    std::normal_distribution<double> gauss(0.0, std::sqrt(0.5));
    Eigen::MatrixXcd h(n_rx, n_tx);
    for (int i = 0; i < n_rx; ++i) {
        for (int j = 0; j < n_tx; ++j) {
            const double re = gauss(rng);
            const double im = gauss(rng);
            h(i, j) = std::complex<double>(re, im);
        }
    }
    return ComplexChannel(std::move(h));
}

/// Adds circular complex Gaussian noise at the given per-receive-antenna SNR.
/// Transmit symbols have unit average energy, so the signal power per receive
/// antenna is n_tx and the complex noise variance is n_tx * 10^(-snr/10).
/// snr_db = +infinity returns the clean vector unchanged.
inline Eigen::VectorXcd add_noise(const Eigen::VectorXcd& clean, double snr_db, int n_tx,
                                  std::mt19937_64& rng) {
    if (std::isinf(snr_db) && snr_db > 0.0) return clean;
    if (std::isnan(snr_db)) throw std::invalid_argument("add_noise: snr_db must not be nan");
    const double sigma_sq = static_cast<double>(n_tx) * std::pow(10.0, -snr_db / 10.0);
    const double comp_sigma = std::sqrt(sigma_sq / 2.0);
    std::normal_distribution<double> gauss(0.0, comp_sigma);
    Eigen::VectorXcd out(clean.size());
    for (Eigen::Index i = 0; i < clean.size(); ++i) {
        const double re = gauss(rng);
        const double im = gauss(rng);
        out(i) = clean(i) + std::complex<double>(re, im);
    }
    return out;
}

/// One detector's answer on a trial, mapped back to the original (unpermuted)
/// dimension order and scored against the transmitted vector.
struct TrialOutcome {
    DetectionResult result;
    bool vector_error = false;
    int symbol_errors = 0;  // complex symbols (real/imag index pairs) in error
};

struct TrialResult {
    SymbolVector transmitted;
    double babai_dist = 0.0;  // accumulative metric of the Babai point
    int channel_redraws = 0;
    std::array<std::optional<TrialOutcome>, kDetectorCount> outcomes;
    QRFactorization factors;  // of the channel actually used
    Eigen::VectorXd y;        // reduced received vector Q^T r

    const std::optional<TrialOutcome>& outcome(Detector d) const {
        return outcomes[static_cast<std::size_t>(d)];
    }
};

namespace detail {

inline TrialOutcome score_outcome(DetectionResult result, const std::vector<int>& perm,
                                  const PamAlphabet& alphabet, const SymbolVector& transmitted,
                                  int n_tx) {
    TrialOutcome out;
    out.result.solution = unpermute(perm, result.solution, alphabet);
    out.result.metric = result.metric;
    out.result.nodes_visited = result.nodes_visited;
    out.result.terminated_early = result.terminated_early;
    out.vector_error = !(out.result.solution == transmitted);
    for (int j = 0; j < n_tx; ++j) {
        const auto re = static_cast<std::size_t>(j);
        const auto im = static_cast<std::size_t>(j + n_tx);
        if (out.result.solution.indices[re] != transmitted.indices[re] ||
            out.result.solution.indices[im] != transmitted.indices[im]) {
            ++out.symbol_errors;
        }
    }
    return out;
}

}  // namespace detail

/// Runs one Monte Carlo trial: draw symbols, channel, and noise, reduce to
/// the upper-triangular model, and run every enabled detector on it. All
/// detectors share the single QR decomposition. Singular channel draws are
/// redrawn (counted in channel_redraws).
inline TrialResult run_trial(const SimConfig& config, const PamAlphabet& alphabet,
                             const MSchedule& schedule, double snr_db, std::uint64_t trial) {
    auto rng = make_trial_rng(config.master_seed, snr_db, trial);
    TrialResult tr;
    tr.transmitted = random_symbol_vector(config.n_s(), alphabet, rng);

    Eigen::VectorXcd s_complex(config.n_tx);
    for (int j = 0; j < config.n_tx; ++j) {
        s_complex(j) = std::complex<double>(tr.transmitted.values[static_cast<std::size_t>(j)],
                                            tr.transmitted.values[static_cast<std::size_t>(j + config.n_tx)]);
    }

    RealSystem sys;
    for (;;) {
        ComplexChannel channel = gen_channel(config.n_rx, config.n_tx, rng);
        const Eigen::VectorXcd clean = channel.entries * s_complex;
        const Eigen::VectorXcd received = add_noise(clean, snr_db, config.n_tx, rng);
        sys = complex_to_real_system(channel, received);
        try {
            tr.factors = config.ordering == Ordering::SortedQr ? sorted_qr_decompose(sys)
                                                               : qr_decompose(sys);
        } catch (const SingularChannelError&) {
            if (++tr.channel_redraws > 100) throw;
            continue;
        }
        break;
    }
    tr.y = apply_qt(tr.factors, sys.r_real);

    const auto score = [&](DetectionResult r) {
        return detail::score_outcome(std::move(r), tr.factors.perm, alphabet, tr.transmitted,
                                     config.n_tx);
    };

    const DetectionResult babai = babai_point(tr.factors.r_upper, tr.y, alphabet);
    tr.babai_dist = babai.metric;
    if (config.enabled(Detector::Babai)) {
        tr.outcomes[static_cast<std::size_t>(Detector::Babai)] = score(babai);
    }
    if (config.enabled(Detector::Ml)) {
        tr.outcomes[static_cast<std::size_t>(Detector::Ml)] =
            score(ml_bruteforce(tr.factors.r_upper, tr.y, alphabet, config.ml_enumeration_cap));
    }
    if (config.enabled(Detector::QrdM)) {
        tr.outcomes[static_cast<std::size_t>(Detector::QrdM)] =
            score(qrd_m(tr.factors.r_upper, tr.y, alphabet, schedule));
    }
    if (config.enabled(Detector::Sd)) {
        tr.outcomes[static_cast<std::size_t>(Detector::Sd)] =
            score(*sphere_decode(tr.factors.r_upper, tr.y, alphabet));
    }
    if (config.enabled(Detector::UlbcPaper)) {
        tr.outcomes[static_cast<std::size_t>(Detector::UlbcPaper)] =
            score(ulbc_qrd_m(tr.factors.r_upper, tr.y, alphabet, schedule, UlbcMode::Paper));
    }
    if (config.enabled(Detector::UlbcStrict)) {
        tr.outcomes[static_cast<std::size_t>(Detector::UlbcStrict)] =
            score(ulbc_qrd_m(tr.factors.r_upper, tr.y, alphabet, schedule, UlbcMode::Strict));
    }
    return tr;
}

/// Fixed-width histogram over a closed integer range of node counts.
struct NodeHistogram {
    static constexpr int kBins = 16;
    std::uint64_t lo = 0;
    std::uint64_t hi = 0;
    std::array<std::uint64_t, kBins> counts{};

    void configure(std::uint64_t lo_, std::uint64_t hi_) {
        lo = lo_;
        hi = hi_ < lo_ ? lo_ : hi_;
        counts.fill(0);
    }

    void add(std::uint64_t value) {
        const std::uint64_t v = std::clamp(value, lo, hi);
        const std::uint64_t span = hi - lo + 1;
        const int bin = static_cast<int>(((v - lo) * kBins) / span);
        ++counts[static_cast<std::size_t>(std::min(bin, kBins - 1))];
    }

    void merge(const NodeHistogram& other) {
        for (int b = 0; b < kBins; ++b) counts[static_cast<std::size_t>(b)] += other.counts[static_cast<std::size_t>(b)];
    }
};

/// Aggregates for one detector at one SNR point. Everything is integral so
/// that merging worker results is exact regardless of thread count.
struct DetectorStats {
    std::uint64_t trials = 0;
    std::uint64_t vector_errors = 0;
    std::uint64_t symbol_errors = 0;
    std::uint64_t nodes_sum = 0;
    std::uint64_t nodes_min = std::numeric_limits<std::uint64_t>::max();
    std::uint64_t nodes_max = 0;
    std::uint64_t early_terminations = 0;
    std::uint64_t equals_qrdm = 0;  // trials whose solution matches qrd_m's
    NodeHistogram histogram;

    void add(const TrialOutcome& out, bool same_as_qrdm) {
        ++trials;
        if (out.vector_error) ++vector_errors;
        symbol_errors += static_cast<std::uint64_t>(out.symbol_errors);
        nodes_sum += out.result.nodes_visited;
        nodes_min = std::min(nodes_min, out.result.nodes_visited);
        nodes_max = std::max(nodes_max, out.result.nodes_visited);
        if (out.result.terminated_early) ++early_terminations;
        if (same_as_qrdm) ++equals_qrdm;
        histogram.add(out.result.nodes_visited);
    }

    void merge(const DetectorStats& other) {
        trials += other.trials;
        vector_errors += other.vector_errors;
        symbol_errors += other.symbol_errors;
        nodes_sum += other.nodes_sum;
        nodes_min = std::min(nodes_min, other.nodes_min);
        nodes_max = std::max(nodes_max, other.nodes_max);
        early_terminations += other.early_terminations;
        equals_qrdm += other.equals_qrdm;
        histogram.merge(other.histogram);
    }

    double vector_error_rate() const {
        return trials == 0 ? 0.0 : static_cast<double>(vector_errors) / static_cast<double>(trials);
    }

    double nodes_mean() const {
        return trials == 0 ? 0.0 : static_cast<double>(nodes_sum) / static_cast<double>(trials);
    }
};

struct SnrStats {
    double snr_db = 0.0;
    std::uint64_t channel_redraws = 0;
    std::array<DetectorStats, kDetectorCount> per_detector{};

    DetectorStats& stats(Detector d) { return per_detector[static_cast<std::size_t>(d)]; }
    const DetectorStats& stats(Detector d) const {
        return per_detector[static_cast<std::size_t>(d)];
    }

    void merge(const SnrStats& other) {
        channel_redraws += other.channel_redraws;
        for (int d = 0; d < kDetectorCount; ++d) {
            per_detector[static_cast<std::size_t>(d)].merge(other.per_detector[static_cast<std::size_t>(d)]);
        }
    }
};

struct ExperimentStats {
    SimConfig config;
    ComplexityBounds bounds;
    std::uint64_t full_enumeration = 0;  // unpruned tree size, the SD worst case
    std::vector<SnrStats> per_snr;       // one entry per snr_grid point, in order
};

namespace detail {

inline void configure_histograms(SnrStats& s, const SimConfig& config,
                                 const ComplexityBounds& bounds, std::uint64_t full_enum) {
    const auto ns = static_cast<std::uint64_t>(config.n_s());
    s.stats(Detector::Babai).histogram.configure(ns, ns);
    s.stats(Detector::Ml).histogram.configure(full_enum, full_enum);
    s.stats(Detector::QrdM).histogram.configure(bounds.f_qrdm, bounds.f_qrdm);
    s.stats(Detector::Sd).histogram.configure(ns, full_enum);
    s.stats(Detector::UlbcPaper).histogram.configure(bounds.f_lb, bounds.f_ub);
    s.stats(Detector::UlbcStrict).histogram.configure(bounds.f_lb, bounds.f_ub);
}

inline void accumulate_trial(SnrStats& s, const SimConfig& config, const TrialResult& tr) {
    s.channel_redraws += static_cast<std::uint64_t>(tr.channel_redraws);
    const auto& qrdm_out = tr.outcome(Detector::QrdM);
    for (Detector d : config.detectors) {
        const auto& out = tr.outcome(d);
        const bool same = qrdm_out.has_value() && out.has_value() &&
                          out->result.solution == qrdm_out->result.solution;
        s.stats(d).add(*out, same);
    }
}

}  // namespace detail

/// Runs the full experiment. Trials are independent and deterministically
/// seeded, so the aggregate is bit-identical for every n_threads value.
inline ExperimentStats run_experiment(const SimConfig& config, int n_threads = 1) {
    config.validate();
    if (n_threads < 1) throw std::invalid_argument("run_experiment: n_threads must be >= 1");
    const PamAlphabet alphabet = make_alphabet(config.constellation_size);
    const MSchedule schedule = config.make_schedule(alphabet);

    ExperimentStats stats;
    stats.config = config;
    stats.bounds = complexity_bounds(schedule, config.n_s(), alphabet);
    stats.full_enumeration = full_enumeration_count(config.n_s(), alphabet);

    for (double snr_db : config.snr_grid) {
        SnrStats total;
        total.snr_db = snr_db;
        detail::configure_histograms(total, config, stats.bounds, stats.full_enumeration);

        const std::uint64_t trials = config.trials_per_snr;
        const int workers = static_cast<int>(
            std::min<std::uint64_t>(static_cast<std::uint64_t>(n_threads), trials));
        std::vector<SnrStats> partial(static_cast<std::size_t>(workers));
        for (auto& p : partial) {
            p.snr_db = snr_db;
            detail::configure_histograms(p, config, stats.bounds, stats.full_enumeration);
        }

        std::atomic<std::uint64_t> next_trial{0};
        std::exception_ptr first_error;
        std::mutex error_mutex;
        const auto worker = [&](int w) {
            try {
                for (;;) {
                    const std::uint64_t t = next_trial.fetch_add(1);
                    if (t >= trials) return;
                    const TrialResult tr = run_trial(config, alphabet, schedule, snr_db, t);
                    detail::accumulate_trial(partial[static_cast<std::size_t>(w)], config, tr);
                }
            } catch (...) {
                const std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        };

        if (workers == 1) {
            worker(0);
        } else {
            std::vector<std::thread> pool;
            pool.reserve(static_cast<std::size_t>(workers));
            for (int w = 0; w < workers; ++w) pool.emplace_back(worker, w);
            for (auto& th : pool) th.join();
        }
        if (first_error) std::rethrow_exception(first_error);

        for (const auto& p : partial) total.merge(p);
        stats.per_snr.push_back(std::move(total));
    }
    return stats;
}

}  // namespace latdet
