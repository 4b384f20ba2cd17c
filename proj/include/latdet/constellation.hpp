#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace latdet {

/// Per-dimension real PAM alphabet underlying a square QAM constellation.
///
/// Levels are the odd-integer grid {-(q-1), ..., -1, +1, ..., +(q-1)} scaled
/// so that a complex symbol built from two independent components has unit
/// average energy: 2 * E[level^2] = 1.
struct PamAlphabet {
    std::vector<double> levels;  // ascending, size q
    int q = 0;                   // per-dimension alphabet size
    int constellation_size = 0;  // C = q^2
    double scale = 0.0;          // grid spacing is 2 * scale
};

inline PamAlphabet make_alphabet(int constellation_size) {
    const bool power_of_two =
        constellation_size > 0 &&
        (static_cast<unsigned>(constellation_size) &
         static_cast<unsigned>(constellation_size - 1)) == 0;
    const int q = static_cast<int>(std::lround(std::sqrt(static_cast<double>(constellation_size))));
    if (constellation_size < 4 || !power_of_two || q * q != constellation_size) {
        throw std::invalid_argument(
            "make_alphabet: constellation size must be an even power of two (4, 16, 64, ...), got " +
            std::to_string(constellation_size));
    }
    PamAlphabet a;
    a.q = q;
    a.constellation_size = constellation_size;
    // E[level^2] over the uniform odd grid is (C - 1) / 3 before scaling.
    a.scale = std::sqrt(3.0 / (2.0 * (constellation_size - 1)));
    a.levels.resize(static_cast<std::size_t>(q));
    for (int k = 0; k < q; ++k) {
        a.levels[static_cast<std::size_t>(k)] = static_cast<double>(2 * k - (q - 1)) * a.scale;
    }
    return a;
}

/// Index of the level nearest to value; exact midpoints resolve toward the
/// lower index, out-of-range values saturate at the boundary levels.
inline int slice(double value, const PamAlphabet& a) {
    assert(std::isfinite(value));
    int best = 0;
    double best_dist = std::abs(value - a.levels[0]);
    for (int k = 1; k < a.q; ++k) {
        const double d = std::abs(value - a.levels[static_cast<std::size_t>(k)]);
        if (d < best_dist) {
            best_dist = d;
            best = k;
        }
    }
    return best;
}

/// Writes all q alphabet indices into out ordered by nondecreasing distance
/// from center (Schnorr-Euchner child order). Ties resolve toward the lower
/// index, so out[0] == slice(center).
inline void se_children(double center, const PamAlphabet& a, std::span<int> out) {
    assert(std::isfinite(center));
    assert(out.size() >= static_cast<std::size_t>(a.q));
    for (int k = 0; k < a.q; ++k) out[static_cast<std::size_t>(k)] = k;
    std::stable_sort(out.begin(), out.begin() + a.q, [&](int l, int r) {
        return std::abs(center - a.levels[static_cast<std::size_t>(l)]) <
               std::abs(center - a.levels[static_cast<std::size_t>(r)]);
    });
}

inline std::vector<int> se_children(double center, const PamAlphabet& a) {
    std::vector<int> out(static_cast<std::size_t>(a.q));
    se_children(center, a, out);
    return out;
}

/// Alphabet-constrained real vector: per-dimension indices plus their levels.
struct SymbolVector {
    std::vector<int> indices;
    std::vector<double> values;

    friend bool operator==(const SymbolVector& l, const SymbolVector& r) {
        return l.indices == r.indices;
    }
};

inline SymbolVector make_symbol_vector(std::vector<int> indices, const PamAlphabet& a) {
    SymbolVector s;
    s.values.resize(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] < 0 || indices[i] >= a.q) {
            throw std::invalid_argument("make_symbol_vector: index out of range");
        }
        s.values[i] = a.levels[static_cast<std::size_t>(indices[i])];
    }
    s.indices = std::move(indices);
    return s;
}

/// Uniform i.i.d. draw of n_s alphabet indices from the given stream.
inline SymbolVector random_symbol_vector(int n_s, const PamAlphabet& a, std::mt19937_64& rng) {
    if (n_s < 1) throw std::invalid_argument("random_symbol_vector: dimension must be >= 1");
    std::uniform_int_distribution<int> pick(0, a.q - 1);
    std::vector<int> idx(static_cast<std::size_t>(n_s));
    for (auto& v : idx) v = pick(rng);
    return make_symbol_vector(std::move(idx), a);
}

}  // namespace latdet
