// Independent reference computations used by the unit and acceptance suites.
// Nothing here calls into the library's numeric paths.
#ifndef QUENCHWATCH_TESTS_ORACLES_HPP
#define QUENCHWATCH_TESTS_ORACLES_HPP

#include <cmath>
#include <cstddef>
#include <limits>
#include <set>
#include <vector>

namespace oracle {

struct Moments {
    double mean, min, max, skewness, kurtosis, slope, stderr_slope;
};

/// Long-double moments straight from the definitions; OLS via the raw-sum
/// normal equations rather than centred sums.
inline Moments brute_force_features(const std::vector<double>& v) {
    const auto n = static_cast<long double>(v.size());
    long double sum = 0, lo = v[0], hi = v[0];
    for (double x : v) {
        sum += x;
        lo = std::min<long double>(lo, x);
        hi = std::max<long double>(hi, x);
    }
    const long double mean = sum / n;
    long double m2 = 0, m3 = 0, m4 = 0;
    for (double x : v) {
        const long double d = x - mean;
        m2 += std::pow(d, 2);
        m3 += std::pow(d, 3);
        m4 += std::pow(d, 4);
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;

    long double sx = 0, sy = 0, sxy = 0, sxx = 0;
    for (std::size_t k = 0; k < v.size(); ++k) {
        const long double x = k;
        sx += x;
        sy += v[k];
        sxy += x * v[k];
        sxx += x * x;
    }
    const long double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    const long double intercept = (sy - slope * sx) / n;
    long double ssr = 0;
    for (std::size_t k = 0; k < v.size(); ++k) {
        const long double r = v[k] - (intercept + slope * static_cast<long double>(k));
        ssr += r * r;
    }
    const long double se = v.size() > 2 ? std::sqrt(ssr / (n - 2) / (sxx - sx * sx / n)) : 0.0L;
    return {static_cast<double>(mean),
            static_cast<double>(lo),
            static_cast<double>(hi),
            static_cast<double>(m3 / std::pow(m2, 1.5L)),
            static_cast<double>(m4 / (m2 * m2) - 3.0L),
            static_cast<double>(slope),
            static_cast<double>(se)};
}

/// Plain-array weights for one memory block; w[gate] with gates ordered
/// candidate, input, forget, output; x-weights are cells x inputs row-major.
struct NaiveBlock {
    std::size_t inputs = 0, cells = 0;
    std::vector<double> wx[4], wh[4], b[4];
};

struct NaiveGate {
    double t_l, t_h, a, b;
};

inline double naive_hard_sigmoid(double x, const NaiveGate& g) {
    if (x <= g.t_l)
        return 0.0;
    if (x >= g.t_h)
        return 1.0;
    return g.a * x + g.b;
}

/// One step, transcribed element by element.
inline void naive_step(const NaiveBlock& p, const NaiveGate& gate, const std::vector<double>& x,
                       std::vector<double>& h, std::vector<double>& s) {
    std::vector<double> act[4];
    for (int q = 0; q < 4; ++q) {
        act[q].resize(p.cells);
        for (std::size_t c = 0; c < p.cells; ++c) {
            double z = p.b[q][c];
            for (std::size_t j = 0; j < p.inputs; ++j)
                z += p.wx[q][c * p.inputs + j] * x[j];
            for (std::size_t j = 0; j < p.cells; ++j)
                z += p.wh[q][c * p.cells + j] * h[j];
            act[q][c] = q == 0 ? std::tanh(z) : naive_hard_sigmoid(z, gate);
        }
    }
    for (std::size_t c = 0; c < p.cells; ++c) {
        s[c] = act[0][c] * act[1][c] + s[c] * act[2][c];
        h[c] = std::tanh(s[c]) * act[3][c];
    }
}

/// Single-block sequence with a linear output map wy (outputs x cells) + by.
inline std::vector<std::vector<double>> naive_sequence(const NaiveBlock& p, const NaiveGate& gate,
                                                       const std::vector<double>& wy, const std::vector<double>& by,
                                                       const std::vector<std::vector<double>>& xs) {
    std::vector<double> h(p.cells, 0.0), s(p.cells, 0.0);
    std::vector<std::vector<double>> out;
    const std::size_t outputs = by.size();
    for (const auto& x : xs) {
        naive_step(p, gate, x, h, s);
        std::vector<double> y(outputs);
        for (std::size_t m = 0; m < outputs; ++m) {
            y[m] = by[m];
            for (std::size_t c = 0; c < p.cells; ++c)
                y[m] += wy[m * p.cells + c] * h[c];
        }
        out.push_back(y);
    }
    return out;
}

inline double naive_mse(const std::vector<std::vector<double>>& a, const std::vector<std::vector<double>>& b) {
    double s = 0;
    std::size_t n = 0;
    for (std::size_t t = 0; t < a.size(); ++t)
        for (std::size_t m = 0; m < a[t].size(); ++m, ++n)
            s += (a[t][m] - b[t][m]) * (a[t][m] - b[t][m]);
    return s / static_cast<double>(n);
}

inline double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
    double d = 0;
    for (std::size_t k = 0; k < a.size(); ++k)
        d += (a[k] - b[k]) * (a[k] - b[k]);
    return d;
}

/// Minimum k=2 inertia over every split into two non-empty groups.
inline double exhaustive_two_means(const std::vector<std::vector<double>>& pts) {
    const std::size_t n = pts.size();
    const std::size_t dim = pts[0].size();
    double best = std::numeric_limits<double>::infinity();
    for (unsigned mask = 1; mask + 1 < (1u << n); ++mask) {
        double inertia = 0;
        for (int side = 0; side < 2; ++side) {
            std::vector<double> c(dim, 0.0);
            int count = 0;
            for (std::size_t i = 0; i < n; ++i)
                if (((mask >> i) & 1u) == static_cast<unsigned>(side)) {
                    ++count;
                    for (std::size_t d = 0; d < dim; ++d)
                        c[d] += pts[i][d];
                }
            for (auto& v : c)
                v /= count;
            for (std::size_t i = 0; i < n; ++i)
                if (((mask >> i) & 1u) == static_cast<unsigned>(side))
                    inertia += sq_dist(pts[i], c);
        }
        best = std::min(best, inertia);
    }
    return best;
}

struct Reachability {
    std::vector<bool> core;
    /// component[i] for core points, -1 otherwise.
    std::vector<int> component;
    std::set<std::size_t> noise;
    /// Pairwise eps-adjacency.
    std::vector<std::vector<bool>> adjacent;
};

/// Core points, their density-connected components by transitive closure of
/// the core adjacency relation, and noise = non-core points with no core in reach.
inline Reachability exhaustive_reachability(const std::vector<std::vector<double>>& pts, double eps,
                                            std::size_t min_pts) {
    const std::size_t n = pts.size();
    Reachability r;
    r.adjacent.assign(n, std::vector<bool>(n, false));
    r.core.assign(n, false);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t count = 0;
        for (std::size_t j = 0; j < n; ++j) {
            r.adjacent[i][j] = std::sqrt(sq_dist(pts[i], pts[j])) <= eps;
            count += r.adjacent[i][j];
        }
        r.core[i] = count >= min_pts;
    }
    std::vector<std::vector<bool>> reach(n, std::vector<bool>(n, false));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            reach[i][j] = r.core[i] && r.core[j] && r.adjacent[i][j];
    for (std::size_t k = 0; k < n; ++k)
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                if (reach[i][k] && reach[k][j])
                    reach[i][j] = true;
    r.component.assign(n, -1);
    int next = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!r.core[i] || r.component[i] >= 0)
            continue;
        for (std::size_t j = 0; j < n; ++j)
            if (reach[i][j])
                r.component[j] = next;
        ++next;
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (r.core[i])
            continue;
        bool reached = false;
        for (std::size_t j = 0; j < n; ++j)
            reached = reached || (r.core[j] && r.adjacent[i][j]);
        if (!reached)
            r.noise.insert(i);
    }
    return r;
}

} // namespace oracle

#endif // QUENCHWATCH_TESTS_ORACLES_HPP
