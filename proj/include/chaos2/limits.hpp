#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>

#include "chaos2/calibration.hpp"
#include "chaos2/distance.hpp"
#include "chaos2/error.hpp"
#include "chaos2/io.hpp"
#include "chaos2/linalg.hpp"
#include "chaos2/parallel.hpp"
#include "chaos2/rng.hpp"

namespace chaos2 {

/// How the Gaussians g_{i,j,n} of different components relate.
enum class Correlation { Independent, Shared };

[[nodiscard]] constexpr const char* to_string(Correlation c) noexcept {
    return c == Correlation::Independent ? "independent" : "shared";
}

/// Coefficients of one (component, n) row; `index` holds the original 1-based j.
struct Slice {
    std::vector<double> coeff;
    std::vector<long long> index;

    [[nodiscard]] std::size_t size() const noexcept { return coeff.size(); }
    [[nodiscard]] double at(std::size_t j) const noexcept { return j < coeff.size() ? coeff[j] : 0.0; }
};

/// 1, 2, 5, 10, 20, 50, ... up to and including `horizon`.
[[nodiscard]] inline std::vector<long long> default_checkpoints(long long horizon) {
    std::vector<long long> out;
    for (long long decade = 1; decade <= horizon; decade *= 10)
        for (long long m : {1, 2, 5})
            if (decade * m <= horizon) out.push_back(decade * m);
    if (out.empty() || out.back() != horizon) out.push_back(horizon);
    return out;
}

/// Coefficient array lambda_{i,j,n}: explicit tables per n or a named generator.
class TriangularArray {
public:
    using Tables = std::map<long long, std::vector<std::vector<double>>>;

    static TriangularArray from_tables(int k, Tables tables) {
        if (k < 1) throw Error(ErrorKind::InvalidK, "array needs k >= 1");
        if (tables.empty()) throw Error(ErrorKind::InputParse, "array has no tables");
        TriangularArray a;
        a.k_ = k;
        for (const auto& [n, rows] : tables) {
            if (n < 1) throw Error(ErrorKind::InputParse, "table index n must be >= 1");
            if (static_cast<int>(rows.size()) != k)
                throw Error(ErrorKind::DimensionMismatch, "table n=" + std::to_string(n) + " lists " +
                                                              std::to_string(rows.size()) + " components, expected " +
                                                              std::to_string(k));
            a.checkpoints_.push_back(n);
        }
        a.tables_ = std::move(tables);
        a.horizon_ = a.checkpoints_.back();
        return a;
    }

    /// Generators: "clt" (1/sqrt(2n), j <= n), "mixed" (1/2 then 1/(2 sqrt n),
    /// j = 2..n+1) and "constant" (a fixed list "mu"). Params: k, horizon,
    /// checkpoints, mu, correlation.
    static TriangularArray from_generator(const std::string& name, const Json& params) {
        static const std::set<std::string> kinds{"clt", "mixed", "constant"};
        if (!kinds.count(name)) throw Error(ErrorKind::InputParse, "unknown generator '" + name + "'");
        static const std::set<std::string> keys{"k", "horizon", "checkpoints", "mu", "correlation"};
        if (!params.is_null() && !params.is_object()) throw Error(ErrorKind::InputParse, "generator params must be an object");
        if (params.is_object())
            for (const auto& [key, _] : params.items())
                if (!keys.count(key)) throw Error(ErrorKind::ConfigParse, "unknown generator parameter '" + key + "'");
        auto get = [&](const char* key) { return params.is_object() && params.contains(key) ? params.at(key) : Json(); };

        TriangularArray a;
        a.generator_ = name;
        a.k_ = get("k").is_null() ? 1 : get("k").get<int>();
        if (a.k_ < 1) throw Error(ErrorKind::InvalidK, "generator k must be >= 1");
        a.horizon_ = get("horizon").is_null() ? 10000 : get("horizon").get<long long>();
        if (a.horizon_ < 1) throw Error(ErrorKind::InputParse, "horizon must be >= 1");
        if (name == "constant") {
            const Json mu = get("mu");
            if (!mu.is_array() || mu.empty()) throw Error(ErrorKind::InputParse, "constant generator needs a non-empty \"mu\"");
            if (mu[0].is_array()) {
                if (!get("k").is_null() && static_cast<int>(mu.size()) != a.k_)
                    throw Error(ErrorKind::DimensionMismatch, "\"mu\" lists a different number of components than k");
                a.k_ = static_cast<int>(mu.size());
                for (const auto& row : mu) a.constant_.push_back(row.get<std::vector<double>>());
            } else {
                a.constant_.assign(static_cast<std::size_t>(a.k_), mu.get<std::vector<double>>());
            }
        }
        if (!get("checkpoints").is_null()) {
            a.checkpoints_ = get("checkpoints").get<std::vector<long long>>();
            std::sort(a.checkpoints_.begin(), a.checkpoints_.end());
            a.checkpoints_.erase(std::unique(a.checkpoints_.begin(), a.checkpoints_.end()), a.checkpoints_.end());
            if (a.checkpoints_.empty() || a.checkpoints_.front() < 1 || a.checkpoints_.back() > a.horizon_)
                throw Error(ErrorKind::InputParse, "checkpoints must lie in [1, horizon]");
            if (a.checkpoints_.back() != a.horizon_) a.checkpoints_.push_back(a.horizon_);
        } else {
            a.checkpoints_ = default_checkpoints(a.horizon_);
        }
        a.params_ = params.is_null() ? Json::object() : params;
        if (!get("correlation").is_null()) a.correlation_ = parse_correlation(get("correlation").get<std::string>());
        return a;
    }

    static Correlation parse_correlation(const std::string& s) {
        if (s == "independent") return Correlation::Independent;
        if (s == "shared") return Correlation::Shared;
        throw Error(ErrorKind::InputParse, "correlation must be \"independent\" or \"shared\"");
    }

    static TriangularArray from_json(const Json& j) {
        if (!j.is_object()) throw Error(ErrorKind::InputParse, "array file must be a JSON object");
        TriangularArray a;
        if (j.contains("generator")) {
            a = from_generator(j.at("generator").get<std::string>(), j.value("params", Json::object()));
        } else if (j.contains("tables")) {
            const int k = j.value("k", 1);
            Tables t;
            for (const auto& [key, rows] : j.at("tables").items()) {
                long long n = 0;
                try {
                    std::size_t used = 0;
                    n = std::stoll(key, &used);
                    if (used != key.size()) throw std::invalid_argument(key);
                } catch (const std::exception&) {
                    throw Error(ErrorKind::InputParse, "table key '" + key + "' is not an integer n");
                }
                if (!rows.is_array()) throw Error(ErrorKind::InputParse, "table n=" + key + " must be a list of components");
                std::vector<std::vector<double>> comps;
                for (const auto& r : rows) comps.push_back(r.get<std::vector<double>>());
                t.emplace(n, std::move(comps));
            }
            a = from_tables(k, std::move(t));
            if (j.contains("horizon") && j.at("horizon").get<long long>() != a.horizon_)
                throw Error(ErrorKind::InputParse, "\"horizon\" differs from the largest table index");
        } else {
            throw Error(ErrorKind::InputParse, "array file needs \"tables\" or \"generator\"");
        }
        if (j.contains("correlation")) a.correlation_ = parse_correlation(j.at("correlation").get<std::string>());
        return a;
    }

    [[nodiscard]] Json to_json() const {
        Json j;
        if (!generator_.empty()) {
            j["generator"] = generator_;
            j["params"] = params_;
        } else {
            j["k"] = k_;
            j["horizon"] = horizon_;
            Json t = Json::object();
            for (const auto& [n, rows] : tables_) t[std::to_string(n)] = rows;
            j["tables"] = t;
        }
        j["correlation"] = to_string(correlation_);
        return j;
    }

    [[nodiscard]] int k() const noexcept { return k_; }
    [[nodiscard]] long long horizon() const noexcept { return horizon_; }
    [[nodiscard]] const std::vector<long long>& checkpoints() const noexcept { return checkpoints_; }
    [[nodiscard]] Correlation correlation() const noexcept { return correlation_; }
    void set_correlation(Correlation c) noexcept { correlation_ = c; }
    [[nodiscard]] bool normalized() const noexcept { return normalized_; }
    [[nodiscard]] const std::string& generator() const noexcept { return generator_; }

    [[nodiscard]] bool has_slice(long long n) const {
        if (!generator_.empty()) return n >= 1 && n <= horizon_;
        return tables_.count(n) > 0;
    }

    /// Coefficients as supplied, zeros dropped, original order.
    [[nodiscard]] Slice raw_slice(int i, long long n) const {
        if (i < 0 || i >= k_) throw Error(ErrorKind::DimensionMismatch, "component index out of range");
        if (!has_slice(n)) throw Error(ErrorKind::PreconditionViolated, "no coefficients for n=" + std::to_string(n));
        Slice s;
        auto push = [&](long long j, double v) {
            if (v != 0.0) {
                s.coeff.push_back(v);
                s.index.push_back(j);
            }
        };
        if (generator_ == "clt") {
            const double v = 1.0 / std::sqrt(2.0 * static_cast<double>(n));
            for (long long j = 1; j <= n; ++j) push(j, v);
        } else if (generator_ == "mixed") {
            push(1, 0.5);
            const double v = 0.5 / std::sqrt(static_cast<double>(n));
            for (long long j = 2; j <= n + 1; ++j) push(j, v);
        } else if (generator_ == "constant") {
            const auto& mu = constant_[static_cast<std::size_t>(i)];
            for (std::size_t j = 0; j < mu.size(); ++j) push(static_cast<long long>(j) + 1, mu[j]);
        } else {
            const auto& row = tables_.at(n)[static_cast<std::size_t>(i)];
            for (std::size_t j = 0; j < row.size(); ++j) push(static_cast<long long>(j) + 1, row[j]);
        }
        return s;
    }

    /// Factor applied by normalize() to slice (i, n); 1 before normalization.
    [[nodiscard]] double scale(int i, long long n) const {
        if (!normalized_) return 1.0;
        return scale_of(raw_slice(i, n), i, n);
    }

    /// Normalised (sum of squares 1/2) and sorted by descending |lambda| once
    /// normalize() has been applied; raw otherwise.
    [[nodiscard]] Slice slice(int i, long long n) const {
        Slice s = raw_slice(i, n);
        if (!normalized_) return s;
        const double f = scale_of(s, i, n);
        std::vector<std::size_t> order(s.size());
        for (std::size_t j = 0; j < order.size(); ++j) order[j] = j;
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t p, std::size_t q) { return std::abs(s.coeff[p]) > std::abs(s.coeff[q]); });
        Slice out;
        out.coeff.reserve(s.size());
        out.index.reserve(s.size());
        for (std::size_t j : order) {
            out.coeff.push_back(s.coeff[j] * f);
            out.index.push_back(s.index[j]);
        }
        return out;
    }

    /// Largest original j with a nonzero coefficient.
    [[nodiscard]] long long support(int i, long long n) const {
        const Slice s = raw_slice(i, n);
        return s.index.empty() ? 0 : *std::max_element(s.index.begin(), s.index.end());
    }

    [[nodiscard]] TriangularArray normalize() const {
        TriangularArray out = *this;
        out.normalized_ = true;
        std::vector<long long> ns = checkpoints_;
        for (int i = 0; i < k_; ++i)
            for (long long n : ns) (void)out.scale_of(out.raw_slice(i, n), i, n);
        return out;
    }

private:
    // Slices already at 1/2 within 1e-12 are left untouched so exact inputs stay exact.
    double scale_of(const Slice& s, int i, long long n) const {
        double ss = 0.0, carry = 0.0;
        for (double v : s.coeff) {
            const double term = v * v, t = ss + term;
            carry += std::abs(ss) >= std::abs(term) ? (ss - t) + term : (term - t) + ss;
            ss = t;
        }
        ss += carry;
        if (!(ss > 0.0))
            throw Error(ErrorKind::ZeroVariance, "slice (component " + std::to_string(i + 1) + ", n=" + std::to_string(n) +
                                                     ") is identically zero");
        if (std::abs(ss - 0.5) <= 1e-12) return 1.0;
        return std::sqrt(0.5 / ss);
    }

    int k_ = 1;
    long long horizon_ = 0;
    std::vector<long long> checkpoints_;
    Tables tables_;
    std::string generator_;
    Json params_ = Json::object();
    std::vector<std::vector<double>> constant_;
    Correlation correlation_ = Correlation::Independent;
    bool normalized_ = false;
};

[[nodiscard]] inline TriangularArray normalize(const TriangularArray& arr) { return arr.normalize(); }

inline constexpr double kDriftTolerance = 1e-3;

struct LimitEstimate {
    std::vector<std::vector<double>> mu;  // per component, by rank
    std::vector<double> drift;            // max_j |lambda_{j,H} - lambda_{j,H'}|
    std::vector<bool> drift_warning;      // drift > kDriftTolerance
    std::vector<long long> dropped;       // horizon coordinates judged not to settle
    long long horizon = 0;
    long long previous = 0;
};

namespace detail {

inline void require_normalized(const TriangularArray& arr) {
    if (!arr.normalized()) throw Error(ErrorKind::PreconditionViolated, "array must be normalized first");
}

}  // namespace detail

/// mu_{i,j} from the horizon slice. A coordinate is kept only when it moved by
/// at most kDriftTolerance relative to itself over each of the last two
/// checkpoint steps (one step when only two checkpoints exist); coordinates
/// still drifting, such as 1/(2 sqrt n), are heading to 0.
[[nodiscard]] inline LimitEstimate estimate_limits(const TriangularArray& arr) {
    detail::require_normalized(arr);
    const auto& cps = arr.checkpoints();
    if (cps.size() < 2) throw Error(ErrorKind::PreconditionViolated, "limit estimation needs at least two checkpoints");
    LimitEstimate est;
    est.horizon = cps.back();
    est.previous = cps[cps.size() - 2];
    const std::optional<long long> earlier = cps.size() >= 3 ? std::optional(cps[cps.size() - 3]) : std::nullopt;
    for (int i = 0; i < arr.k(); ++i) {
        const Slice now = arr.slice(i, est.horizon);
        const Slice before = arr.slice(i, est.previous);
        const Slice older = earlier ? arr.slice(i, *earlier) : before;
        std::vector<double> mu(now.size(), 0.0);
        double drift = 0.0;
        long long dropped = 0;
        for (std::size_t j = 0; j < std::max(now.size(), before.size()); ++j) {
            const double delta = std::abs(now.at(j) - before.at(j));
            drift = std::max(drift, delta);
            if (j >= now.size()) continue;
            const double tol = kDriftTolerance * std::abs(now.at(j));
            if (delta <= tol && std::abs(before.at(j) - older.at(j)) <= tol) mu[j] = now.at(j);
            else ++dropped;
        }
        while (!mu.empty() && mu.back() == 0.0) mu.pop_back();
        double c = 0.0;
        for (double m : mu) c += m * m;
        if (c > 0.5 + 1e-12) throw Error(ErrorKind::Internal, "sum of mu^2 exceeds 1/2; normalization is broken");
        est.mu.push_back(std::move(mu));
        est.drift.push_back(drift);
        est.drift_warning.push_back(drift > kDriftTolerance);
        est.dropped.push_back(dropped);
    }
    return est;
}

struct ComponentCuts {
    std::vector<long long> B;  // B[K-1] for K = 1..; -1 when no checkpoint qualifies
    std::vector<long long> n;
    std::vector<long long> D;
    std::vector<double> C;  // sum_{j <= D} (lambda_{j,n} - mu_j)^2
};

struct CutSchedule {
    std::vector<ComponentCuts> components;
    std::vector<long long> grid;  // every n at which the tail bound was checked
    long long horizon = 0;
};

/// B_K: smallest grid point from which sum_{j<=K} (lambda_{j,m} - mu_j)^2 <= 1/K
/// at every later grid point up to the horizon. D_n = max{K : B_K <= n}.
[[nodiscard]] inline CutSchedule compute_cuts(const TriangularArray& arr, const std::vector<std::vector<double>>& mu,
                                              std::vector<long long> n_list) {
    detail::require_normalized(arr);
    if (static_cast<int>(mu.size()) != arr.k()) throw Error(ErrorKind::DimensionMismatch, "one mu list per component");
    for (long long n : n_list)
        if (!arr.has_slice(n)) throw Error(ErrorKind::PreconditionViolated, "n=" + std::to_string(n) + " is outside the array");
    std::vector<long long> grid = arr.checkpoints();
    grid.insert(grid.end(), n_list.begin(), n_list.end());
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

    CutSchedule out;
    out.grid = grid;
    out.horizon = grid.back();
    for (int i = 0; i < arr.k(); ++i) {
        const auto& m = mu[static_cast<std::size_t>(i)];
        std::size_t kmax = m.size();
        std::vector<Slice> slices;
        for (long long g : grid) {
            slices.push_back(arr.slice(i, g));
            kmax = std::max(kmax, slices.back().size());
        }
        auto prefix = [&](const Slice& s) {
            std::vector<double> p(kmax);
            double acc = 0.0;
            for (std::size_t j = 0; j < kmax; ++j) {
                const double mj = j < m.size() ? m[j] : 0.0;
                const double dlt = s.at(j) - mj;
                acc += dlt * dlt;
                p[j] = acc;
            }
            return p;
        };
        // last_fail[K-1]: largest grid position where the 1/K bound fails.
        std::vector<long long> last_fail(kmax, -1);
        for (std::size_t g = 0; g < grid.size(); ++g) {
            const auto p = prefix(slices[g]);
            for (std::size_t kk = 0; kk < kmax; ++kk)
                if (p[kk] > 1.0 / static_cast<double>(kk + 1)) last_fail[kk] = static_cast<long long>(g);
        }
        ComponentCuts cc;
        for (std::size_t kk = 0; kk < kmax; ++kk) {
            const auto next = static_cast<std::size_t>(last_fail[kk] + 1);
            cc.B.push_back(next < grid.size() ? grid[next] : -1);
        }
        if (cc.B.empty() || cc.B[0] < 0)
            throw Error(ErrorKind::HorizonTooShort, "component " + std::to_string(i + 1) +
                                                        ": the 1/K tail bound never holds for K=1 up to the horizon");
        for (long long n : n_list) {
            long long d = 0;
            for (std::size_t kk = 0; kk < cc.B.size(); ++kk)
                if (cc.B[kk] >= 0 && cc.B[kk] <= n) d = static_cast<long long>(kk) + 1;
            const auto pos = static_cast<std::size_t>(std::lower_bound(grid.begin(), grid.end(), n) - grid.begin());
            const auto p = prefix(slices[pos]);
            cc.n.push_back(n);
            cc.D.push_back(d);
            cc.C.push_back(d > 0 ? p[static_cast<std::size_t>(d - 1)] : 0.0);
        }
        out.components.push_back(std::move(cc));
    }
    return out;
}

struct LimitLaw {
    std::vector<std::vector<double>> mu;
    std::vector<double> C;
    std::vector<double> gauss_var;
    std::optional<Matrix> gauss_cov;
    std::vector<std::vector<long long>> mu_index;  // original j of each mu at the horizon
};

[[nodiscard]] inline Json law_to_json(const LimitLaw& law) {
    Json j{{"mu", law.mu}, {"C", law.C}, {"gauss_var", law.gauss_var}};
    if (law.gauss_cov) j["gauss_cov"] = matrix_to_json(*law.gauss_cov);
    else j["gauss_cov"] = nullptr;
    return j;
}

namespace detail {

// Equal coefficients grouped: sum over the group of c (g^2 - 1) is c (chi2_m - m).
struct Group {
    std::vector<double> c;  // one coefficient per component (zeros allowed)
    long long m = 0;
};

inline std::vector<Group> group_equal(const std::vector<double>& values) {
    std::vector<double> v = values;
    std::sort(v.begin(), v.end());
    std::vector<Group> out;
    for (std::size_t a = 0; a < v.size();) {
        std::size_t b = a;
        while (b < v.size() && v[b] == v[a]) ++b;
        out.push_back({{v[a]}, static_cast<long long>(b - a)});
        a = b;
    }
    return out;
}

// Groups original indices whose coefficient tuple across components agrees.
inline std::vector<Group> group_tuples(const std::vector<std::map<long long, double>>& by_index) {
    std::map<long long, std::vector<double>> tuples;
    const std::size_t k = by_index.size();
    for (std::size_t i = 0; i < k; ++i)
        for (const auto& [j, c] : by_index[i]) {
            auto& t = tuples[j];
            t.resize(k, 0.0);
            t[i] = c;
        }
    std::map<std::vector<double>, long long> counts;
    for (const auto& [j, t] : tuples) ++counts[t];
    std::vector<Group> out;
    for (const auto& [t, m] : counts) out.push_back({t, m});
    return out;
}

// chi-square with m degrees of freedom at probability u, and the matching normal quantile.
inline std::pair<double, double> chi2_and_normal(long long m, double u) {
    static const boost::math::normal_distribution<> std_normal;
    const double z = boost::math::quantile(std_normal, u);
    if (m == 1) {
        const double g = boost::math::quantile(std_normal, 0.5 + 0.5 * u);
        return {g * g, z};
    }
    return {boost::math::quantile(boost::math::chi_squared_distribution<>(static_cast<double>(m)), u), z};
}

}  // namespace detail

/// Monte Carlo covariance of the tail sums sum_{j > D_i} lambda_{i,j,H} (g^2 - 1).
[[nodiscard]] inline Matrix tail_covariance(const TriangularArray& arr, const std::vector<long long>& cuts, long long samples,
                                            std::uint64_t seed) {
    const int k = arr.k();
    const long long h = arr.horizon();
    std::vector<std::map<long long, double>> tail(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) {
        const Slice s = arr.slice(i, h);
        for (std::size_t j = static_cast<std::size_t>(cuts[static_cast<std::size_t>(i)]); j < s.size(); ++j)
            tail[static_cast<std::size_t>(i)][s.index[j]] = s.coeff[j];
    }
    std::vector<detail::Group> groups;
    if (arr.correlation() == Correlation::Shared) {
        groups = detail::group_tuples(tail);
    } else {
        for (int i = 0; i < k; ++i) {
            std::vector<double> vals;
            for (const auto& [j, c] : tail[static_cast<std::size_t>(i)]) vals.push_back(c);
            for (auto& g : detail::group_equal(vals)) {
                std::vector<double> c(static_cast<std::size_t>(k), 0.0);
                c[static_cast<std::size_t>(i)] = g.c[0];
                groups.push_back({c, g.m});
            }
        }
    }
    Matrix draws(samples, k);
    parallel_for(static_cast<std::size_t>(samples), 256, [&](std::size_t b, std::size_t e) {
        for (std::size_t r = b; r < e; ++r) {
            CounterRng rng(seed, r);
            Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(k);
            for (const auto& g : groups) {
                const double x = detail::chi2_and_normal(g.m, rng.uniform_open()).first - static_cast<double>(g.m);
                for (int i = 0; i < k; ++i) row(i) += g.c[static_cast<std::size_t>(i)] * x;
            }
            draws.row(static_cast<Eigen::Index>(r)) = row;
        }
    });
    const Eigen::RowVectorXd mean = draws.colwise().mean();
    const Matrix centered = draws.rowwise() - mean;
    return centered.transpose() * centered / static_cast<double>(std::max<long long>(samples - 1, 1));
}

/// mu and C from the horizon, gauss_var = 1 - 2C, and (when sample_budget > 0)
/// an empirical covariance of the tail sums beyond the horizon cut.
[[nodiscard]] inline LimitLaw classify(const TriangularArray& arr, long long sample_budget, std::uint64_t seed) {
    detail::require_normalized(arr);
    const auto est = estimate_limits(arr);
    LimitLaw law;
    law.mu = est.mu;
    for (int i = 0; i < arr.k(); ++i) {
        double c = 0.0;
        for (double m : est.mu[static_cast<std::size_t>(i)]) c += m * m;
        law.C.push_back(c);
        law.gauss_var.push_back(1.0 - 2.0 * c);
        const Slice s = arr.slice(i, est.horizon);
        law.mu_index.emplace_back(s.index.begin(), s.index.begin() + static_cast<std::ptrdiff_t>(est.mu[static_cast<std::size_t>(i)].size()));
    }
    if (sample_budget > 0) {
        const auto cuts = compute_cuts(arr, est.mu, {est.horizon});
        std::vector<long long> d;
        for (const auto& cc : cuts.components) d.push_back(cc.D.front());
        law.gauss_cov = tail_covariance(arr, d, sample_budget, derive_seed(seed, 11));
    }
    return law;
}

enum class LindebergVerdict { GaussianLimit, NotGaussian };

[[nodiscard]] constexpr const char* to_string(LindebergVerdict v) noexcept {
    return v == LindebergVerdict::GaussianLimit ? "GaussianLimit" : "NotGaussian";
}

struct LindebergReport {
    std::vector<long long> n;
    std::vector<double> sup;
    LindebergVerdict verdict = LindebergVerdict::NotGaussian;
};

inline constexpr double kLindebergSup = 1e-2;

/// sup_j |lambda_{i,j,n}| along the checkpoints. GaussianLimit when it ends
/// below 1e-2 and falls strictly over the last three checkpoints.
[[nodiscard]] inline LindebergReport lindeberg_check(const TriangularArray& arr, int i) {
    detail::require_normalized(arr);
    LindebergReport rep;
    for (long long n : arr.checkpoints()) {
        const Slice s = arr.slice(i, n);
        rep.n.push_back(n);
        rep.sup.push_back(s.size() ? std::abs(s.coeff.front()) : 0.0);
    }
    const auto& s = rep.sup;
    const std::size_t m = s.size();
    if (m >= 3 && s[m - 1] < kLindebergSup && s[m - 3] > s[m - 2] && s[m - 2] > s[m - 1])
        rep.verdict = LindebergVerdict::GaussianLimit;
    return rep;
}

struct ConvergenceRow {
    long long n = 0;
    double distance = 0.0;
};

struct ConvergenceReport {
    LimitLaw law;
    std::vector<ConvergenceRow> rows;
    double threshold = 0.0;  // same-law threshold at this sample size
    long long samples = 0;
    bool coupled = true;
};

struct ConvergenceOptions {
    bool coupled = true;
    long long cov_budget = 2000;
};

namespace detail {

// Per-component sampling plan at one n (independent model).
struct ComponentPlan {
    std::vector<double> head_lambda, head_mu;
    std::vector<Group> tail;
    double tail_sd = 0.0;  // sqrt(sum of tail group variances)
    double gauss_sd = 0.0;
};

inline ComponentPlan plan_component(const Slice& s, const std::vector<double>& mu, double gauss_var) {
    ComponentPlan p;
    std::vector<double> rest;
    for (std::size_t j = 0; j < std::max(s.size(), mu.size()); ++j) {
        const double mj = j < mu.size() ? mu[j] : 0.0;
        if (mj != 0.0) {
            p.head_lambda.push_back(s.at(j));
            p.head_mu.push_back(mj);
        } else if (j < s.size()) {
            rest.push_back(s.coeff[j]);
        }
    }
    p.tail = group_equal(rest);
    double var = 0.0;
    for (const auto& g : p.tail) var += 2.0 * g.c[0] * g.c[0] * static_cast<double>(g.m);
    p.tail_sd = std::sqrt(var);
    p.gauss_sd = std::sqrt(std::max(gauss_var, 0.0));
    return p;
}

// One draw of (F_n, limit) for a component. Coupled draws share the head
// Gaussians and turn each tail group's uniform into the limit's Gaussian part
// through the normal quantile, so the pair is comonotone group by group.
inline std::pair<double, double> draw_pair(const ComponentPlan& p, CounterRng& rng, CounterRng* limit_rng) {
    double f = 0.0, lim = 0.0, z = 0.0;
    CounterRng& lr = limit_rng ? *limit_rng : rng;
    for (std::size_t h = 0; h < p.head_lambda.size(); ++h) {
        const double g = rng.normal();
        f += p.head_lambda[h] * (g * g - 1.0);
        const double gl = limit_rng ? lr.normal() : g;
        lim += p.head_mu[h] * (gl * gl - 1.0);
    }
    for (const auto& g : p.tail) {
        if (limit_rng && g.m == 1) {
            const double x = rng.normal();
            f += g.c[0] * (x * x - 1.0);
            continue;
        }
        const auto [chi, zq] = chi2_and_normal(g.m, rng.uniform_open());
        const double c = g.c[0];
        f += c * (chi - static_cast<double>(g.m));
        z += (c < 0 ? -1.0 : 1.0) * std::abs(c) * std::sqrt(2.0 * static_cast<double>(g.m)) * zq;
    }
    if (p.gauss_sd > 0) {
        if (limit_rng || p.tail_sd == 0.0) lim += p.gauss_sd * lr.normal();
        else lim += p.gauss_sd * z / p.tail_sd;
    }
    return {f, lim};
}

}  // namespace detail

/// Exact draws of F = sum_j lambda_j (g_j^2 - 1) for one slice.
[[nodiscard]] inline std::vector<double> sample_slice(const Slice& s, long long samples, std::uint64_t seed) {
    if (samples < 1) throw Error(ErrorKind::EmptyBatch, "need at least one sample");
    const auto groups = detail::group_equal(s.coeff);
    std::vector<double> out(static_cast<std::size_t>(samples));
    parallel_for(out.size(), 1024, [&](std::size_t b, std::size_t e) {
        for (std::size_t r = b; r < e; ++r) {
            CounterRng rng(seed, r);
            double f = 0.0;
            for (const auto& g : groups) {
                double chi;
                if (g.m == 1) {
                    const double x = rng.normal();
                    chi = x * x;
                } else {
                    chi = detail::chi2_and_normal(g.m, rng.uniform_open()).first;
                }
                f += g.c[0] * (chi - static_cast<double>(g.m));
            }
            out[r] = f;
        }
    });
    return out;
}

/// Distances between samples of F_n and of the classified limit, one row per n.
[[nodiscard]] inline ConvergenceReport convergence_report(const TriangularArray& arr, const std::vector<long long>& n_grid,
                                                          long long samples, std::uint64_t seed,
                                                          const ConvergenceOptions& opts = {}) {
    detail::require_normalized(arr);
    if (samples < 1) throw Error(ErrorKind::EmptyBatch, "convergence report needs at least one sample");
    if (n_grid.empty()) throw Error(ErrorKind::PreconditionViolated, "empty n grid");
    for (long long n : n_grid)
        if (!arr.has_slice(n)) throw Error(ErrorKind::PreconditionViolated, "n=" + std::to_string(n) + " is outside the array");
    const int k = arr.k();
    ConvergenceReport rep;
    rep.law = classify(arr, k > 1 ? opts.cov_budget : 0, seed);
    rep.samples = samples;
    rep.threshold = same_law_threshold(k, samples, samples);
    const bool shared = arr.correlation() == Correlation::Shared && k > 1;
    rep.coupled = opts.coupled && !shared;

    // Gaussian part of the limit for the shared model: covariance with the
    // classified variances on the diagonal, made positive semidefinite.
    Matrix chol_shared;
    if (shared) {
        Matrix cov = rep.law.gauss_cov ? *rep.law.gauss_cov : Matrix::Zero(k, k);
        for (int i = 0; i < k; ++i) cov(i, i) = rep.law.gauss_var[static_cast<std::size_t>(i)];
        Eigen::SelfAdjointEigenSolver<Matrix> es(cov);
        const Vector ev = es.eigenvalues().cwiseMax(0.0);
        chol_shared = es.eigenvectors() * ev.cwiseSqrt().asDiagonal();
    }

    for (std::size_t gi = 0; gi < n_grid.size(); ++gi) {
        const long long n = n_grid[gi];
        Matrix fs = Matrix::Zero(samples, k), ls = Matrix::Zero(samples, k);
        const std::uint64_t base = derive_seed(derive_seed(seed, 21), static_cast<std::uint64_t>(n));
        if (!shared) {
            for (int i = 0; i < k; ++i) {
                const auto plan = detail::plan_component(arr.slice(i, n), rep.law.mu[static_cast<std::size_t>(i)],
                                                         rep.law.gauss_var[static_cast<std::size_t>(i)]);
                const std::uint64_t s_f = derive_seed(base, 2 * static_cast<std::uint64_t>(i));
                const std::uint64_t s_l = derive_seed(base, 2 * static_cast<std::uint64_t>(i) + 1);
                parallel_for(static_cast<std::size_t>(samples), 1024, [&](std::size_t b, std::size_t e) {
                    for (std::size_t r = b; r < e; ++r) {
                        CounterRng rng(s_f, r);
                        CounterRng lrng(s_l, r);
                        const auto [f, l] = detail::draw_pair(plan, rng, rep.coupled ? nullptr : &lrng);
                        fs(static_cast<Eigen::Index>(r), i) = f;
                        ls(static_cast<Eigen::Index>(r), i) = l;
                    }
                });
            }
        } else {
            std::vector<std::map<long long, double>> by_index(static_cast<std::size_t>(k));
            for (int i = 0; i < k; ++i) {
                const Slice s = arr.slice(i, n);
                for (std::size_t j = 0; j < s.size(); ++j) by_index[static_cast<std::size_t>(i)][s.index[j]] = s.coeff[j];
            }
            const auto groups = detail::group_tuples(by_index);
            std::map<long long, std::size_t> head_slot;
            for (const auto& idx : rep.law.mu_index)
                for (long long j : idx) head_slot.emplace(j, head_slot.size());
            const std::uint64_t s_f = derive_seed(base, 0), s_l = derive_seed(base, 1);
            parallel_for(static_cast<std::size_t>(samples), 1024, [&](std::size_t b, std::size_t e) {
                for (std::size_t r = b; r < e; ++r) {
                    CounterRng rng(s_f, r);
                    for (const auto& g : groups) {
                        const double x = detail::chi2_and_normal(g.m, rng.uniform_open()).first - static_cast<double>(g.m);
                        for (int i = 0; i < k; ++i) fs(static_cast<Eigen::Index>(r), i) += g.c[static_cast<std::size_t>(i)] * x;
                    }
                    CounterRng lrng(s_l, r);
                    std::vector<double> gh(head_slot.size());
                    for (auto& v : gh) v = lrng.normal();
                    Vector z(k);
                    for (int i = 0; i < k; ++i) z(i) = lrng.normal();
                    const Vector gz = chol_shared * z;
                    for (int i = 0; i < k; ++i) {
                        double v = gz(i);
                        const auto& mu = rep.law.mu[static_cast<std::size_t>(i)];
                        const auto& idx = rep.law.mu_index[static_cast<std::size_t>(i)];
                        for (std::size_t j = 0; j < mu.size(); ++j) {
                            const double g = gh[head_slot.at(idx[j])];
                            v += mu[j] * (g * g - 1.0);
                        }
                        ls(static_cast<Eigen::Index>(r), i) = v;
                    }
                }
            });
        }
        rep.rows.push_back({n, empirical_distance(fs, ls)});
    }
    return rep;
}

}  // namespace chaos2
