#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "sirld/error.hpp"
#include "sirld/rng.hpp"
#include "sirld/stats.hpp"

/**
 * \file
 * \brief Random edge-weight environments on the complete graph and the discrepancy
 * statistic delta_n = sup_{C,D disjoint} |gamma(C,D) - |C||D| E rho| / n^2.
 */

namespace sirld {

/// Law of a single edge weight.
struct WeightDistribution {
  enum class Kind : std::uint32_t { constant = 0, bernoulli = 1, exponential = 2, uniform = 3 };

  Kind kind = Kind::constant;
  double a = 1.0;  ///< constant: c; bernoulli: p; exponential: mean; uniform: lo
  double b = 0.0;  ///< bernoulli: scale; uniform: hi; unused otherwise

  static WeightDistribution constant(double c) { return checked({Kind::constant, c, 0.0}); }
  static WeightDistribution bernoulli(double p, double scale = 1.0) { return checked({Kind::bernoulli, p, scale}); }
  static WeightDistribution exponential(double mean) { return checked({Kind::exponential, mean, 0.0}); }
  static WeightDistribution uniform(double lo, double hi) { return checked({Kind::uniform, lo, hi}); }

  void validate() const {
    switch (kind) {
      case Kind::constant:
        require(a > 0.0 && std::isfinite(a), "constant weight must be positive");
        break;
      case Kind::bernoulli:
        require(a > 0.0 && a <= 1.0, "bernoulli p must lie in (0,1]");
        require(b > 0.0 && std::isfinite(b), "bernoulli scale must be positive");
        break;
      case Kind::exponential:
        require(a > 0.0 && std::isfinite(a), "exponential mean must be positive");
        break;
      case Kind::uniform:
        require(a >= 0.0 && std::isfinite(b) && b > a, "uniform needs 0 <= lo < hi");
        break;
      default:
        throw InvalidInput("unknown weight distribution kind");
    }
  }

  double mean() const {
    switch (kind) {
      case Kind::constant: return a;
      case Kind::bernoulli: return a * b;
      case Kind::exponential: return a;
      case Kind::uniform: return 0.5 * (a + b);
    }
    return 0.0;
  }

  double variance() const {
    switch (kind) {
      case Kind::constant: return 0.0;
      case Kind::bernoulli: return a * (1.0 - a) * b * b;
      case Kind::exponential: return a * a;
      case Kind::uniform: return (b - a) * (b - a) / 12.0;
    }
    return 0.0;
  }

  /// Supremum of alpha with E exp(alpha rho) finite.
  double mgf_radius() const {
    return kind == Kind::exponential ? 1.0 / a : std::numeric_limits<double>::infinity();
  }

  /// Largest attainable weight (infinite for unbounded laws).
  double upper_bound() const {
    switch (kind) {
      case Kind::constant: return a;
      case Kind::bernoulli: return b;
      case Kind::exponential: return std::numeric_limits<double>::infinity();
      case Kind::uniform: return b;
    }
    return 0.0;
  }

  double draw(Rng& rng) const {
    switch (kind) {
      case Kind::constant: return a;
      case Kind::bernoulli: return rng.uniform() < a ? b : 0.0;
      case Kind::exponential: return rng.exponential(1.0 / a);
      case Kind::uniform: return a + (b - a) * rng.uniform();
    }
    return 0.0;
  }

  std::string describe() const {
    std::ostringstream out;
    out << std::setprecision(17);
    switch (kind) {
      case Kind::constant: out << "constant(" << a << ")"; break;
      case Kind::bernoulli: out << "bernoulli(" << a << "," << b << ")"; break;
      case Kind::exponential: out << "exponential(" << a << ")"; break;
      case Kind::uniform: out << "uniform(" << a << "," << b << ")"; break;
    }
    return out.str();
  }

  bool operator==(const WeightDistribution&) const = default;

 private:
  static WeightDistribution checked(WeightDistribution d) {
    d.validate();
    return d;
  }
};

/// Symmetric weight matrix with zero diagonal. Constant laws are stored implicitly.
class Environment {
 public:
  Environment() = default;

  Environment(std::size_t n, WeightDistribution dist, std::uint64_t seed, std::vector<double> dense)
      : n_(n), dist_(dist), seed_(seed), dense_(std::move(dense)) {
    require(dense_.empty() || dense_.size() == n * n, "Environment: weight buffer has wrong size");
  }

  std::size_t n() const noexcept { return n_; }
  const WeightDistribution& dist() const noexcept { return dist_; }
  std::uint64_t seed() const noexcept { return seed_; }
  double mean() const { return dist_.mean(); }

  /// True when every off-diagonal weight equals the same constant and no matrix is stored.
  bool implicit_constant() const noexcept { return dense_.empty(); }

  double weight(std::size_t i, std::size_t j) const noexcept {
    if (i == j) {
      return 0.0;
    }
    return dense_.empty() ? dist_.a : dense_[i * n_ + j];
  }

  /// Row i of the dense matrix; empty span for implicit constant environments.
  std::span<const double> row(std::size_t i) const noexcept {
    if (dense_.empty()) {
      return {};
    }
    return {dense_.data() + i * n_, n_};
  }

 private:
  std::size_t n_ = 0;
  WeightDistribution dist_;
  std::uint64_t seed_ = 0;
  std::vector<double> dense_;
};

/// Draws the n(n-1)/2 weights of the upper triangle row by row and mirrors them.
inline Environment sample_environment(std::size_t n, const WeightDistribution& dist, std::uint64_t seed) {
  require(n >= 2, "sample_environment: n must be at least 2");
  dist.validate();
  if (dist.kind == WeightDistribution::Kind::constant) {
    return {n, dist, seed, {}};
  }
  std::vector<double> w(n * n, 0.0);
  Rng rng(seed, StreamTag::environment, 0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double x = dist.draw(rng);
      w[i * n + j] = x;
      w[j * n + i] = x;
    }
  }
  return {n, dist, seed, std::move(w)};
}

/// gamma(C, D) = sum over C x D of rho(i, j). C and D must be disjoint.
inline double gamma(const Environment& env, std::span<const std::size_t> C, std::span<const std::size_t> D) {
  std::vector<char> in_c(env.n(), 0);
  for (std::size_t i : C) {
    require(i < env.n(), "gamma: vertex out of range");
    in_c[i] = 1;
  }
  for (std::size_t j : D) {
    require(j < env.n(), "gamma: vertex out of range");
    require(in_c[j] == 0, "gamma: C and D must be disjoint");
  }
  double sum = 0.0;
  for (std::size_t i : C) {
    for (std::size_t j : D) {
      sum += env.weight(i, j);
    }
  }
  return sum;
}

namespace detail {

/// Incremental bookkeeping of Gamma = sum_{C x D} (rho - E rho) under single-vertex moves.
class DiscrepancyState {
 public:
  enum : std::uint8_t { none = 0, in_c = 1, in_d = 2 };

  explicit DiscrepancyState(const Environment& env)
      : n_(env.n()), mean_(env.mean()), side_(n_, none), row_c_(n_, 0.0), row_d_(n_, 0.0) {
    if (!env.implicit_constant()) {
      centred_.resize(n_ * n_);
      for (std::size_t i = 0; i < n_; ++i) {
        for (std::size_t j = 0; j < n_; ++j) {
          centred_[i * n_ + j] = i == j ? 0.0 : env.weight(i, j) - mean_;
        }
      }
    }
  }

  /// Centred weight; zero everywhere for constant environments.
  double c(std::size_t i, std::size_t j) const noexcept { return centred_.empty() ? 0.0 : centred_[i * n_ + j]; }

  double value() const noexcept { return gamma_; }

  /// Back to C = D = empty.
  void reset() {
    std::fill(side_.begin(), side_.end(), none);
    std::fill(row_c_.begin(), row_c_.end(), 0.0);
    std::fill(row_d_.begin(), row_d_.end(), 0.0);
    gamma_ = 0.0;
  }
  std::uint8_t side(std::size_t v) const noexcept { return side_[v]; }

  /// Gamma after moving v to `to`, without applying the move.
  double value_after(std::size_t v, std::uint8_t to) const noexcept {
    return gamma_ - contribution(v, side_[v]) + contribution(v, to);
  }

  void move(std::size_t v, std::uint8_t to) {
    const std::uint8_t from = side_[v];
    if (from == to) {
      return;
    }
    gamma_ += contribution(v, to) - contribution(v, from);
    if (!centred_.empty()) {
      const double* col = centred_.data() + v * n_;
      if (from == in_c) {
        for (std::size_t w = 0; w < n_; ++w) row_c_[w] -= col[w];
      } else if (from == in_d) {
        for (std::size_t w = 0; w < n_; ++w) row_d_[w] -= col[w];
      }
      if (to == in_c) {
        for (std::size_t w = 0; w < n_; ++w) row_c_[w] += col[w];
      } else if (to == in_d) {
        for (std::size_t w = 0; w < n_; ++w) row_d_[w] += col[w];
      }
    }
    side_[v] = to;
  }

 private:
  double contribution(std::size_t v, std::uint8_t s) const noexcept {
    return s == in_c ? row_d_[v] : (s == in_d ? row_c_[v] : 0.0);
  }

  std::size_t n_;
  double mean_;
  std::vector<std::uint8_t> side_;
  std::vector<double> row_c_;
  std::vector<double> row_d_;
  std::vector<double> centred_;
  double gamma_ = 0.0;
};

}  // namespace detail

inline constexpr std::size_t delta_exact_max_n = 14;

/// Exact delta_n by walking all 3^n assignments in reflected ternary Gray order.
inline double delta_exact(const Environment& env) {
  const std::size_t n = env.n();
  if (n > delta_exact_max_n) {
    throw InvalidInput("delta_exact: n = " + std::to_string(n) + " exceeds " +
                       std::to_string(delta_exact_max_n) + "; use delta_sampled instead");
  }
  if (env.implicit_constant()) {
    return 0.0;
  }
  detail::DiscrepancyState st(env);
  std::vector<int> digit(n, 0);
  std::vector<int> dir(n, 1);
  std::uint64_t total = 1;
  for (std::size_t k = 0; k < n; ++k) {
    total *= 3;
  }
  double best = 0.0;
  for (std::uint64_t step = 1; step < total; ++step) {
    std::size_t j = 0;
    for (std::uint64_t r = step; r % 3 == 0; r /= 3) {
      ++j;
    }
    digit[j] += dir[j];
    if (digit[j] == 0 || digit[j] == 2) {
      dir[j] = -dir[j];
    }
    st.move(j, static_cast<std::uint8_t>(digit[j]));
    best = std::max(best, std::abs(st.value()));
  }
  return best / static_cast<double>(n * n);
}

/// Monte Carlo lower bound on delta_n: random assignment per trial followed by greedy
/// single-vertex moves while |Gamma| grows. Trial t always uses stream (seed, t), so the
/// result is non-decreasing in `trials`.
inline double delta_sampled(const Environment& env, std::uint64_t trials, std::uint64_t seed) {
  require(trials >= 1, "delta_sampled: trials must be at least 1");
  if (env.implicit_constant()) {
    return 0.0;
  }
  const std::size_t n = env.n();
  double best = 0.0;
  detail::DiscrepancyState st(env);
  for (std::uint64_t t = 0; t < trials; ++t) {
    st.reset();
    Rng rng(seed, StreamTag::delta_trial, t);
    for (std::size_t v = 0; v < n; ++v) {
      st.move(v, static_cast<std::uint8_t>(rng.below(3)));
    }
    for (std::size_t iter = 0; iter < 10 * n + 10; ++iter) {
      double cur = std::abs(st.value());
      std::size_t best_v = n;
      std::uint8_t best_to = 0;
      for (std::size_t v = 0; v < n; ++v) {
        for (std::uint8_t to = 0; to < 3; ++to) {
          if (to == st.side(v)) {
            continue;
          }
          const double cand = std::abs(st.value_after(v, to));
          if (cand > cur * (1.0 + 1e-12) + 1e-300) {
            cur = cand;
            best_v = v;
            best_to = to;
          }
        }
      }
      if (best_v == n) {
        break;
      }
      st.move(best_v, best_to);
    }
    best = std::max(best, std::abs(st.value()));
  }
  return best / static_cast<double>(n * n);
}

struct TailScale {
  enum class Kind { ldp, mdp } kind = Kind::ldp;
  double a_exponent = 0.75;  ///< a_n = n^a_exponent in mdp mode

  static TailScale ldp() { return {Kind::ldp, 0.75}; }
  static TailScale mdp(double exponent) { return {Kind::mdp, exponent}; }

  std::string describe() const {
    if (kind == Kind::ldp) {
      return "ldp";
    }
    std::ostringstream out;
    out << "mdp(" << a_exponent << ")";
    return out.str();
  }
};

struct TailRow {
  std::size_t n = 0;
  double eps = 0.0;
  std::string scale;
  std::size_t exceed_count = 0;
  std::size_t replicas = 0;
  double freq = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
};

struct TailOptions {
  std::uint64_t seed = 0;
  bool sampled = false;             ///< force delta_sampled even for small n
  std::uint64_t sampled_trials = 200;
};

/// Empirical P(delta_n > eps) (ldp) or P(n delta_n / a_n > eps) (mdp) with Wilson intervals.
/// Replica r at size n uses a fresh environment drawn from its own stream.
inline std::vector<TailRow> delta_tail_curve(const WeightDistribution& dist, const std::vector<std::size_t>& n_list,
                                             double eps, std::size_t replicas, TailScale scale,
                                             const TailOptions& opt = {}) {
  require(!n_list.empty(), "delta_tail_curve: n_list is empty");
  require(eps > 0.0, "delta_tail_curve: eps must be positive");
  require(replicas >= 1, "delta_tail_curve: replicas must be at least 1");
  dist.validate();
  if (scale.kind == TailScale::Kind::mdp) {
    require(scale.a_exponent > 0.5 && scale.a_exponent < 1.0, "delta_tail_curve: a exponent must lie in (0.5,1)");
  }
  std::vector<TailRow> rows;
  for (std::size_t n : n_list) {
    require(opt.sampled || n <= delta_exact_max_n,
            "delta_tail_curve: n = " + std::to_string(n) + " needs sampled mode");
    TailRow row;
    row.n = n;
    row.eps = eps;
    row.scale = scale.describe();
    row.replicas = replicas;
    const std::uint64_t n_seed = derive_seed(opt.seed, StreamTag::environment, n);
    for (std::size_t r = 0; r < replicas; ++r) {
      const Environment env = sample_environment(n, dist, derive_seed(n_seed, StreamTag::replica, r));
      const double delta = opt.sampled ? delta_sampled(env, opt.sampled_trials, derive_seed(n_seed, StreamTag::delta, r))
                                       : delta_exact(env);
      double stat = delta;
      if (scale.kind == TailScale::Kind::mdp) {
        stat = static_cast<double>(n) * delta / std::pow(static_cast<double>(n), scale.a_exponent);
      }
      row.exceed_count += stat > eps ? 1 : 0;
    }
    row.freq = static_cast<double>(row.exceed_count) / static_cast<double>(replicas);
    const auto ci = stats::wilson_interval(row.exceed_count, replicas);
    row.ci_lo = ci.lo;
    row.ci_hi = ci.hi;
    rows.push_back(row);
  }
  return rows;
}

inline void write_tail_csv(std::ostream& out, const std::vector<TailRow>& rows) {
  out << "n,eps,scale,exceed_count,replicas,freq,ci_lo,ci_hi\n" << std::setprecision(17);
  for (const auto& r : rows) {
    out << r.n << ',' << r.eps << ',' << r.scale << ',' << r.exceed_count << ',' << r.replicas << ',' << r.freq << ','
        << r.ci_lo << ',' << r.ci_hi << '\n';
  }
}

namespace detail {

template <class T>
void put_le(std::ostream& out, T value) {
  static_assert(std::endian::native == std::endian::little, "big-endian hosts are not supported");
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.write(buf, sizeof(T));
}

template <class T>
T get_le(std::istream& in) {
  char buf[sizeof(T)];
  in.read(buf, sizeof(T));
  require(in.gcount() == static_cast<std::streamsize>(sizeof(T)), "environment file is truncated");
  T value;
  std::memcpy(&value, buf, sizeof(T));
  return value;
}

}  // namespace detail

inline constexpr std::uint32_t environment_format_version = 1;

/// Binary container: "SIRW", version, n, seed, kind, two parameters, then the strict upper
/// triangle row-major as little-endian doubles.
inline void write_environment(std::ostream& out, const Environment& env) {
  out.write("SIRW", 4);
  detail::put_le<std::uint32_t>(out, environment_format_version);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(env.n()));
  detail::put_le<std::uint64_t>(out, env.seed());
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(env.dist().kind));
  detail::put_le<double>(out, env.dist().a);
  detail::put_le<double>(out, env.dist().b);
  for (std::size_t i = 0; i < env.n(); ++i) {
    for (std::size_t j = i + 1; j < env.n(); ++j) {
      detail::put_le<double>(out, env.weight(i, j));
    }
  }
}

inline Environment read_environment(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  require(in.gcount() == 4 && std::memcmp(magic, "SIRW", 4) == 0, "not an environment file (bad magic)");
  const auto version = detail::get_le<std::uint32_t>(in);
  require(version == environment_format_version, "unsupported environment file version");
  const auto n = detail::get_le<std::uint32_t>(in);
  const auto seed = detail::get_le<std::uint64_t>(in);
  WeightDistribution dist;
  dist.kind = static_cast<WeightDistribution::Kind>(detail::get_le<std::uint32_t>(in));
  dist.a = detail::get_le<double>(in);
  dist.b = detail::get_le<double>(in);
  dist.validate();
  require(n >= 2, "environment file: n must be at least 2");
  std::vector<double> w(static_cast<std::size_t>(n) * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double x = detail::get_le<double>(in);
      require(x >= 0.0 && std::isfinite(x), "environment file: weights must be finite and nonnegative");
      w[i * n + j] = x;
      w[j * n + i] = x;
    }
  }
  if (dist.kind == WeightDistribution::Kind::constant) {
    return {n, dist, seed, {}};
  }
  return {n, dist, seed, std::move(w)};
}

inline void save_environment(const std::string& file, const Environment& env) {
  std::ofstream out(file, std::ios::binary);
  require(out.good(), "cannot open " + file + " for writing");
  write_environment(out, env);
}

inline Environment load_environment(const std::string& file) {
  std::ifstream in(file, std::ios::binary);
  require(in.good(), "cannot open " + file);
  return read_environment(in);
}

}  // namespace sirld
