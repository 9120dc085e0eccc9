#include "mdlab/data.hpp"

#include <algorithm>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <fmt/format.h>
#include <numbers>

#include "mdlab/error.hpp"

namespace mdlab {

namespace {

constexpr double kStochasticTol = 1e-12;
constexpr double kBoundTol = 1e-12;
constexpr double kTvSlack = 1e-12;

void check_probability_vector(const std::vector<double>& probs, const char* what) {
  double total = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0) || !std::isfinite(p)) {
      throw DomainError(fmt::format("{}: negative or non-finite probability", what));
    }
    total += p;
  }
  if (std::abs(total - 1.0) > kStochasticTol) {
    throw DomainError(fmt::format("{}: probabilities sum to {}, not 1", what, total));
  }
}

std::size_t draw_index(Rng& rng, const double* probs, std::size_t n) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    acc += probs[i];
    if (u < acc) return i;
  }
  // Last index absorbs rounding, but never a zero-mass entry.
  std::size_t last = n - 1;
  while (last > 0 && probs[last] == 0.0) --last;
  return last;
}

Vector unit_direction(Rng& rng, int d) {
  Vector g(d);
  double n2 = 0.0;
  do {
    for (int i = 0; i < d; ++i) g[i] = rng.normal();
    n2 = g.squaredNorm();
  } while (n2 == 0.0);
  return g / std::sqrt(n2);
}

// Antiderivative of clip(v, -1, 1).
double clip_antiderivative(double v) {
  if (v < -1.0) return -v - 0.5;
  if (v > 1.0) return v - 0.5;
  return 0.5 * v * v;
}

double lomax_raw_moment(double shape, int k) {
  // E W^k = k! / prod_{i=1..k} (shape - i), W ~ Lomax(shape, 1)
  double m = 1.0;
  for (int i = 1; i <= k; ++i) m *= static_cast<double>(i) / (shape - i);
  return m;
}

double lomax_central_moment(double shape, int r) {
  const double mu = lomax_raw_moment(shape, 1);
  double acc = 0.0;
  double binom = 1.0;
  for (int j = 0; j <= r; ++j) {
    if (j > 0) binom = binom * (r - j + 1) / j;
    acc += binom * lomax_raw_moment(shape, j) * std::pow(-mu, r - j);
  }
  return acc;
}

}  // namespace

// --- descriptors --------------------------------------------------------------

void FiniteChain::validate() const {
  const auto n = transition.rows();
  if (n < 1 || transition.cols() != n) throw DomainError("chain: transition must be square");
  if (static_cast<Eigen::Index>(features.size()) != n || reward.size() != n) {
    throw DomainError("chain: features and rewards must have one entry per state");
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    double row = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      const double p = transition(i, j);
      if (!(p >= 0.0) || !std::isfinite(p)) throw DomainError("chain: negative transition entry");
      row += p;
    }
    if (std::abs(row - 1.0) > kStochasticTol) {
      throw DomainError(fmt::format("chain: row {} sums to {}", i, row));
    }
  }
  const int d = dim();
  for (const auto& f : features) {
    if (f.size() != d || d < 1) throw DomainError("chain: inconsistent feature dimensions");
    require_finite(f, "chain feature");
    if (f.norm() > 1.0 + kBoundTol) throw DomainError("chain: feature norm exceeds 1");
  }
  require_finite(reward, "chain reward");
  if (reward.cwiseAbs().maxCoeff() > 1.0 + kBoundTol) throw DomainError("chain: |reward| > 1");
  if (labels) {
    if (labels->size() != n) throw DomainError("chain: labels must have one entry per state");
    require_finite(*labels, "chain labels");
    if (labels->cwiseAbs().maxCoeff() > 1.0 + kBoundTol) throw DomainError("chain: |label| > 1");
  }
  if (!(reward_noise >= 0.0) || !std::isfinite(reward_noise)) {
    throw DomainError("chain: reward noise must be a finite nonnegative half-width");
  }
  if (start_state && (*start_state < 0 || *start_state >= n)) {
    throw DomainError("chain: start state out of range");
  }
}

double FiniteChain::expected_reward(int s) const {
  const double r = reward[s];
  if (reward_noise == 0.0) return std::clamp(r, -1.0, 1.0);
  const double a = reward_noise;
  return (clip_antiderivative(r + a) - clip_antiderivative(r - a)) / (2.0 * a);
}

void DiscreteDistribution::validate() const {
  if (points.empty()) throw DomainError("discrete distribution: empty support");
  if (labels.size() != points.size() || probs.size() != points.size()) {
    throw DomainError("discrete distribution: points, labels, probs must have equal length");
  }
  check_probability_vector(probs, "discrete distribution");
  const auto d = points.front().size();
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (points[i].size() != d) throw DomainError("discrete distribution: mixed dimensions");
    require_finite(points[i], "discrete distribution point");
    if (!std::isfinite(labels[i])) throw DomainError("discrete distribution: non-finite label");
    if (bounded && (points[i].norm() > 1.0 + kBoundTol || std::abs(labels[i]) > 1.0 + kBoundTol)) {
      throw DomainError("discrete distribution: support point violates max{|x|, |y|} <= 1");
    }
  }
}

DiscreteDistribution two_cluster_default() {
  DiscreteDistribution dist;
  const double a = 0.15, b = 0.95;
  const double n = std::hypot(a, b);
  dist.points = {Vector{{a / n, b / n}}, Vector{{-a / n, b / n}}, Vector{{b / n, -a / n}},
                 Vector{{-b / n, -a / n}}};
  dist.labels = {1.0, 1.0, 1.0, 1.0};
  dist.probs = {0.45, 0.45, 0.05, 0.05};
  return dist;
}

void HeavyTailSpec::validate() const {
  if (kind == Kind::subgaussian) {
    if (!(sigma >= 0.0) || !std::isfinite(sigma)) {
      throw DomainError("heavy tail: sigma must be finite and nonnegative");
    }
  } else {
    if (p <= 0 || p % 8 != 0) {
      throw DomainError(fmt::format("heavy tail: polynomial power p = {} must be a positive multiple of 8", p));
    }
    if (!(m > 0.0) || !std::isfinite(m)) throw DomainError("heavy tail: moment bound must be positive");
  }
}

int source_dim(const DataSource& source) {
  return std::visit(
      [](const auto& s) -> int {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, DiscreteDistribution>) {
          return static_cast<int>(s.points.front().size());
        } else if constexpr (std::is_same_v<T, ChainSource>) {
          return s.chain.dim();
        } else {
          return s.d;
        }
      },
      source);
}

// --- samplers -------------------------------------------------------------------

LabeledSample sample_discrete(Rng& rng, const DiscreteDistribution& dist) {
  const std::size_t i = draw_index(rng, dist.probs.data(), dist.probs.size());
  return {dist.points[i], dist.labels[i]};
}

LabeledSample sample_two_cluster(Rng& rng, const DiscreteDistribution& config) {
  config.validate();
  return sample_discrete(rng, config);
}

LabeledSample sample_sphere_slice(Rng& rng, int d) {
  if (d < 2) throw DomainError("sample_sphere_slice: d must be at least 2");
  LabeledSample s;
  s.x = Vector::Zero(d);
  const double x1 = 2.0 * rng.uniform() - 1.0;
  const double rest = std::sqrt(std::max(0.0, 1.0 - x1 * x1));
  s.x[0] = x1;
  if (d == 2) {
    s.x[1] = (rng.uniform() < 0.5) ? rest : -rest;
  } else {
    s.x.tail(d - 1) = rest * unit_direction(rng, d - 1);
  }
  s.y = x1 >= 0.0 ? 1.0 : -1.0;
  return s;
}

HeavyMoments heavy_moments(const HeavyTailSpec& spec) {
  spec.validate();
  HeavyMoments m;
  if (spec.kind == HeavyTailSpec::Kind::subgaussian) {
    m.mean_z = 1.0 + spec.sigma * std::sqrt(2.0 / std::numbers::pi);
    m.var_z = spec.sigma * spec.sigma * (1.0 - 2.0 / std::numbers::pi);
    return m;
  }
  const double shape = 4.0 * spec.p + 1.0;
  // Largest scale with s^r c_r <= m for every even r in [2, p].
  double scale = INFINITY;
  for (int r = 2; r <= spec.p; r += 2) {
    scale = std::min(scale, std::pow(spec.m / lomax_central_moment(shape, r), 1.0 / r));
  }
  m.lomax_shape = shape;
  m.lomax_scale = scale;
  m.mean_z = 1.0 + scale * lomax_raw_moment(shape, 1);
  m.var_z = scale * scale * lomax_central_moment(shape, 2);
  // Odd orders are dominated by max{1, even moments} (Lyapunov), and p/e >= 1.
  m.moment_bound = std::max(spec.p / std::numbers::e, spec.m);
  return m;
}

double heavy_central_moment(const HeavyTailSpec& spec, int r) {
  if (spec.kind != HeavyTailSpec::Kind::polynomial || r < 2 || r % 2 != 0) {
    throw DomainError("heavy_central_moment: defined for even r on polynomial specs");
  }
  const HeavyMoments m = heavy_moments(spec);
  return std::pow(m.lomax_scale, r) * lomax_central_moment(m.lomax_shape, r);
}

HeavySample sample_heavy(Rng& rng, const HeavyTailSpec& spec, int d) {
  spec.validate();
  if (d < 1) throw DomainError("sample_heavy: d must be positive");
  double z;
  if (spec.kind == HeavyTailSpec::Kind::subgaussian) {
    z = 1.0 + spec.sigma * std::abs(rng.normal());
  } else {
    const HeavyMoments m = heavy_moments(spec);
    const double w = std::pow(rng.uniform_pos(), -1.0 / m.lomax_shape) - 1.0;
    z = 1.0 + m.lomax_scale * w;
  }
  const double radius = std::pow(z, 0.25);
  HeavySample out;
  out.sample.x = radius * unit_direction(rng, d);
  out.sample.y = (rng.uniform() < 0.5 ? -1.0 : 1.0) * radius;
  // |x|^4 = |y|^4 = z up to rounding; keep the exact draw
  out.z = z;
  return out;
}

SampleStream::SampleStream(DataSource source, Rng rng) : source_(std::move(source)), rng_(rng) {
  std::visit(
      [](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, DiscreteDistribution>) {
          s.validate();
        } else if constexpr (std::is_same_v<T, ChainSource>) {
          s.chain.validate();
          if (!s.chain.labels) throw DomainError("chain source needs per-state labels");
        } else if constexpr (std::is_same_v<T, HeavySource>) {
          s.spec.validate();
        } else {
          if (s.d < 2) throw DomainError("sphere source: d must be at least 2");
        }
      },
      source_);
}

LabeledSample SampleStream::next() {
  if (const auto* disc = std::get_if<DiscreteDistribution>(&source_)) {
    auto s = sample_discrete(rng_, *disc);
    if (disc->bounded && (s.x.norm() > 1.0 + kBoundTol || std::abs(s.y) > 1.0 + kBoundTol)) {
      throw DomainError("bounded source produced an out-of-range sample");
    }
    return s;
  }
  if (const auto* sph = std::get_if<SphereSource>(&source_)) return sample_sphere_slice(rng_, sph->d);
  if (const auto* heavy = std::get_if<HeavySource>(&source_)) {
    auto h = sample_heavy(rng_, heavy->spec, heavy->d);
    last_z_ = h.z;
    return h.sample;
  }
  const auto& chain = std::get<ChainSource>(source_).chain;
  if (state_ < 0) {
    if (chain.start_state) {
      state_ = *chain.start_state;
    } else {
      const Vector pi = stationary_distribution(chain.transition);
      state_ = static_cast<int>(draw_index(rng_, pi.data(), pi.size()));
    }
  }
  LabeledSample s{chain.features[state_], (*chain.labels)[state_]};
  const Vector row = chain.transition.row(state_).transpose();
  state_ = static_cast<int>(draw_index(rng_, row.data(), row.size()));
  return s;
}

std::vector<LabeledSample> draw_dataset(const DataSource& source, Rng rng, std::size_t n) {
  SampleStream stream(source, rng);
  std::vector<LabeledSample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(stream.next());
  return out;
}

// --- sphere risk ----------------------------------------------------------------

double sphere_risk_quadrature(double r) {
  if (!(r > 0.0) || !std::isfinite(r)) throw DomainError("sphere risk: r must be positive");
  auto f = [r](double s) { return std::log1p(std::exp(-r * s)); };
  double err = 0.0;
  return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, 0.0, 1.0, 15, 1e-13,
                                                                       &err);
}

double sphere_risk_series(double r) {
  if (!(r > 0.0) || !std::isfinite(r)) throw DomainError("sphere risk: r must be positive");
  // Alternating with decreasing terms: stop once the next term cannot move the sum.
  double sum = 0.0;
  for (long k = 1; k < 200'000'000L; ++k) {
    const double kd = static_cast<double>(k);
    const double term = std::exp(-kd * r) / (kd * kd);
    if (term < 1e-18) break;
    sum += (k % 2 == 1) ? term : -term;
  }
  return (std::numbers::pi * std::numbers::pi / 12.0 - sum) / r;
}

double sphere_risk_exact(double r) {
  const double quad = sphere_risk_quadrature(r);
  const double series = sphere_risk_series(r);
  if (std::abs(quad - series) > 1e-8) {
    throw CrossCheckError(fmt::format(
        "sphere risk: quadrature {} and dilogarithm series {} disagree at r = {}", quad, series, r));
  }
  return quad;
}

// --- Markov chains ----------------------------------------------------------------

double total_variation(const Vector& a, const Vector& b) {
  require_same_dim(a, b, "total_variation");
  return 0.5 * (a - b).cwiseAbs().sum();
}

Vector stationary_distribution(const Matrix& transition) {
  const auto n = transition.rows();
  bool rank_one = true;
  for (Eigen::Index i = 1; i < n && rank_one; ++i) {
    rank_one = transition.row(i) == transition.row(0);
  }
  if (rank_one) return transition.row(0).transpose();
  // Solve pi (P - I) = 0 with the last equation replaced by sum(pi) = 1.
  Matrix a = transition.transpose() - Matrix::Identity(n, n);
  a.row(n - 1).setOnes();
  Vector rhs = Vector::Zero(n);
  rhs[n - 1] = 1.0;
  Vector pi = a.fullPivLu().solve(rhs);
  pi = pi.cwiseMax(0.0);
  return pi / pi.sum();
}

namespace {

bool primitive(const Matrix& transition) {
  const auto n = transition.rows();
  using BoolMat = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic>;
  BoolMat base = (transition.array() > 0.0).cast<int>();
  BoolMat power = base;
  const long cap = static_cast<long>(n) * n;
  for (long k = 1; k <= std::max(cap, 1L); ++k) {
    if ((power.array() > 0).all()) return true;
    power = ((power * base).array() > 0).cast<int>();
  }
  return false;
}

}  // namespace

StationarityWitness chain_witness(const Matrix& transition, double eps, int power_cap) {
  if (!(eps >= 0.0) || !std::isfinite(eps)) throw DomainError("chain_witness: eps must be >= 0");
  if (!primitive(transition)) {
    throw DomainError("chain_witness: chain is reducible or periodic");
  }
  StationarityWitness w;
  w.pi = stationary_distribution(transition);
  w.eps = eps;
  const auto n = transition.rows();
  Matrix power = transition;
  double worst = 0.0;
  for (int tau = 1; tau <= power_cap; ++tau) {
    worst = 0.0;
    for (Eigen::Index s = 0; s < n; ++s) {
      worst = std::max(worst, total_variation(power.row(s).transpose(), w.pi));
    }
    if (worst <= eps + kTvSlack) {
      w.tau = tau;
      return w;
    }
    power = power * transition;
  }
  throw ConvergenceError(
      fmt::format("chain_witness: TV still {} > eps = {} after {} steps", worst, eps, power_cap),
      worst);
}

StationarityWitness chain_witness(const FiniteChain& chain, double eps, int power_cap) {
  chain.validate();
  return chain_witness(chain.transition, eps, power_cap);
}

std::vector<TdTriple> td_stream(Rng& rng, const FiniteChain& chain, std::size_t n) {
  chain.validate();
  int s;
  if (chain.start_state) {
    s = *chain.start_state;
  } else {
    const Vector pi = stationary_distribution(chain.transition);
    s = static_cast<int>(draw_index(rng, pi.data(), pi.size()));
  }
  std::vector<TdTriple> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Vector row = chain.transition.row(s).transpose();
    const int next = static_cast<int>(draw_index(rng, row.data(), row.size()));
    double r = chain.reward[s];
    if (chain.reward_noise > 0.0) {
      r = std::clamp(r + chain.reward_noise * (2.0 * rng.uniform() - 1.0), -1.0, 1.0);
    }
    out.push_back({chain.features[s], chain.features[next], r});
    s = next;
  }
  return out;
}

}  // namespace mdlab
