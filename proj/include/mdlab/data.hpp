#pragma once

#include <cstdint>
#include <optional>
#include <variant>
#include <vector>

#include "mdlab/geometry.hpp"
#include "mdlab/rng.hpp"

namespace mdlab {

struct LabeledSample {
  Vector x;
  double y = 0.0;
};

struct TdTriple {
  Vector x;
  Vector x_next;
  double r = 0.0;
};

// (pi, tau, eps): from any history, the law tau steps ahead is within total
// variation eps of pi.
struct StationarityWitness {
  Vector pi;
  int tau = 1;
  double eps = 0.0;
};

// Finite-state chain with bounded features and rewards. Reward of a
// transition out of state s is reward[s] plus optional uniform noise on
// [-reward_noise, reward_noise], clipped to [-1, 1].
struct FiniteChain {
  Matrix transition;
  std::vector<Vector> features;
  Vector reward;
  std::optional<Vector> labels;  // per-state y for mirror-descent-on-Markov-data runs
  double reward_noise = 0.0;
  std::optional<int> start_state;  // default: draw the start from the stationary law

  int states() const { return static_cast<int>(transition.rows()); }
  int dim() const { return features.empty() ? 0 : static_cast<int>(features.front().size()); }
  // Throws DomainError on any structural problem.
  void validate() const;
  // E[clip(reward[s] + noise)], exact.
  double expected_reward(int s) const;
};

// Finite-support distribution over labeled points.
struct DiscreteDistribution {
  std::vector<Vector> points;
  std::vector<double> labels;
  std::vector<double> probs;
  bool bounded = true;  // enforce max{|x|_2, |y|} <= 1 on the support

  void validate() const;
};

// Default two-cluster law: likely points at (+-0.15, 0.95)/norm with total
// mass 0.9, rare points at (+-0.95, -0.15)/norm with total mass 0.1, all +1.
DiscreteDistribution two_cluster_default();

// x_1 ~ U[-1, 1], remaining coordinates uniform on the sphere of radius
// sqrt(1 - x_1^2); y = sgn(x_1).
struct SphereSource {
  int d = 2;
};

struct HeavyTailSpec {
  enum class Kind { subgaussian, polynomial };
  Kind kind = Kind::subgaussian;
  double sigma = 1.0;  // subgaussian variance proxy is sigma^2; 0 gives Z == 1
  int p = 8;           // polynomial: moment order, multiple of 8
  double m = 10.0;     // polynomial: moment bound

  void validate() const;
};

// Heavy-tailed IID source. With Z := max{1, |x|^4, |y|^4}:
//   subgaussian: Z = 1 + sigma |G|, G standard normal
//   polynomial:  Z = 1 + s W, W Lomax(shape 4p + 1), scale s picked so the
//                largest even central moment of order <= p equals m
// x = Z^{1/4} u with u uniform on the unit sphere; y = +-Z^{1/4} with an
// independent fair sign, so E[x y] = 0.
struct HeavySource {
  HeavyTailSpec spec;
  int d = 2;
};

struct ChainSource {
  FiniteChain chain;  // labels required
};

using DataSource = std::variant<DiscreteDistribution, SphereSource, HeavySource, ChainSource>;

int source_dim(const DataSource& source);

// --- samplers ---------------------------------------------------------------

LabeledSample sample_discrete(Rng& rng, const DiscreteDistribution& dist);
LabeledSample sample_two_cluster(Rng& rng, const DiscreteDistribution& config);
LabeledSample sample_sphere_slice(Rng& rng, int d);

struct HeavySample {
  LabeledSample sample;
  double z = 1.0;
};
HeavySample sample_heavy(Rng& rng, const HeavyTailSpec& spec, int d);

// Closed-form moments of Z for the concrete heavy-tail laws above.
struct HeavyMoments {
  double mean_z = 1.0;
  double var_z = 0.0;
  double lomax_scale = 0.0;  // polynomial only
  double lomax_shape = 0.0;  // polynomial only
  // max{p/e, sup_{2<=r<=p} E|Z - EZ|^r} upper bound used by the bounds (polynomial only)
  double moment_bound = 0.0;
};
HeavyMoments heavy_moments(const HeavyTailSpec& spec);
// E (Z - EZ)^r for even r, polynomial kind.
double heavy_central_moment(const HeavyTailSpec& spec, int r);

// One stream of labeled samples from a source. Markov sources keep their
// current state here.
class SampleStream {
 public:
  SampleStream(DataSource source, Rng rng);
  LabeledSample next();
  // Z of the most recent heavy-tailed draw (1 for bounded sources).
  double last_z() const noexcept { return last_z_; }

 private:
  DataSource source_;
  Rng rng_;
  int state_ = -1;
  double last_z_ = 1.0;
};

std::vector<LabeledSample> draw_dataset(const DataSource& source, Rng rng, std::size_t n);

// --- sphere risk ------------------------------------------------------------

// int_0^1 ln(1 + e^{-r s}) ds by adaptive Gauss-Kronrod quadrature.
double sphere_risk_quadrature(double r);
// (pi^2/12 - sum_{k>=1} (-1)^{k+1} e^{-kr} / k^2) / r, the dilogarithm form.
double sphere_risk_series(double r);
// Quadrature value after asserting agreement with the series within 1e-8
// (CrossCheckError otherwise).
double sphere_risk_exact(double r);

// --- Markov chains ----------------------------------------------------------

double total_variation(const Vector& a, const Vector& b);
Vector stationary_distribution(const Matrix& transition);
// Finds the smallest tau with max_s TV(P^tau[s, :], pi) <= eps (plus 1e-12
// rounding slack). Throws DomainError for non-primitive chains and
// ConvergenceError when power_cap is exceeded.
StationarityWitness chain_witness(const FiniteChain& chain, double eps, int power_cap = 100000);
StationarityWitness chain_witness(const Matrix& transition, double eps, int power_cap = 100000);

std::vector<TdTriple> td_stream(Rng& rng, const FiniteChain& chain, std::size_t n);

}  // namespace mdlab
