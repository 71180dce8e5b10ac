#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "schelling/ring.hpp"

/// Bounded-ring mean-field approximation.
///
/// A labeling of a ring of length L is a code in [0, 2^L): bit k holds node
/// k+1 (node 1 is the least significant bit), 1 = x and 0 = o. Reading a ring
/// clockwise from a different start node is a bit rotation; exchanging the
/// marks is a complement.
namespace schelling::meanfield {

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Code = std::uint32_t;

inline constexpr int kDefaultMaxRingLength = 10;

inline Code full_mask(int L) { return L >= 32 ? ~Code{0} : ((Code{1} << L) - 1); }

inline Mark node_mark(Code code, int node) { return ((code >> node) & 1u) ? Mark::x : Mark::o; }

inline Code complement(Code code, int L) { return ~code & full_mask(L); }

/// Labeling read starting from node `start` (0-based) instead of node 0.
inline Code rotate(Code code, int L, int start) {
  if (start == 0) return code;
  return ((code >> start) | (code << (L - start))) & full_mask(L);
}

inline std::string code_to_string(Code code, int L) {
  std::string s;
  for (int k = 0; k < L; ++k) s.push_back(to_char(node_mark(code, k)));
  return s;
}

inline Code string_to_code(const std::string& s) {
  Code c = 0;
  const auto lab = Labeling::parse(s);
  for (std::size_t k = 0; k < lab.size(); ++k)
    if (lab[k] == Mark::x) c |= Code{1} << k;
  return c;
}

/// Bias of a 0-based node computed inside its own ring of length L.
inline int ring_bias(Code code, int L, int w, int node) {
  int sum = 0;
  for (int d = -w; d <= w; ++d) sum += sign_of(node_mark(code, ((node + d) % L + L) % L));
  return sum;
}

inline bool node_unhappy(Code code, int L, int w, int node) {
  return !is_happy(node_mark(code, node), ring_bias(code, L, w, node));
}

/// +1 if node 1 holds an unhappy x, -1 if an unhappy o, 0 otherwise.
inline int unhappy_indicator(Code code, int L, int w) {
  if (!node_unhappy(code, L, w, 0)) return 0;
  return sign_of(node_mark(code, 0));
}

inline void check_ring(int L, int w, int max_L = 30) {
  if (w < 1) throw ParameterError("window size w must be at least 1");
  if (2 * w + 1 > L) throw ParameterError("ring length L must be at least 2w+1");
  if (L > max_L)
    throw ParameterError("ring length " + std::to_string(L) + " exceeds the limit " +
                         std::to_string(max_L));
}

/// Normalised occupancy fractions over all 2^L ring labelings.
struct StateVector {
  int L = 0;
  int w = 0;
  std::vector<double> z;

  StateVector() = default;
  StateVector(int ring_length, int window) : L(ring_length), w(window) {
    check_ring(L, w);
    z.assign(std::size_t{1} << L, 0.0);
  }

  static StateVector indicator(int L, int w, Code code) {
    StateVector v(L, w);
    v.z.at(code) = 1.0;
    return v;
  }

  std::size_t size() const noexcept { return z.size(); }
  double sum() const {
    double s = 0.0;
    for (double v : z) s += v;
    return s;
  }
  double& operator[](Code c) { return z[c]; }
  double operator[](Code c) const { return z[c]; }
};

inline double sup_distance(const StateVector& a, const StateVector& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.z.size(); ++i) d = std::max(d, std::abs(a.z[i] - b.z[i]));
  return d;
}

/// The mark-exchange involution: component sigma of the result is
/// component complement(sigma) of the input.
inline StateVector swap_symmetry(const StateVector& v) {
  StateVector out = v;
  for (Code c = 0; c < v.z.size(); ++c) out.z[c] = v.z[complement(c, v.L)];
  return out;
}

/// Signed unhappy imbalance sum_sigma u(sigma) z_sigma. Summed over
/// complementary pairs, so it is exactly zero on swap-symmetric vectors.
inline double delta(const StateVector& v) {
  double d = 0.0;
  for (Code c = 0; c < v.z.size(); ++c) {
    const Code m = complement(c, v.L);
    if (m < c) continue;
    const int u = unhappy_indicator(c, v.L, v.w);
    if (u != 0) d += u * (v.z[c] - v.z[m]);
  }
  return d;
}

/// Raw ring counts zeta_sigma (integers) of a disjoint-rings labeling.
inline std::vector<std::uint64_t> empirical_counts(const Labeling& labeling, int L) {
  if (L < 1 || L > 30) throw ParameterError("ring length out of range");
  const std::size_t n = labeling.size();
  if (n % static_cast<std::size_t>(L) != 0)
    throw ParameterError("n must be divisible by the ring length L");
  std::vector<std::uint64_t> counts(std::size_t{1} << L, 0);
  for (std::size_t base = 0; base < n; base += static_cast<std::size_t>(L)) {
    Code code = 0;
    for (int k = 0; k < L; ++k)
      if (labeling[base + static_cast<std::size_t>(k)] == Mark::x) code |= Code{1} << k;
    for (int s = 0; s < L; ++s) ++counts[rotate(code, L, s)];
  }
  return counts;
}

inline StateVector empirical_state_vector(const Labeling& labeling, int L, int w) {
  StateVector v(L, w);
  const auto counts = empirical_counts(labeling, L);
  const double n = static_cast<double>(labeling.size());
  for (std::size_t c = 0; c < counts.size(); ++c) v.z[c] = static_cast<double>(counts[c]) / n;
  return v;
}

inline StateVector empirical_state_vector(const RingState& state) {
  const auto& topo = state.topology();
  if (topo.single_cycle() && topo.ring_length > 30)
    throw ParameterError("state vectors need a disjoint-rings topology");
  return empirical_state_vector(state.labeling(), static_cast<int>(topo.ring_length), state.w());
}

/// Node `node` of a ring labelled `from` is an unhappy `mover`; swapping it
/// with an unhappy occupant of the opposite mark relabels the ring `to`.
struct Move {
  Code from = 0;
  Code to = 0;
  int node = 0;  // 0-based; node j of the text is node j-1 here
  Mark mover = Mark::x;
};

/// Nonzero drift coefficients a(j, sigma, sigma', sigma''), stored factored:
/// a move of node j in sigma' is effective for every partner sigma'' whose
/// node 1 is an unhappy occupant of the opposite mark, contributing -1 at
/// sigma = sigma' and +1 at sigma = the relabelled ring.
class DriftTable {
 public:
  DriftTable() = default;
  DriftTable(int L, int w, std::vector<Move> moves, std::vector<Code> partners_o,
             std::vector<Code> partners_x)
      : L_(L), w_(w), moves_(std::move(moves)) {
    partners_[index_of(Mark::o)] = std::move(partners_o);
    partners_[index_of(Mark::x)] = std::move(partners_x);
  }

  int L() const noexcept { return L_; }
  int w() const noexcept { return w_; }
  std::span<const Move> moves() const noexcept { return moves_; }
  /// Codes whose node 1 holds an unhappy occupant of mark m.
  std::span<const Code> partners(Mark m) const noexcept { return partners_[index_of(m)]; }

  std::size_t entry_count() const {
    std::size_t k = 0;
    for (const auto& mv : moves_) k += 2 * partners(opposite(mv.mover)).size();
    return k;
  }

  /// Visits every nonzero coefficient as fn(j, sigma, sigma', sigma'', a) with
  /// j 1-based.
  template <class Fn>
  void for_each_entry(Fn&& fn) const {
    for (const auto& mv : moves_) {
      for (Code partner : partners(opposite(mv.mover))) {
        fn(mv.node + 1, mv.from, mv.from, partner, -1);
        fn(mv.node + 1, mv.to, mv.from, partner, +1);
      }
    }
  }

 private:
  int L_ = 0;
  int w_ = 0;
  std::vector<Move> moves_;
  std::vector<Code> partners_[2];
};

inline DriftTable build_drift_table(int L, int w, int max_L = kDefaultMaxRingLength) {
  check_ring(L, w, max_L);
  std::vector<Move> moves;
  std::vector<Code> partners_o, partners_x;
  const Code count = Code{1} << L;
  for (Code c = 0; c < count; ++c) {
    for (int node = 0; node < L; ++node) {
      if (!node_unhappy(c, L, w, node)) continue;
      const Mark m = node_mark(c, node);
      moves.push_back(Move{c, c ^ (Code{1} << node), node, m});
      if (node == 0) (m == Mark::x ? partners_x : partners_o).push_back(c);
    }
  }
  return DriftTable(L, w, std::move(moves), std::move(partners_o), std::move(partners_x));
}

/// f(z)_sigma = 2 sum a(j, sigma, sigma', sigma'') z_sigma' z_sigma''.
inline void drift_into(std::span<const double> z, const DriftTable& table, std::span<double> out) {
  std::fill(out.begin(), out.end(), 0.0);
  double pool[2] = {0.0, 0.0};
  for (Mark m : {Mark::o, Mark::x})
    for (Code c : table.partners(m)) pool[index_of(m)] += z[c];
  for (const auto& mv : table.moves()) {
    const double rate = 2.0 * z[mv.from] * pool[index_of(opposite(mv.mover))];
    out[mv.from] -= rate;
    out[mv.to] += rate;
  }
}

inline StateVector drift(const StateVector& v, const DriftTable& table) {
  if (v.L != table.L() || v.w != table.w()) throw ParameterError("drift table does not match");
  StateVector out(v.L, v.w);
  drift_into(v.z, table, out.z);
  return out;
}

struct Trajectory {
  std::vector<double> x;
  std::vector<StateVector> z;
};

inline constexpr double kNegativeTolerance = 1e-9;
inline constexpr double kNormalisationTolerance = 1e-10;

/// Classical fixed-step RK4 for dz/dx = f(z), recording the state at each of
/// the (ascending, non-negative) sample points. The last step before a
/// sample point is shortened to land on it exactly.
inline Trajectory integrate(const StateVector& z0, const DriftTable& table, double h,
                            std::span<const double> sample_points) {
  if (!(h > 0.0)) throw ParameterError("step size must be positive");
  if (z0.L != table.L() || z0.w != table.w()) throw ParameterError("drift table does not match");
  if (std::abs(z0.sum() - 1.0) > kNormalisationTolerance)
    throw ParameterError("initial state vector is not normalised");
  const std::size_t dim = z0.size();
  std::vector<double> z = z0.z, tmp(dim), k1(dim), k2(dim), k3(dim), k4(dim);

  const auto step = [&](double dt) {
    drift_into(z, table, k1);
    for (std::size_t i = 0; i < dim; ++i) tmp[i] = z[i] + 0.5 * dt * k1[i];
    drift_into(tmp, table, k2);
    for (std::size_t i = 0; i < dim; ++i) tmp[i] = z[i] + 0.5 * dt * k2[i];
    drift_into(tmp, table, k3);
    for (std::size_t i = 0; i < dim; ++i) tmp[i] = z[i] + dt * k3[i];
    drift_into(tmp, table, k4);
    for (std::size_t i = 0; i < dim; ++i) {
      z[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
      if (z[i] < 0.0) {
        if (z[i] < -kNegativeTolerance)
          throw NumericalError("state component fell below zero: " + std::to_string(z[i]));
        z[i] = 0.0;
      }
    }
  };

  Trajectory traj;
  double x = 0.0;
  for (double target : sample_points) {
    if (target < x) throw ParameterError("sample points must be ascending and non-negative");
    while (target - x > 1e-12 * std::max(1.0, target)) {
      const double dt = std::min(h, target - x);
      step(dt);
      x = (target - x <= h) ? target : x + dt;
    }
    StateVector s(z0.L, z0.w);
    s.z = z;
    if (std::abs(s.sum() - 1.0) > kNormalisationTolerance)
      throw NumericalError("state vector lost normalisation at x=" + std::to_string(x));
    traj.x.push_back(target);
    traj.z.push_back(std::move(s));
  }
  return traj;
}

/// Samples at x = 0, x_max/k, ..., x_max.
inline Trajectory integrate(const StateVector& z0, const DriftTable& table, double h, double x_max,
                            int samples) {
  std::vector<double> pts;
  for (int k = 0; k <= samples; ++k) pts.push_back(x_max * k / std::max(samples, 1));
  return integrate(z0, table, h, pts);
}

}  // namespace schelling::meanfield
