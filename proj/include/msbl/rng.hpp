#ifndef MSBL_RNG_HPP_
#define MSBL_RNG_HPP_

#include <cstdint>
#include <span>
#include <string_view>

namespace msbl {

/// Counter-based random stream. A draw is a pure function of (key, counter),
/// so sequences are identical across runs and platforms, and labeled
/// sub-streams are independent of the order in which they are derived.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  /// Independent stream keyed by this stream's key and `label`.
  /// Does not advance this stream.
  Rng substream(std::string_view label) const;
  Rng substream(std::uint64_t index) const;

  std::uint64_t next_u64();
  /// Uniform on [0, 1).
  double uniform();
  double uniform(double lo, double hi);
  /// Uniform integer on [0, n).
  std::uint64_t below(std::uint64_t n);
  double normal();
  double normal(double mean, double stddev);
  bool bernoulli(double p);
  /// Number of trials up to and including the first success (>= 1).
  std::uint64_t geometric(double p);
  /// Index drawn proportionally to `probs` (assumed to sum to ~1).
  std::size_t categorical(std::span<const double> probs);

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

 private:
  Rng(std::uint64_t key, std::uint64_t counter) : key_(key), counter_(counter) {}

  std::uint64_t key_;
  std::uint64_t counter_;
};

inline Rng make_rng(std::uint64_t seed) { return Rng(seed); }

}  // namespace msbl

#endif  // MSBL_RNG_HPP_
