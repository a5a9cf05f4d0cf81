#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "clonebot/corpus.hpp"

namespace clonebot {

struct EmbeddingVector {
  std::vector<float> values;

  std::size_t dim() const { return values.size(); }
  std::span<const float> view() const { return values; }

  friend bool operator==(const EmbeddingVector&, const EmbeddingVector&) = default;
};

double l2_norm(std::span<const float> v);
bool all_finite(std::span<const float> v);

/// Scales `v` to unit Euclidean norm. Throws NormError for zero or
/// non-finite input.
EmbeddingVector normalize(const EmbeddingVector& v);

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::size_t dim() const = 0;
  /// Throws EmptyInputError for blank text.
  virtual EmbeddingVector embed(std::string_view text) const = 0;
  /// Identifies the embedding function; bundles built with one fingerprint
  /// cannot be queried with another.
  virtual std::string fingerprint() const = 0;
};

/// Reference embedder: signed feature hashing of word tokens, L2-normalized.
///
/// For each token t (see split_words), with h = FNV-1a-64(utf8 bytes of t):
///   bucket = mix(h ^ kBucketSeed) mod dim
///   sign   = top bit of mix(h ^ kSignSeed) set ? -1 : +1
/// where mix is the splitmix64 finalizer. Counts are accumulated in double
/// precision, normalized, then stored as float. If every bucket cancels to
/// zero, the vector becomes +1 at the bucket of the space-joined token
/// sequence. The result is a bag of words: token order never matters.
class HashingEmbedder final : public Embedder {
 public:
  static constexpr std::uint64_t kFnvOffset = 0xCBF29CE484222325ULL;
  static constexpr std::uint64_t kFnvPrime = 0x00000100000001B3ULL;
  static constexpr std::uint64_t kBucketSeed = 0x243F6A8885A308D3ULL;
  static constexpr std::uint64_t kSignSeed = 0x13198A2E03707344ULL;
  static constexpr std::size_t kDefaultDim = 1024;

  explicit HashingEmbedder(std::size_t dim = kDefaultDim);

  std::size_t dim() const override { return dim_; }
  EmbeddingVector embed(std::string_view text) const override;
  std::string fingerprint() const override;

  static std::uint64_t fnv1a64(std::string_view bytes);
  std::size_t bucket_of(std::string_view token) const;
  int sign_of(std::string_view token) const;

 private:
  std::size_t dim_;
};

using VectorMap = std::map<UtteranceId, EmbeddingVector>;

/// Binary vector file, little-endian:
///   "CBVE" | u16 version=1 | u32 dim | u64 count | count x (u64 id, dim x f32)
void save_vectors(const VectorMap& vectors, std::size_t dim, std::ostream& out);

/// Throws FormatError on bad magic/version, truncation, trailing bytes,
/// duplicate ids, non-finite components, or a dim differing from
/// `expected_dim` when one is given.
VectorMap load_vectors(std::istream& in, std::optional<std::size_t> expected_dim = std::nullopt);

}  // namespace clonebot
