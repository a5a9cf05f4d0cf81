#include "clonebot/embedding.hpp"

#include <cmath>
#include <istream>
#include <iterator>
#include <ostream>

#include "clonebot/binary_io.hpp"
#include "clonebot/error.hpp"
#include "clonebot/rng.hpp"
#include "clonebot/text.hpp"

namespace clonebot {

double l2_norm(std::span<const float> v) {
  double sum = 0.0;
  for (float x : v) sum += static_cast<double>(x) * x;
  return std::sqrt(sum);
}

bool all_finite(std::span<const float> v) {
  for (float x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

EmbeddingVector normalize(const EmbeddingVector& v) {
  if (!all_finite(v.values)) throw NormError("cannot normalize a non-finite vector");
  const double norm = l2_norm(v.values);
  if (norm == 0.0) throw NormError("cannot normalize the zero vector");
  EmbeddingVector out;
  out.values.reserve(v.dim());
  for (float x : v.values) out.values.push_back(static_cast<float>(x / norm));
  return out;
}

HashingEmbedder::HashingEmbedder(std::size_t dim) : dim_(dim) {
  if (dim == 0) throw ParameterError("embedding dimension must be positive");
}

std::uint64_t HashingEmbedder::fnv1a64(std::string_view bytes) {
  std::uint64_t h = kFnvOffset;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= kFnvPrime;
  }
  return h;
}

std::size_t HashingEmbedder::bucket_of(std::string_view token) const {
  return static_cast<std::size_t>(splitmix64_mix(fnv1a64(token) ^ kBucketSeed) % dim_);
}

int HashingEmbedder::sign_of(std::string_view token) const {
  return (splitmix64_mix(fnv1a64(token) ^ kSignSeed) >> 63) ? -1 : 1;
}

EmbeddingVector HashingEmbedder::embed(std::string_view text) const {
  const auto tokens = split_words(normalize_text(text));
  if (tokens.empty()) throw EmptyInputError("cannot embed blank text");

  std::vector<double> acc(dim_, 0.0);
  for (const auto& t : tokens) acc[bucket_of(t)] += sign_of(t);

  double sum = 0.0;
  for (double x : acc) sum += x * x;
  if (sum == 0.0) {
    acc[bucket_of(join(tokens, " "))] = 1.0;
    sum = 1.0;
  }
  const double norm = std::sqrt(sum);

  EmbeddingVector out;
  out.values.reserve(dim_);
  for (double x : acc) out.values.push_back(static_cast<float>(x / norm));
  return out;
}

std::string HashingEmbedder::fingerprint() const { return "hashing-v1/dim=" + std::to_string(dim_); }

namespace {
constexpr std::string_view kVectorMagic = "CBVE";
constexpr std::uint16_t kVectorVersion = 1;
}  // namespace

void save_vectors(const VectorMap& vectors, std::size_t dim, std::ostream& out) {
  io::ByteWriter w;
  w.bytes(kVectorMagic);
  w.u16(kVectorVersion);
  w.u32(static_cast<std::uint32_t>(dim));
  w.u64(vectors.size());
  for (const auto& [id, v] : vectors) {
    if (v.dim() != dim) throw DimensionError("vector " + std::to_string(id) + " has the wrong dimension");
    w.u64(id);
    for (float x : v.values) w.f32(x);
  }
  const auto& bytes = w.data();
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IngestionError("failed to write vector file");
}

VectorMap load_vectors(std::istream& in, std::optional<std::size_t> expected_dim) {
  const std::string data{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  if (in.bad()) throw IngestionError("failed to read vector file");

  io::ByteReader r(data);
  if (r.bytes(4) != kVectorMagic) throw FormatError("not a CBVE vector file");
  if (r.u16() != kVectorVersion) throw FormatError("unsupported CBVE version");
  const std::uint32_t dim = r.u32();
  const std::uint64_t count = r.u64();
  if (expected_dim && dim != *expected_dim)
    throw FormatError("vector file dim " + std::to_string(dim) + " != expected " + std::to_string(*expected_dim));
  if (dim == 0) throw FormatError("vector file dim is zero");
  if (r.remaining() / (8 + 4ull * dim) < count) throw FormatError("truncated stream");

  VectorMap out;
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::uint64_t id = r.u64();
    EmbeddingVector v;
    v.values.resize(dim);
    for (auto& x : v.values) x = r.f32();
    if (!all_finite(v.values)) throw FormatError("non-finite component in vector " + std::to_string(id));
    if (!out.emplace(id, std::move(v)).second) throw FormatError("duplicate vector id " + std::to_string(id));
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes after the declared vectors");
  return out;
}

}  // namespace clonebot
