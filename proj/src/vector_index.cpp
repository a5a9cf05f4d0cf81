#include "clonebot/vector_index.hpp"

#include <algorithm>
#include <cmath>

#include "clonebot/binary_io.hpp"
#include "clonebot/error.hpp"

namespace clonebot {

std::string_view metric_name(Metric m) { return m == Metric::L2 ? "l2" : "cosine"; }

Metric parse_metric(std::string_view name) {
  if (name == "l2") return Metric::L2;
  if (name == "cosine") return Metric::CosineViaDot;
  throw ParameterError("unknown metric: " + std::string(name));
}

std::string_view index_kind_name(IndexKind k) { return k == IndexKind::Flat ? "flat" : "hnsw"; }

IndexKind parse_index_kind(std::string_view name) {
  if (name == "flat") return IndexKind::Flat;
  if (name == "hnsw") return IndexKind::Hnsw;
  throw ParameterError("unknown index kind: " + std::string(name));
}

double distance(Metric metric, std::span<const float> a, std::span<const float> b) {
  double acc = 0.0;
  if (metric == Metric::L2) {
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
      acc += d * d;
    }
    return std::sqrt(acc);
  }
  for (std::size_t i = 0; i < a.size(); ++i) acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return std::max(0.0, 1.0 - acc);
}

VectorIndex::VectorIndex(std::size_t dim, Metric metric) : dim_(dim), metric_(metric) {
  if (dim == 0) throw ParameterError("index dimension must be positive");
}

void VectorIndex::add(std::uint64_t id, const EmbeddingVector& v) {
  if (sealed_) throw StateError("index is sealed");
  if (v.dim() != dim_)
    throw DimensionError("vector dim " + std::to_string(v.dim()) + " != index dim " + std::to_string(dim_));
  if (!all_finite(v.values)) throw NormError("non-finite vector component");
  if (metric_ == Metric::CosineViaDot && std::abs(l2_norm(v.values) - 1.0) > kUnitNormTolerance)
    throw NormError("cosine index requires unit-norm vectors");
  if (!id_set_.insert(id).second) throw DuplicateIdError("duplicate record id " + std::to_string(id));
  ids_.push_back(id);
  data_.insert(data_.end(), v.values.begin(), v.values.end());
}

void VectorIndex::seal() {
  if (sealed_) return;
  build();
  sealed_ = true;
}

std::span<const float> VectorIndex::vector_at(std::size_t slot) const {
  return std::span<const float>(data_).subspan(slot * dim_, dim_);
}

void VectorIndex::check_query(std::span<const float> query, std::size_t k) const {
  if (!sealed_) throw StateError("index must be sealed before searching");
  if (k == 0) throw ParameterError("k must be positive");
  if (query.size() != dim_)
    throw DimensionError("query dim " + std::to_string(query.size()) + " != index dim " + std::to_string(dim_));
}

double VectorIndex::distance_to(std::size_t slot, std::span<const float> query) const {
  return distance(metric_, vector_at(slot), query);
}

namespace {
constexpr std::string_view kIndexMagic = "CBIX";
constexpr std::uint16_t kIndexVersion = 1;
}  // namespace

std::string VectorIndex::serialize() const {
  if (!sealed_) throw StateError("only sealed indexes can be saved");
  io::ByteWriter w;
  w.bytes(kIndexMagic);
  w.u16(kIndexVersion);
  w.u8(static_cast<std::uint8_t>(kind()));
  w.u8(static_cast<std::uint8_t>(metric_));
  w.u32(static_cast<std::uint32_t>(dim_));
  w.u64(ids_.size());
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    w.u64(ids_[i]);
    for (float x : vector_at(i)) w.f32(x);
  }
  write_section(w);
  const std::uint32_t crc = io::crc32(w.data());
  w.u32(crc);
  return w.take();
}

void VectorIndex::save(const std::string& path) const { io::write_file(path, serialize()); }

std::unique_ptr<VectorIndex> VectorIndex::deserialize(std::string_view bytes, std::size_t ef_search) {
  if (bytes.size() < 4 || bytes.substr(0, 4) != kIndexMagic) throw FormatError("not a CBIX index file");
  if (bytes.size() < 4 + 2 + 1 + 1 + 4 + 8 + 4) throw FormatError("truncated stream");

  const auto body = bytes.substr(0, bytes.size() - 4);
  io::ByteReader tail(bytes.substr(bytes.size() - 4));
  if (tail.u32() != io::crc32(body)) throw FormatError("CRC mismatch: index file is corrupt");

  io::ByteReader r(body);
  r.bytes(4);
  if (r.u16() != kIndexVersion) throw FormatError("unsupported CBIX version");
  const std::uint8_t kind = r.u8();
  const std::uint8_t metric = r.u8();
  if (kind > 1) throw FormatError("unknown index kind " + std::to_string(kind));
  if (metric > 1) throw FormatError("unknown metric " + std::to_string(metric));
  const std::uint32_t dim = r.u32();
  const std::uint64_t count = r.u64();
  if (dim == 0) throw FormatError("index dim is zero");
  if (r.remaining() / (8 + 4ull * dim) < count) throw FormatError("truncated stream");

  HnswParams params;
  params.ef_search = ef_search;
  auto index = make_index(static_cast<IndexKind>(kind), dim, static_cast<Metric>(metric), params);
  EmbeddingVector v;
  v.values.resize(dim);
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::uint64_t id = r.u64();
    for (auto& x : v.values) x = r.f32();
    try {
      index->add(id, v);
    } catch (const Error& e) {
      throw FormatError(std::string("invalid record in index file: ") + e.what());
    }
  }
  index->read_section(r);
  if (r.remaining() != 0) throw FormatError("trailing bytes in index file");
  index->sealed_ = true;
  return index;
}

std::unique_ptr<VectorIndex> VectorIndex::load(const std::string& path, std::size_t ef_search) {
  return deserialize(io::read_file(path), ef_search);
}

std::vector<SearchHit> FlatIndex::search(std::span<const float> query, std::size_t k) const {
  check_query(query, k);
  std::vector<SearchHit> hits;
  hits.reserve(size());
  for (std::size_t i = 0; i < size(); ++i) hits.push_back({ids_[i], distance_to(i, query)});
  const std::size_t keep = std::min(k, hits.size());
  std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(keep), hits.end(), hit_less);
  hits.resize(keep);
  return hits;
}

std::unique_ptr<VectorIndex> make_index(IndexKind kind, std::size_t dim, Metric metric, const HnswParams& params) {
  if (kind == IndexKind::Flat) return std::make_unique<FlatIndex>(dim, metric);
  return std::make_unique<HnswIndex>(dim, metric, params);
}

}  // namespace clonebot
