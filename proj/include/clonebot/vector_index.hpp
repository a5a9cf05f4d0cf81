#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "clonebot/embedding.hpp"

namespace clonebot {

namespace io {
class ByteWriter;
class ByteReader;
}  // namespace io

enum class Metric : std::uint8_t { L2 = 0, CosineViaDot = 1 };
enum class IndexKind : std::uint8_t { Flat = 0, Hnsw = 1 };

std::string_view metric_name(Metric m);
Metric parse_metric(std::string_view name);  // "l2" | "cosine"
std::string_view index_kind_name(IndexKind k);
IndexKind parse_index_kind(std::string_view name);  // "flat" | "hnsw"

/// Smaller is better under both metrics: Euclidean distance for L2 and
/// max(0, 1 - dot) for CosineViaDot. Accumulated in double precision.
double distance(Metric metric, std::span<const float> a, std::span<const float> b);

/// Unit-norm tolerance enforced when adding under CosineViaDot.
inline constexpr double kUnitNormTolerance = 1e-5;

struct SearchHit {
  std::uint64_t record_id = 0;
  double distance = 0.0;

  friend bool operator==(const SearchHit&, const SearchHit&) = default;
};

/// Ascending distance, ties by ascending record id.
inline bool hit_less(const SearchHit& a, const SearchHit& b) {
  return a.distance < b.distance || (a.distance == b.distance && a.record_id < b.record_id);
}

struct HnswParams {
  std::size_t m = 16;
  std::size_t ef_construction = 200;
  std::size_t ef_search = 64;
  std::uint64_t seed = 42;
};

/// K-nearest-neighbor index with a two-phase life: add() records until
/// seal(), then search() only. A sealed index is immutable and safe for
/// concurrent searches.
///
/// File layout (little-endian): "CBIX" | u16 version=1 | u8 kind | u8 metric
/// | u32 dim | u64 count | count x (u64 id, dim x f32) | kind-specific
/// section | u32 CRC-32 of every preceding byte.
class VectorIndex {
 public:
  VectorIndex(std::size_t dim, Metric metric);
  virtual ~VectorIndex() = default;

  VectorIndex(const VectorIndex&) = delete;
  VectorIndex& operator=(const VectorIndex&) = delete;

  virtual IndexKind kind() const = 0;

  /// Throws StateError after seal(), DimensionError, DuplicateIdError, or
  /// NormError (non-finite, or not unit norm under CosineViaDot).
  void add(std::uint64_t id, const EmbeddingVector& v);
  void seal();

  /// Up to k hits in ascending distance. Throws StateError before seal()
  /// and ParameterError for k == 0. An empty index yields no hits.
  virtual std::vector<SearchHit> search(std::span<const float> query, std::size_t k) const = 0;

  std::size_t dim() const { return dim_; }
  Metric metric() const { return metric_; }
  std::size_t size() const { return ids_.size(); }
  bool sealed() const { return sealed_; }
  const std::vector<std::uint64_t>& record_ids() const { return ids_; }
  std::span<const float> vector_at(std::size_t slot) const;

  std::string serialize() const;
  void save(const std::string& path) const;

  /// Reconstructs either kind. `ef_search` applies to HNSW indexes only.
  static std::unique_ptr<VectorIndex> deserialize(std::string_view bytes, std::size_t ef_search = 64);
  static std::unique_ptr<VectorIndex> load(const std::string& path, std::size_t ef_search = 64);

 protected:
  void check_query(std::span<const float> query, std::size_t k) const;
  double distance_to(std::size_t slot, std::span<const float> query) const;

  virtual void build() {}
  virtual void write_section(io::ByteWriter&) const {}
  virtual void read_section(io::ByteReader&) {}

  std::vector<std::uint64_t> ids_;
  std::vector<float> data_;  // row-major, ids_.size() x dim_

 private:
  std::size_t dim_;
  Metric metric_;
  bool sealed_ = false;
  std::unordered_set<std::uint64_t> id_set_;
};

/// Exact search by full scan.
class FlatIndex final : public VectorIndex {
 public:
  using VectorIndex::VectorIndex;
  IndexKind kind() const override { return IndexKind::Flat; }
  std::vector<SearchHit> search(std::span<const float> query, std::size_t k) const override;
};

/// Hierarchical navigable small-world graph (Malkov & Yashunin) with the
/// neighbor-selection heuristic. The graph is built at seal() by inserting
/// records in add order; node levels come from a seeded Rng so a build is
/// reproducible bit for bit.
///
/// The serialized section stores, per record in add order, its level (u8)
/// and for each layer 0..level a u32 neighbor count followed by the
/// neighbors' u64 record ids. The entry point is the first record holding
/// the top level, which is also how construction picks it.
class HnswIndex final : public VectorIndex {
 public:
  HnswIndex(std::size_t dim, Metric metric, HnswParams params = {});

  IndexKind kind() const override { return IndexKind::Hnsw; }
  std::vector<SearchHit> search(std::span<const float> query, std::size_t k) const override;

  const HnswParams& params() const { return params_; }
  void set_ef_search(std::size_t ef);
  int max_level() const { return max_level_; }
  int level_of(std::size_t slot) const { return levels_[slot]; }
  const std::vector<std::uint32_t>& neighbors(std::size_t slot, int level) const { return links_[slot][level]; }

 protected:
  void build() override;
  void write_section(io::ByteWriter& w) const override;
  void read_section(io::ByteReader& r) override;

 private:
  struct Candidate {
    double dist;
    std::uint32_t node;
    bool operator<(const Candidate& o) const { return dist < o.dist || (dist == o.dist && node < o.node); }
    bool operator>(const Candidate& o) const { return o < *this; }
  };

  double node_distance(std::uint32_t a, std::uint32_t b) const;
  std::vector<Candidate> search_layer(std::span<const float> query, std::uint32_t entry, std::size_t ef,
                                      int level) const;
  std::uint32_t greedy_descend(std::span<const float> query, int from_level, int to_level) const;
  std::vector<std::uint32_t> select_neighbors(std::vector<Candidate> candidates, std::size_t max_count) const;
  void insert(std::uint32_t node);

  std::size_t max_links(int level) const { return level == 0 ? 2 * params_.m : params_.m; }

  HnswParams params_;
  std::vector<int> levels_;
  std::vector<std::vector<std::vector<std::uint32_t>>> links_;  // [node][level] -> neighbors
  std::uint32_t entry_ = 0;
  int max_level_ = -1;
};

std::unique_ptr<VectorIndex> make_index(IndexKind kind, std::size_t dim, Metric metric, const HnswParams& params = {});

}  // namespace clonebot
