#include <algorithm>
#include <cmath>
#include <queue>
#include <unordered_map>

#include "clonebot/binary_io.hpp"
#include "clonebot/error.hpp"
#include "clonebot/rng.hpp"
#include "clonebot/vector_index.hpp"

namespace clonebot {

namespace {
constexpr int kMaxLevel = 255;  // stored as u8
}

HnswIndex::HnswIndex(std::size_t dim, Metric metric, HnswParams params) : VectorIndex(dim, metric), params_(params) {
  if (params_.m < 2) throw ParameterError("HNSW m must be at least 2");
  if (params_.ef_construction == 0 || params_.ef_search == 0) throw ParameterError("HNSW ef values must be positive");
}

void HnswIndex::set_ef_search(std::size_t ef) {
  if (ef == 0) throw ParameterError("ef_search must be positive");
  params_.ef_search = ef;
}

double HnswIndex::node_distance(std::uint32_t a, std::uint32_t b) const {
  return distance(metric(), vector_at(a), vector_at(b));
}

std::vector<HnswIndex::Candidate> HnswIndex::search_layer(std::span<const float> query, std::uint32_t entry,
                                                          std::size_t ef, int level) const {
  std::vector<bool> visited(size(), false);
  std::priority_queue<Candidate, std::vector<Candidate>, std::greater<>> frontier;  // closest first
  std::priority_queue<Candidate> best;                                              // farthest first

  const Candidate start{distance_to(entry, query), entry};
  visited[entry] = true;
  frontier.push(start);
  best.push(start);

  while (!frontier.empty()) {
    const Candidate c = frontier.top();
    if (c.dist > best.top().dist && best.size() >= ef) break;
    frontier.pop();
    for (std::uint32_t nb : links_[c.node][static_cast<std::size_t>(level)]) {
      if (visited[nb]) continue;
      visited[nb] = true;
      const Candidate cand{distance_to(nb, query), nb};
      if (best.size() < ef || cand < best.top()) {
        frontier.push(cand);
        best.push(cand);
        if (best.size() > ef) best.pop();
      }
    }
  }

  std::vector<Candidate> out(best.size());
  for (auto it = out.rbegin(); it != out.rend(); ++it) {
    *it = best.top();
    best.pop();
  }
  return out;
}

std::uint32_t HnswIndex::greedy_descend(std::span<const float> query, int from_level, int to_level) const {
  std::uint32_t cur = entry_;
  double cur_dist = distance_to(cur, query);
  for (int l = from_level; l > to_level; --l) {
    for (bool moved = true; moved;) {
      moved = false;
      for (std::uint32_t nb : links_[cur][static_cast<std::size_t>(l)]) {
        const double d = distance_to(nb, query);
        if (d < cur_dist || (d == cur_dist && nb < cur)) {
          cur = nb;
          cur_dist = d;
          moved = true;
        }
      }
    }
  }
  return cur;
}

// Keeps a candidate only if it is closer to the base than to every neighbor
// already kept, which spreads links across directions.
std::vector<std::uint32_t> HnswIndex::select_neighbors(std::vector<Candidate> candidates, std::size_t max_count) const {
  std::sort(candidates.begin(), candidates.end());
  std::vector<std::uint32_t> kept;
  if (candidates.size() <= max_count) {
    for (const auto& c : candidates) kept.push_back(c.node);
    return kept;
  }
  for (const auto& c : candidates) {
    if (kept.size() >= max_count) break;
    bool good = true;
    for (std::uint32_t r : kept) {
      if (node_distance(c.node, r) < c.dist) {
        good = false;
        break;
      }
    }
    if (good) kept.push_back(c.node);
  }
  return kept;
}

void HnswIndex::insert(std::uint32_t node) {
  const int level = levels_[node];
  links_[node].assign(static_cast<std::size_t>(level) + 1, {});
  if (max_level_ < 0) {
    entry_ = node;
    max_level_ = level;
    return;
  }

  const auto query = vector_at(node);
  std::uint32_t cur = greedy_descend(query, max_level_, level);
  for (int l = std::min(level, max_level_); l >= 0; --l) {
    auto found = search_layer(query, cur, params_.ef_construction, l);
    cur = found.front().node;
    const auto lv = static_cast<std::size_t>(l);
    links_[node][lv] = select_neighbors(found, params_.m);

    for (std::uint32_t nb : links_[node][lv]) {
      auto& back = links_[nb][lv];
      back.push_back(node);
      if (back.size() <= max_links(l)) continue;
      std::vector<Candidate> pool;
      pool.reserve(back.size());
      for (std::uint32_t x : back) pool.push_back({node_distance(nb, x), x});
      back = select_neighbors(std::move(pool), max_links(l));
    }
  }

  if (level > max_level_) {
    entry_ = node;
    max_level_ = level;
  }
}

void HnswIndex::build() {
  const std::size_t n = size();
  levels_.assign(n, 0);
  links_.assign(n, {});
  max_level_ = -1;
  Rng rng(params_.seed);
  const double ml = 1.0 / std::log(static_cast<double>(params_.m));
  for (std::size_t i = 0; i < n; ++i) {
    const double u = 1.0 - rng.uniform01();  // (0, 1]
    levels_[i] = std::min(kMaxLevel, static_cast<int>(std::floor(-std::log(u) * ml)));
  }
  for (std::size_t i = 0; i < n; ++i) insert(static_cast<std::uint32_t>(i));
}

std::vector<SearchHit> HnswIndex::search(std::span<const float> query, std::size_t k) const {
  check_query(query, k);
  if (size() == 0) return {};
  const std::uint32_t ep = greedy_descend(query, max_level_, 0);
  const auto found = search_layer(query, ep, std::max(params_.ef_search, k), 0);

  std::vector<SearchHit> hits;
  hits.reserve(found.size());
  for (const auto& c : found) hits.push_back({ids_[c.node], c.dist});
  std::sort(hits.begin(), hits.end(), hit_less);
  if (hits.size() > k) hits.resize(k);
  return hits;
}

void HnswIndex::write_section(io::ByteWriter& w) const {
  for (std::size_t i = 0; i < size(); ++i) {
    w.u8(static_cast<std::uint8_t>(levels_[i]));
    for (const auto& layer : links_[i]) {
      w.u32(static_cast<std::uint32_t>(layer.size()));
      for (std::uint32_t nb : layer) w.u64(ids_[nb]);
    }
  }
}

void HnswIndex::read_section(io::ByteReader& r) {
  const std::size_t n = size();
  std::unordered_map<std::uint64_t, std::uint32_t> slot;
  slot.reserve(n);
  for (std::size_t i = 0; i < n; ++i) slot.emplace(ids_[i], static_cast<std::uint32_t>(i));

  levels_.assign(n, 0);
  links_.assign(n, {});
  max_level_ = -1;
  for (std::size_t i = 0; i < n; ++i) {
    const int level = r.u8();
    levels_[i] = level;
    links_[i].resize(static_cast<std::size_t>(level) + 1);
    for (auto& layer : links_[i]) {
      const std::uint32_t count = r.u32();
      if (count > n) throw FormatError("HNSW adjacency list longer than the index");
      layer.reserve(count);
      for (std::uint32_t j = 0; j < count; ++j) {
        auto it = slot.find(r.u64());
        if (it == slot.end()) throw FormatError("HNSW link to unknown record id");
        layer.push_back(it->second);
      }
    }
    if (level > max_level_) {
      max_level_ = level;
      entry_ = static_cast<std::uint32_t>(i);
    }
  }
  // Links must only reach nodes that exist on that layer.
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t l = 0; l < links_[i].size(); ++l)
      for (std::uint32_t nb : links_[i][l])
        if (static_cast<std::size_t>(levels_[nb]) < l) throw FormatError("HNSW link above the neighbor's level");
}

}  // namespace clonebot
