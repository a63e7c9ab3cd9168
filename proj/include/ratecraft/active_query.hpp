#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "preference_model.hpp"
#include "reward_net.hpp"
#include "segment.hpp"

namespace ratecraft {

using TicketId = std::uint64_t;

enum class QueryKind { rating, preference };

inline const char* to_string(QueryKind k) { return k == QueryKind::rating ? "rating" : "preference"; }

inline QueryKind query_kind_from_string(const std::string& s) {
  if (s == "rating") return QueryKind::rating;
  if (s == "preference") return QueryKind::preference;
  throw std::invalid_argument("unknown modality '" + s + "'");
}

/// A pending labeling request: one segment to rate or a pair to compare.
struct QueryTicket {
  TicketId id = 0;
  QueryKind kind = QueryKind::rating;
  std::vector<SegmentPtr> segments;  // one for rating, two for preference
  long issued_step = 0;

  nlohmann::json to_json() const {
    nlohmann::json ids = nlohmann::json::array();
    for (const auto& s : segments) ids.push_back(s->id);
    return {{"ticket_id", id}, {"kind", to_string(kind)}, {"segment_ids", ids}, {"issued_step", issued_step}};
  }
};

struct TeacherAnswer {
  TicketId ticket_id = 0;
  int rating_class = -1;
  Side preferred = Side::first;
  double latency_s = 0.0;
};

using CandidatePool = std::vector<SegmentPtr>;

/// Uniform sample of `pool_size` segments without replacement (all of them if
/// the replay is smaller), in replay order.
inline CandidatePool refresh_pool(std::span<const SegmentPtr> replay, std::size_t pool_size, std::uint64_t seed) {
  CandidatePool pool;
  std::mt19937_64 rng(seed);
  std::sample(replay.begin(), replay.end(), std::back_inserter(pool), pool_size, rng);
  return pool;
}

inline double population_stddev(const VectorXd& v) {
  if (v.size() == 0) return 0.0;
  const double mean = v.mean();
  return std::sqrt((v.array() - mean).square().mean());
}

/// Index of the candidate with the largest spread; ties go to the smallest id.
inline std::size_t argmax_disagreement(std::span<const double> spreads, std::span<const SegmentId> ids) {
  if (spreads.empty()) throw std::invalid_argument("no candidates to select from");
  std::size_t best = 0;
  for (std::size_t i = 1; i < spreads.size(); ++i)
    if (spreads[i] > spreads[best] || (spreads[i] == spreads[best] && ids[i] < ids[best])) best = i;
  return best;
}

/// Member returns for every pool segment: row = member, column = segment.
inline MatrixXd pool_returns(const CandidatePool& pool, const RewardEnsemble& ensemble, double gamma) {
  MatrixXd out(static_cast<Eigen::Index>(ensemble.size()), static_cast<Eigen::Index>(pool.size()));
  if (pool.empty()) return out;
  const std::size_t length = pool.front()->length();
  for (std::size_t m = 0; m < ensemble.size(); ++m) {
    MatrixXd x = pack_inputs(ensemble[m], pool);
    out.row(static_cast<Eigen::Index>(m)) = packed_returns(ensemble[m], x, length, gamma).transpose();
  }
  return out;
}

/// Picks up to `count` distinct pool indices in order of decreasing ensemble
/// disagreement on predicted return. With a single member the choice is
/// uniform at random.
inline std::vector<std::size_t> select_rating_indices(const CandidatePool& pool, const RewardEnsemble& ensemble,
                                                      double gamma, std::size_t count, std::mt19937_64& rng) {
  if (pool.empty()) throw std::invalid_argument("cannot select a rating query from an empty pool");
  count = std::min(count, pool.size());
  std::vector<std::size_t> chosen;
  if (ensemble.size() < 2) {
    std::vector<std::size_t> idx(pool.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(count);
    return idx;
  }
  MatrixXd returns = pool_returns(pool, ensemble, gamma);
  std::vector<double> spreads(pool.size());
  std::vector<SegmentId> ids(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) {
    spreads[i] = population_stddev(returns.col(static_cast<Eigen::Index>(i)));
    ids[i] = pool[i]->id;
  }
  for (std::size_t c = 0; c < count; ++c) {
    const std::size_t best = argmax_disagreement(spreads, ids);
    chosen.push_back(best);
    spreads[best] = -1.0;
  }
  return chosen;
}

inline QueryTicket select_rating_query(const CandidatePool& pool, const RewardEnsemble& ensemble, double gamma,
                                       std::mt19937_64& rng, TicketId id = 0, long step = 0) {
  auto idx = select_rating_indices(pool, ensemble, gamma, 1, rng);
  return {id, QueryKind::rating, {pool[idx.front()]}, step};
}

struct CandidatePair {
  std::size_t a = 0;
  std::size_t b = 0;
};

/// `count` random pairs of distinct pool positions.
inline std::vector<CandidatePair> sample_pairs(std::size_t pool_size, std::size_t count, std::mt19937_64& rng) {
  if (pool_size < 2) throw std::invalid_argument("preference queries need at least two pool segments");
  std::uniform_int_distribution<std::size_t> u(0, pool_size - 1);
  std::vector<CandidatePair> pairs;
  pairs.reserve(count);
  while (pairs.size() < count) {
    const std::size_t a = u(rng);
    const std::size_t b = u(rng);
    if (a != b) pairs.push_back({a, b});
  }
  return pairs;
}

/// Spread across members of P(a preferred over b).
inline double preference_disagreement(const MatrixXd& returns, const CandidatePair& p) {
  VectorXd probs(returns.rows());
  for (Eigen::Index m = 0; m < returns.rows(); ++m)
    probs[m] = preference_probability(returns(m, static_cast<Eigen::Index>(p.a)), returns(m, static_cast<Eigen::Index>(p.b)));
  return population_stddev(probs);
}

/// Orders candidate pairs by decreasing disagreement, ties by the sorted id
/// pair, and returns the first `count` with no segment reused.
inline std::vector<CandidatePair> select_preference_pairs(const CandidatePool& pool, const RewardEnsemble& ensemble,
                                                          double gamma, std::size_t candidates, std::size_t count,
                                                          std::mt19937_64& rng) {
  if (pool.size() < 2) throw std::invalid_argument("preference queries need at least two pool segments");
  auto pairs = sample_pairs(pool.size(), std::max<std::size_t>(candidates, 1), rng);
  if (ensemble.size() < 2) {
    if (pairs.size() > count) pairs.resize(count);
    return pairs;
  }
  MatrixXd returns = pool_returns(pool, ensemble, gamma);
  struct Scored {
    double spread;
    SegmentId lo, hi;
    CandidatePair pair;
  };
  std::vector<Scored> scored;
  for (const auto& p : pairs) {
    SegmentId x = pool[p.a]->id, y = pool[p.b]->id;
    scored.push_back({preference_disagreement(returns, p), std::min(x, y), std::max(x, y), p});
  }
  std::stable_sort(scored.begin(), scored.end(), [](const Scored& l, const Scored& r) {
    if (l.spread != r.spread) return l.spread > r.spread;
    return std::pair(l.lo, l.hi) < std::pair(r.lo, r.hi);
  });
  std::vector<CandidatePair> out;
  std::vector<bool> used(pool.size(), false);
  for (const auto& s : scored) {
    if (out.size() == count) break;
    if (used[s.pair.a] || used[s.pair.b]) continue;
    used[s.pair.a] = used[s.pair.b] = true;
    out.push_back(s.pair);
  }
  return out;
}

inline QueryTicket select_preference_query(const CandidatePool& pool, const RewardEnsemble& ensemble, double gamma,
                                           std::size_t candidates, std::mt19937_64& rng, TicketId id = 0,
                                           long step = 0) {
  auto pairs = select_preference_pairs(pool, ensemble, gamma, candidates, 1, rng);
  return {id, QueryKind::preference, {pool[pairs.front().a], pool[pairs.front().b]}, step};
}

}  // namespace ratecraft
