#include "zsbir/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <thread>

#include "json.hpp"

namespace zsbir {

void RetrievalConfig::validate() const {
  if (candidates < 1) throw ConfigError("retrieval config: candidates must be >= 1");
  for (auto k : k_values) {
    if (k == 0) throw ConfigError("retrieval config: K values must be positive");
  }
}

double cosine(const std::vector<double>& u, const std::vector<double>& v) {
  if (u.size() != v.size()) {
    throw DimensionError("cosine: widths " + std::to_string(u.size()) + " vs " +
                         std::to_string(v.size()));
  }
  double dot = 0.0, nu = 0.0, nv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    nu += u[i] * u[i];
    nv += v[i] * v[i];
  }
  if (nu == 0.0 || nv == 0.0) return 0.0;
  return dot / (std::sqrt(nu) * std::sqrt(nv));
}

QueryResult score_query(const ModelBundle& bundle, std::size_t query_id, std::uint32_t label,
                        const std::vector<double>& sketch_scaled, const Database& database,
                        const RetrievalConfig& config) {
  config.validate();
  if (database.size() == 0) throw DataError("score_query: empty database");
  if (database.labels.size() != database.vectors.size()) {
    throw DataError("score_query: database labels/vectors length mismatch");
  }

  Tensor candidates = bundle.generate_from_prior(sketch_scaled, config.candidates,
                                                 Rng::mix(config.seed, query_id));
  const std::size_t dim = bundle.config().feature_dim;
  std::vector<std::vector<double>> cand_rows(config.candidates);
  for (std::size_t t = 0; t < config.candidates; ++t) {
    cand_rows[t].assign(candidates.data().begin() + static_cast<std::ptrdiff_t>(t * dim),
                        candidates.data().begin() + static_cast<std::ptrdiff_t>((t + 1) * dim));
  }

  const std::size_t n = database.size();
  std::vector<double> best(n, -2.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& cand : cand_rows) {
      best[i] = std::max(best[i], cosine(cand, database.vectors[i]));
    }
  }

  QueryResult result;
  result.query_id = query_id;
  result.label = label;
  result.ranked_indices.resize(n);
  std::iota(result.ranked_indices.begin(), result.ranked_indices.end(), 0);
  std::sort(result.ranked_indices.begin(), result.ranked_indices.end(),
            [&best](std::size_t a, std::size_t b) {
              if (best[a] != best[b]) return best[a] > best[b];
              return a < b;
            });
  result.scores.reserve(n);
  result.relevant.reserve(n);
  for (auto idx : result.ranked_indices) {
    result.scores.push_back(best[idx]);
    result.relevant.push_back(database.labels[idx] == label);
  }
  return result;
}

double precision_at_k(const QueryResult& result, std::size_t k, bool* clamped) {
  if (clamped != nullptr) *clamped = false;
  if (k == 0) throw ContractError("precision_at_k: K must be positive");
  if (k > result.relevant.size()) {
    k = result.relevant.size();
    if (clamped != nullptr) *clamped = true;
  }
  if (k == 0) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < k; ++i) hits += result.relevant[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(k);
}

double average_precision(const QueryResult& result, std::size_t cutoff, bool* no_relevant) {
  if (no_relevant != nullptr) *no_relevant = false;
  const std::size_t total_relevant = static_cast<std::size_t>(
      std::count(result.relevant.begin(), result.relevant.end(), true));
  if (total_relevant == 0) {
    if (no_relevant != nullptr) *no_relevant = true;
    return 0.0;
  }
  const std::size_t limit =
      cutoff == 0 ? result.relevant.size() : std::min(cutoff, result.relevant.size());
  double acc = 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < limit; ++i) {
    if (result.relevant[i]) {
      ++hits;
      acc += static_cast<double>(hits) / static_cast<double>(i + 1);
    }
  }
  const std::size_t norm = cutoff == 0 ? total_relevant : std::min(total_relevant, cutoff);
  return acc / static_cast<double>(norm);
}

EvaluationOutput evaluate(const ModelBundle& bundle,
                          const std::vector<ScaledRecord>& query_sketches,
                          const Database& database, const RetrievalConfig& config,
                          bool keep_rankings) {
  config.validate();
  if (query_sketches.empty()) throw DataError("evaluate: no query sketches");
  if (database.size() == 0) throw DataError("evaluate: empty database");

  const std::size_t n = query_sketches.size();
  std::vector<QueryResult> results(n);

  std::size_t threads = config.threads != 0 ? config.threads
                                            : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, n);
  auto worker = [&](std::size_t first, std::size_t last) {
    for (std::size_t q = first; q < last; ++q) {
      results[q] = score_query(bundle, q, query_sketches[q].label, query_sketches[q].vector,
                               database, config);
    }
  };
  if (threads <= 1) {
    worker(0, n);
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (n + threads - 1) / threads;
    for (std::size_t t = 0; t < threads; ++t) {
      const std::size_t first = t * chunk;
      const std::size_t last = std::min(n, first + chunk);
      if (first >= last) break;
      pool.emplace_back(worker, first, last);
    }
    for (auto& th : pool) th.join();
  }

  EvaluationOutput output;
  MetricsReport& report = output.metrics;
  report.query_count = n;
  report.database_size = database.size();
  report.candidates = config.candidates;

  std::size_t queries_without_relevant = 0;
  report.per_query_ap.reserve(n);
  for (const auto& r : results) {
    bool none = false;
    report.per_query_ap.push_back(average_precision(r, 0, &none));
    queries_without_relevant += none ? 1 : 0;
  }
  report.map_at_all =
      std::accumulate(report.per_query_ap.begin(), report.per_query_ap.end(), 0.0) /
      static_cast<double>(n);

  for (auto k : config.k_values) {
    double p_acc = 0.0, ap_acc = 0.0;
    bool any_clamped = false;
    for (const auto& r : results) {
      bool clamped = false;
      p_acc += precision_at_k(r, k, &clamped);
      any_clamped = any_clamped || clamped;
      ap_acc += average_precision(r, k);
    }
    report.precision_at_k.emplace_back(k, p_acc / static_cast<double>(n));
    report.map_at_k.emplace_back(k, ap_acc / static_cast<double>(n));
    if (any_clamped) {
      report.warnings.push_back("K=" + std::to_string(k) + " clamped to database size " +
                                std::to_string(database.size()));
    }
  }
  if (queries_without_relevant > 0) {
    report.warnings.push_back(std::to_string(queries_without_relevant) +
                              " queries had no relevant database item (AP = 0)");
  }
  if (keep_rankings) output.results = std::move(results);
  return output;
}

std::string metrics_to_json(const MetricsReport& metrics, const std::string& fingerprint) {
  nlohmann::json j;
  j["fingerprint"] = fingerprint;
  j["query_count"] = metrics.query_count;
  j["database_size"] = metrics.database_size;
  j["candidates"] = metrics.candidates;
  j["map_at_all"] = metrics.map_at_all;
  for (const auto& [k, v] : metrics.precision_at_k) {
    j["precision_at_k"][std::to_string(k)] = v;
  }
  for (const auto& [k, v] : metrics.map_at_k) {
    j["map_at_k"][std::to_string(k)] = v;
  }
  j["warnings"] = metrics.warnings;
  return j.dump(2);
}

void dump_rankings_csv(const std::string& path, const std::vector<QueryResult>& results) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open for writing: " + path);
  os << "query_id,rank,db_index,score,relevant\n";
  for (const auto& r : results) {
    for (std::size_t rank = 0; rank < r.ranked_indices.size(); ++rank) {
      os << r.query_id << "," << rank + 1 << "," << r.ranked_indices[rank] << ","
         << r.scores[rank] << "," << (r.relevant[rank] ? 1 : 0) << "\n";
    }
  }
  if (!os) throw IoError("write failed: " + path);
}

}  // namespace zsbir
